import argparse

import uvicorn

from .app import create_app
from .config import DEFAULT_MODEL, ServiceConfig


def main() -> None:
    parser = argparse.ArgumentParser(description="QE scoring/embedding service")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help='Model identifier: "hashed-lexical:<dim>" or "sbert:<checkpoint>"')
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch-size", type=int, default=32)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8077)
    args = parser.parse_args()
    config = ServiceConfig(
        model=args.model, device=args.device, max_batch_size=args.max_batch_size, port=args.port
    )
    uvicorn.run(create_app(config), host=args.host, port=config.port, log_level="warning")


if __name__ == "__main__":
    main()
