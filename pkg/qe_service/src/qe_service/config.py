from __future__ import annotations

from dataclasses import dataclass

DEFAULT_MODEL = "hashed-lexical:256"


@dataclass(frozen=True)
class ServiceConfig:
    """Startup configuration; the model loads once and never changes."""

    model: str = DEFAULT_MODEL
    device: str = "cpu"
    max_batch_size: int = 32
    port: int = 8077

    def __post_init__(self):
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")
        if not 0 < self.port < 65536:
            raise ValueError("port must be a valid TCP port")
