"""System parameters and deterministic random streams.

All randomness in the package flows through :func:`derive_stream`, which maps
``(seed, purpose, rb, slot)`` to an independent counter-based generator. A
run therefore reproduces bit-exactly no matter in which order (or on which
worker) the per-RB work is evaluated.
"""

from __future__ import annotations

import dataclasses
import json
import math
import zlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

__all__ = [
    "InvalidConfig",
    "SystemConfig",
    "validate_config",
    "derive_stream",
    "load_config",
    "save_config",
]


class InvalidConfig(ValueError):
    """Raised when a :class:`SystemConfig` violates a model constraint."""


@dataclass(frozen=True)
class SystemConfig:
    """Protocol and PHY parameters of a multi-RB compressive random access system.

    Parameters
    ----------
    L : int
        Spreading-code length, i.e. subcarriers per resource block.
    N : int
        Spreading codes per RB (``N >= L``).
    M : int
        Number of resource blocks.
    T : int
        Symbols per packet.
    D : int
        Recovery threshold of the multiuser detector (``1 <= D < L``).
    Kbar : int
        Rate-control threshold; new arrivals to an RB are dropped in the next
        slot when its load exceeds it (``Kbar > D``).
    lam : float
        New-arrival rate per RB per slot.
    snr_db : float
        P/N0 in dB with P normalised to one.
    slots : int
        Simulation horizon.
    seed : int
        Master seed (unsigned 64-bit).
    """

    L: int = 32
    N: int = 320
    M: int = 8
    T: int = 640
    D: int = 25
    Kbar: int = 64
    lam: float = 0.0
    snr_db: float = 20.0
    slots: int = 10_000
    seed: int = 0

    def __post_init__(self):
        validate_config(self)

    @property
    def eta(self) -> float:
        """Virtual bandwidth expansion factor N/L."""
        return self.N / self.L

    @property
    def J(self) -> int:
        """Total number of subcarriers."""
        return self.L * self.M

    @property
    def noise_var(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """Field mapping with ``lam`` stored under its file key ``lambda``."""
        data = dataclasses.asdict(self)
        data["lambda"] = data.pop("lam")
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


_INT_FIELDS = ("L", "N", "M", "T", "D", "Kbar", "slots", "seed")


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Check every model constraint; return ``cfg`` unchanged or raise."""
    for name in _INT_FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise InvalidConfig(f"{name} must be an integer, got {value!r}")
    for name in ("L", "N", "M", "T", "slots"):
        if getattr(cfg, name) < 1:
            raise InvalidConfig(f"{name} must be positive")
    if not 0 <= cfg.seed < 2**64:
        raise InvalidConfig("seed must fit in an unsigned 64-bit integer")
    if cfg.N < cfg.L:
        raise InvalidConfig(f"N < L ({cfg.N} < {cfg.L}): eta must be >= 1")
    if cfg.D < 1:
        raise InvalidConfig("D must be >= 1")
    if cfg.D >= cfg.L:
        raise InvalidConfig(f"D >= L ({cfg.D} >= {cfg.L})")
    if cfg.Kbar <= cfg.D:
        raise InvalidConfig(f"Kbar <= D ({cfg.Kbar} <= {cfg.D})")
    if not (math.isfinite(cfg.lam) and cfg.lam >= 0):
        raise InvalidConfig("lam must be a finite nonnegative number")
    if not math.isfinite(cfg.snr_db):
        raise InvalidConfig("snr_db must be finite")
    return cfg


def load_config(path) -> SystemConfig:
    """Read a flat JSON object whose keys are exactly SystemConfig field names."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise InvalidConfig("config file must hold a flat key-value object")
    return SystemConfig.from_dict(data)


def save_config(cfg: SystemConfig, path) -> None:
    Path(path).write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


@lru_cache(maxsize=1024)
def _stream_key(seed: int, purpose: str) -> tuple:
    tag = zlib.crc32(purpose.encode("utf-8"))
    key = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag,)).generate_state(2, np.uint64)
    return tuple(int(k) for k in key)


def derive_stream(seed: int, purpose: str, rb: int = 0, slot: int = 0) -> np.random.Generator:
    """Return the Philox generator owned by ``(purpose, rb, slot)`` under ``seed``.

    The Philox key is hashed from ``(seed, purpose)``; ``rb`` and ``slot``
    occupy the upper two words of the 256-bit counter, so every id owns a
    disjoint block of the counter space and the result is a pure function of
    the arguments.
    """
    if rb < 0 or slot < 0:
        raise ValueError("rb and slot must be nonnegative")
    key = np.array(_stream_key(int(seed), purpose), dtype=np.uint64)
    counter = np.array([0, 0, rb, slot], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))
