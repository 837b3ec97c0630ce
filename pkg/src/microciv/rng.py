"""Named deterministic random streams with JSON-serializable state.

Game state carries one :class:`RngState` holding independently seeded PCG64
streams keyed by a consumption-point name (``"mapgen"``, ``"spawn"``, ...).
Naming every consumption point keeps replays exact: adding a new random draw
in one subsystem never shifts the sequence seen by another.
"""

from __future__ import annotations

import hashlib
from typing import Any, Sequence, TypeVar

import numpy as np

T = TypeVar("T")


def _derive_seed(master_seed: int, name: str) -> int:
    digest = hashlib.blake2b(f"{master_seed}:{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class RngStream:
    """A single PCG64 stream exposing the few draw shapes the engine needs."""

    def __init__(self, seed: int | None = None):
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in the inclusive range [lo, hi]."""
        return int(self._gen.integers(lo, hi + 1))

    def random(self) -> float:
        return float(self._gen.random())

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def choice(self, seq: Sequence[T]) -> T:
        if not seq:
            raise IndexError("choice from empty sequence")
        return seq[self.randint(0, len(seq) - 1)]

    def weighted_choice(self, items: Sequence[T], weights: Sequence[float]) -> T:
        total = float(sum(weights))
        x = self.random() * total
        acc = 0.0
        for item, w in zip(items, weights):
            acc += w
            if x < acc:
                return item
        return items[-1]

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates shuffle driven by this stream."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(0, i)
            seq[i], seq[j] = seq[j], seq[i]

    def state_dict(self) -> dict[str, Any]:
        st = self._gen.bit_generator.state
        return {
            "state": int(st["state"]["state"]),
            "inc": int(st["state"]["inc"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    @classmethod
    def from_state(cls, d: dict[str, Any]) -> "RngStream":
        stream = cls(0)
        stream._gen.bit_generator.state = {
            "bit_generator": "PCG64",
            "state": {"state": int(d["state"]), "inc": int(d["inc"])},
            "has_uint32": int(d["has_uint32"]),
            "uinteger": int(d["uinteger"]),
        }
        return stream


class RngState:
    """All named streams of one game. Streams are created lazily on first use."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams: dict[str, RngStream] = {}

    def stream(self, name: str) -> RngStream:
        if name not in self._streams:
            self._streams[name] = RngStream(_derive_seed(self.master_seed, name))
        return self._streams[name]

    def state_dict(self) -> dict[str, Any]:
        return {
            "master_seed": self.master_seed,
            "streams": {name: s.state_dict() for name, s in sorted(self._streams.items())},
        }

    @classmethod
    def from_state(cls, d: dict[str, Any]) -> "RngState":
        rng = cls(int(d["master_seed"]))
        for name, st in d.get("streams", {}).items():
            rng._streams[name] = RngStream.from_state(st)
        return rng
