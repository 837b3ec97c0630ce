"""Agent memory: a short-term window, summaries, and embedded experiences.

Long-term entries carry a deterministic feature-hashing embedding (default
4096 dimensions, unit-normalized); retrieval ranks stored entries by cosine
similarity with recency only as a tie-breaker, never as a score term.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

EMBEDDING_DIM = 4096
SHORT_TERM_LIMIT = 20
DEFAULT_TOP_K = 5

CHUNK_SIZE = 512
CHUNK_OVERLAP = 64

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def embed(text: str, dim: int = EMBEDDING_DIM) -> np.ndarray:
    """Deterministic bag-of-tokens feature-hashing embedding, L2-normalized.

    The empty (token-free) string maps to the zero vector; cosine similarity
    against it is defined as 0.
    """
    vec = np.zeros(dim, dtype=np.float64)
    tokens = _TOKEN_RE.findall(text.lower())
    for token in tokens:
        digest = hashlib.blake2b(token.encode(), digest_size=8).digest()
        value = int.from_bytes(digest, "big")
        index = value % dim
        sign = 1.0 if (value >> 63) & 1 else -1.0
        vec[index] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def chunk_text(text: str, size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP) -> list[str]:
    """Fixed-length chunking with a small overlap for boundary robustness."""
    if not text:
        return []
    if len(text) <= size:
        return [text]
    chunks = []
    step = size - overlap
    for start in range(0, len(text), step):
        chunk = text[start:start + size]
        chunks.append(chunk)
        if start + size >= len(text):
            break
    return chunks


@dataclass
class ReflectionEntry:
    text: str
    turn_range: tuple[int, int]
    key_actions: tuple[str, ...]
    outcome: str
    embedding: np.ndarray
    order: int  # insertion counter; used only to break similarity ties

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "turn_range": list(self.turn_range),
            "key_actions": list(self.key_actions),
            "outcome": self.outcome,
            "order": self.order,
        }


@dataclass
class AgentMemory:
    """Short-term window (most recent 20 lines) plus embedded long-term store."""

    dim: int = EMBEDDING_DIM
    short_term: list[str] = field(default_factory=list)
    long_term: list[ReflectionEntry] = field(default_factory=list)
    summaries: list[str] = field(default_factory=list)
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def add_line(self, line: str) -> None:
        """Record a dialogue/action line; overflow is summarized, never lost."""
        self.short_term.append(line)
        while len(self.short_term) > SHORT_TERM_LIMIT:
            evicted = self.short_term.pop(0)
            self.summaries.append(evicted[:100])

    def add_entry(self, text: str, turn_range: tuple[int, int] = (0, 0),
                  key_actions: tuple[str, ...] = (), outcome: str = "") -> ReflectionEntry:
        entry = ReflectionEntry(
            text=text,
            turn_range=turn_range,
            key_actions=key_actions,
            outcome=outcome,
            embedding=embed(text, self.dim),
            order=len(self.long_term),
        )
        self.long_term.append(entry)
        self._matrix = None
        return entry

    def store_text(self, text: str, turn_range: tuple[int, int] = (0, 0)) -> list[ReflectionEntry]:
        """Chunk and store free text (knowledge import), one entry per chunk."""
        return [self.add_entry(chunk, turn_range=turn_range) for chunk in chunk_text(text)]

    def digest(self, query: str, k: int = DEFAULT_TOP_K) -> dict:
        """The memory view advisors receive inside a decision context."""
        return {
            "retrieved": [e.text for e in retrieve_experiences(self, query, k)],
            "short_term": list(self.short_term),
            "summaries": list(self.summaries[-10:]),
        }

    def _embedding_matrix(self) -> np.ndarray:
        if self._matrix is None or len(self._matrix) != len(self.long_term):
            if self.long_term:
                self._matrix = np.stack([e.embedding for e in self.long_term])
            else:
                self._matrix = np.zeros((0, self.dim), dtype=np.float64)
        return self._matrix


def retrieve_experiences(memory: AgentMemory, query_text: str,
                         k: int = DEFAULT_TOP_K) -> list[ReflectionEntry]:
    """Top-k entries by cosine similarity; ties broken by recency (newest first)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not memory.long_term:
        return []
    query = embed(query_text, memory.dim)
    if float(np.linalg.norm(query)) == 0.0:
        scores = np.zeros(len(memory.long_term))
    else:
        scores = memory._embedding_matrix() @ query
    ranked = sorted(
        range(len(memory.long_term)),
        key=lambda i: (-round(float(scores[i]), 12), -memory.long_term[i].order),
    )
    return [memory.long_term[i] for i in ranked[:k]]
