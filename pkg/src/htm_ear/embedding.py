"""Deterministic text embeddings and the inner-product similarity.

The default provider is signed feature hashing: every token is mapped to a
bucket in ``[0, dim)`` and a sign in ``{-1, +1}`` by a fixed 64-bit digest,
counts are accumulated and the vector is L2-normalised. Because vectors are
unit length, the inner product equals cosine similarity.
"""

from __future__ import annotations

import hashlib
import re
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Optional, Protocol

import numpy as np

from .errors import DimensionMismatch, EmptyText, FileUnreadable

DEFAULT_DIM = 64

_SPLIT = re.compile(r"[^\w\-:.]+")
_EDGE = "-:._"


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into tokens.

    Separators are any characters other than letters, digits, ``-``, ``_``,
    ``:`` and ``.``, so log identifiers such as ``R02-M1-N0-C:J12-U11`` stay
    whole. Leading/trailing ``-:._`` are trimmed from each token so sentence
    punctuation does not leak into the vocabulary.
    """
    out = []
    for raw in _SPLIT.split(text.lower()):
        tok = raw.strip(_EDGE)
        if tok:
            out.append(tok)
    return out


@lru_cache(maxsize=1 << 18)
def _token_hash(token: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little"
    )


class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, text: str, key: Optional[str] = None) -> np.ndarray:
        ...


class HashingEmbedder:
    """Signed feature-hashing embedder.

    ``key`` is accepted for interface compatibility with providers that look
    vectors up by record id; it is ignored here.
    """

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim

    def embed(self, text: str, key: Optional[str] = None) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyText(f"no tokens in {text!r}")
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            h = _token_hash(tok)
            sign = 1.0 if (h >> 63) & 1 else -1.0
            vec[h % self.dim] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # every token cancelled out; fall back to the first token alone
            h = _token_hash(tokens[0])
            vec[h % self.dim] = 1.0 if (h >> 63) & 1 else -1.0
            norm = 1.0
        return vec / norm


class PrecomputedEmbeddings:
    """Vectors loaded from a ``<id>\\t<v1>,<v2>,...`` file, keyed by record id.

    Missing keys are delegated to ``fallback`` when one is given.
    """

    def __init__(
        self,
        vectors: Mapping[str, np.ndarray],
        fallback: Optional[EmbeddingProvider] = None,
    ) -> None:
        dims = {v.shape[0] for v in vectors.values()}
        if len(dims) > 1:
            raise DimensionMismatch(f"mixed dimensions in vector table: {sorted(dims)}")
        if dims:
            self.dim = dims.pop()
        elif fallback is not None:
            self.dim = fallback.dim
        else:
            raise ValueError("empty vector table and no fallback provider")
        if fallback is not None and fallback.dim != self.dim:
            raise DimensionMismatch(f"fallback dim {fallback.dim} != table dim {self.dim}")
        self._vectors = dict(vectors)
        self._fallback = fallback

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def embed(self, text: str, key: Optional[str] = None) -> np.ndarray:
        if key is not None and key in self._vectors:
            return self._vectors[key]
        if self._fallback is None:
            raise KeyError(f"no precomputed vector for {key!r}")
        return self._fallback.embed(text, key)

    @classmethod
    def load(
        cls,
        path: str | Path,
        fallback: Optional[EmbeddingProvider] = None,
        tol: float = 1e-3,
    ) -> "PrecomputedEmbeddings":
        """Read a vector file, rejecting rows whose norm is off by more than ``tol``."""
        vectors: dict[str, np.ndarray] = {}
        try:
            fh = open(path, encoding="utf-8")
        except OSError as exc:
            raise FileUnreadable(str(exc)) from exc
        with fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                key, sep, payload = line.partition("\t")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: missing tab separator")
                vec = np.array([float(x) for x in payload.split(",")], dtype=np.float64)
                norm = float(np.linalg.norm(vec))
                if abs(norm - 1.0) > tol:
                    raise ValueError(f"{path}:{lineno}: vector norm {norm:.6f} is not unit")
                vectors[key] = vec / norm
        return cls(vectors, fallback=fallback)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key, vec in self._vectors.items():
                fh.write(key + "\t" + ",".join(repr(float(x)) for x in vec) + "\n")


def similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Inner product of two embeddings."""
    if u.shape != v.shape:
        raise DimensionMismatch(f"{u.shape} vs {v.shape}")
    return float(np.dot(u, v))
