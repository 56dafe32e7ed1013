"""Condition vectors for the denoiser.

Any callable returning a fixed-width float vector works as a provider. The
default is a bag-of-words feature hasher, so the pipeline needs no
pretrained text or image encoders.
"""
from __future__ import annotations

import hashlib
import re
from typing import Protocol, Sequence

import numpy as np

_WORD = re.compile(r"[a-z0-9']+")


class ConditionProvider(Protocol):
    dim: int

    def __call__(self, text: str) -> np.ndarray: ...


class HashingTextEmbedder:
    """Signed feature hashing of unigrams and bigrams, L2-normalised."""

    def __init__(self, dim: int = 512, bigrams: bool = True):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.bigrams = bigrams

    def _features(self, text: str):
        words = _WORD.findall(text.lower())
        feats = list(words)
        if self.bigrams:
            feats += [f"{a} {b}" for a, b in zip(words, words[1:])]
        return feats

    def __call__(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        for feat in self._features(text):
            h = int.from_bytes(hashlib.blake2b(feat.encode(), digest_size=8).digest(), "little")
            v[h % self.dim] += 1.0 if (h >> 63) & 1 else -1.0
        n = np.linalg.norm(v)
        return v / n if n > 0 else v

    def batch(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self(t) for t in texts]) if texts else np.zeros((0, self.dim))
