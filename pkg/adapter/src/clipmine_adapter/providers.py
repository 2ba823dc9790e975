"""Embedding providers: pluggable models producing fixed-width unit vectors.

The default provider needs no downloaded weights: it summarizes an image as
a small pixel signature and pushes it through a fixed-seed Gaussian
projection. Weak compared to a trained retrieval model, but deterministic,
offline, and close-under-near-duplication, which is what the mining
pipeline exploits. Register a real model with register_provider when one is
available; match thresholds must be re-calibrated per provider (the
pipeline's sweep subcommand exists for that).
"""

from __future__ import annotations

from typing import Callable, Protocol

import cv2
import numpy as np

#: Seed of the shared projection matrix. Changing it changes every embedding
#: ever produced by the pixel provider; never bump without re-mining.
_PROJECTION_SEED = 0x5EED_CA57

#: Pixel signature geometry: 16x16 RGB grid plus a bias term.
_GRID = 16
_N_FEATURES = _GRID * _GRID * 3 + 1


class ProviderError(ValueError):
    """Unknown model identifier or unusable target dimension."""


class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed(self, images: list[np.ndarray]) -> np.ndarray:
        """BGR uint8 images -> (n, dim) float32 rows, each unit-normalized."""
        ...


class PixelProjectionProvider:
    """Deterministic pixel-signature embedder with a seeded projection."""

    name = "pixel"

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ProviderError(f"target dimension must be >= 1, got {dim}")
        self.dim = dim
        rng = np.random.default_rng(_PROJECTION_SEED)
        self._projection = rng.standard_normal((_N_FEATURES, dim)) / np.sqrt(
            _N_FEATURES
        )

    def _signature(self, image: np.ndarray) -> np.ndarray:
        if image.ndim == 2:
            image = cv2.cvtColor(image, cv2.COLOR_GRAY2BGR)
        small = cv2.resize(image, (_GRID, _GRID), interpolation=cv2.INTER_AREA)
        pixels = small.astype(np.float64).reshape(-1) / 255.0
        pixels -= pixels.mean()  # brightness invariance
        return np.concatenate([pixels, [1.0]])

    def embed(self, images: list[np.ndarray]) -> np.ndarray:
        if not images:
            return np.empty((0, self.dim), dtype=np.float32)
        signatures = np.stack([self._signature(img) for img in images])
        projected = signatures @ self._projection
        norms = np.sqrt(np.sum(projected * projected, axis=1, keepdims=True))
        if np.any(norms == 0.0):
            raise ProviderError("projection produced a zero vector")
        return (projected / norms).astype(np.float32)


_REGISTRY: dict[str, Callable[[int], EmbeddingProvider]] = {
    "pixel": PixelProjectionProvider,
}

DEFAULT_MODEL = "pixel"


def register_provider(name: str, factory: Callable[[int], EmbeddingProvider]) -> None:
    _REGISTRY[name] = factory


def get_provider(model: str, dim: int) -> EmbeddingProvider:
    factory = _REGISTRY.get(model)
    if factory is None:
        raise ProviderError(
            f"unknown model {model!r}; known: {sorted(_REGISTRY)}"
        )
    provider = factory(dim)
    if provider.dim != dim:
        raise ProviderError(
            f"model {model!r} produces width {provider.dim}, job wants {dim}"
        )
    return provider
