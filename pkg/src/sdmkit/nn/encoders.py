"""Encoder registry and the built-in micro architectures.

Three small built-ins keep the full pipeline runnable with no network
access: a 2-D conv stack for raster patches, a cube encoder treating the
band axis as channels over the (steps, years) plane, and an MLP for flat
vectors. External providers plug in via register_encoder.
"""

from __future__ import annotations

import numpy as np

from ..errors import RegistryError
from .layers import Conv2d, Flatten, GlobalAvgPool2d, Linear, Module, ReLU, Sequential


class Encoder(Sequential):
    """Sequential feature extractor exposing its embedding width."""

    def __init__(self, layers, embedding_dim: int, input_channels: int):
        super().__init__(layers)
        self.embedding_dim = embedding_dim
        self.input_channels = input_channels


class CubeEncoder(Encoder):
    """Encoder for (N, B, Q, Y) cube batches; bands act as conv channels."""

    def forward(self, x, training=False):
        return super().forward(x, training=training)


def _micro_conv2d(input_channels: int, embedding_dim: int, rng: np.random.Generator):
    # two stride-2 convs then pooled linear head; expects side >= 7
    return Encoder(
        [
            Conv2d(input_channels, 8, 3, 2, rng),
            ReLU(),
            Conv2d(8, 16, 3, 2, rng),
            ReLU(),
            GlobalAvgPool2d(),
            Linear(16, embedding_dim, rng),
        ],
        embedding_dim=embedding_dim,
        input_channels=input_channels,
    )


def _micro_conv3d(input_channels: int, embedding_dim: int, rng: np.random.Generator,
                  steps: int = 4, years: int = 3):
    kh, kw = min(3, steps), min(3, years)
    return CubeEncoder(
        [
            Conv2d(input_channels, 8, (kh, kw), 1, rng),
            ReLU(),
            GlobalAvgPool2d(),
            Linear(8, embedding_dim, rng),
        ],
        embedding_dim=embedding_dim,
        input_channels=input_channels,
    )


def _micro_mlp(input_channels: int, embedding_dim: int, rng: np.random.Generator):
    # input_channels doubles as the flattened input width
    return Encoder(
        [
            Flatten(),
            Linear(input_channels, 128, rng),
            ReLU(),
            Linear(128, embedding_dim, rng),
        ],
        embedding_dim=embedding_dim,
        input_channels=input_channels,
    )


_REGISTRY: dict[tuple[str, str], object] = {
    ("builtin", "micro_conv2d"): _micro_conv2d,
    ("builtin", "micro_conv3d"): _micro_conv3d,
    ("builtin", "micro_mlp"): _micro_mlp,
}


def register_encoder(provider: str, name: str, factory) -> None:
    _REGISTRY[(provider, name)] = factory


def available_encoders() -> list[tuple[str, str]]:
    return sorted(_REGISTRY)


def build_encoder(provider: str, name: str, input_channels: int, embedding_dim: int,
                  rng: np.random.Generator | None = None, **kwargs) -> Encoder:
    """Build a registered encoder; unknown names list what is available."""
    try:
        factory = _REGISTRY[(provider, name)]
    except KeyError:
        raise RegistryError(
            f"unknown encoder ({provider!r}, {name!r}); available: {available_encoders()}"
        ) from None
    if rng is None:
        rng = np.random.default_rng(0)
    return factory(input_channels, embedding_dim, rng, **kwargs)


class SinusoidalLocationEncoder(Module):
    """Deterministic location encoder: multi-frequency sin/cos features of
    (lon, lat) in radians through a seeded affine map."""

    def __init__(self, embedding_dim: int, num_frequencies: int, seed: int = 0):
        super().__init__()
        if embedding_dim < 1 or num_frequencies < 1:
            raise ValueError("embedding_dim and num_frequencies must be >= 1")
        self.embedding_dim = embedding_dim
        self.num_frequencies = num_frequencies
        self.input_channels = 2
        rng = np.random.default_rng(seed)
        feat_dim = 4 * num_frequencies
        from .layers import fanin_uniform

        self.params["w"] = fanin_uniform(rng, (embedding_dim, feat_dim), feat_dim)
        self.params["b"] = fanin_uniform(rng, (embedding_dim,), feat_dim)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def features(self, coords: np.ndarray) -> np.ndarray:
        lam = np.radians(coords[:, 0:1])
        phi = np.radians(coords[:, 1:2])
        parts = []
        for j in range(self.num_frequencies):
            f = 2.0**j
            parts.extend([np.sin(f * lam), np.cos(f * lam), np.sin(f * phi), np.cos(f * phi)])
        return np.concatenate(parts, axis=1)

    def forward(self, coords, training=False):
        self._feats = self.features(np.asarray(coords, dtype=np.float64))
        return self._feats @ self.params["w"].T + self.params["b"]

    def backward(self, dout):
        self.grads["w"] = dout.T @ self._feats
        self.grads["b"] = dout.sum(axis=0)
        return np.zeros((dout.shape[0], 2))  # coordinates are not trainable

    def encode(self, lon: float, lat: float) -> np.ndarray:
        return self.forward(np.array([[lon, lat]]))[0]


def sinusoidal_location_encoder(embedding_dim: int, num_frequencies: int,
                                seed: int = 0) -> SinusoidalLocationEncoder:
    return SinusoidalLocationEncoder(embedding_dim, num_frequencies, seed)


def _location_factory(input_channels, embedding_dim, rng, num_frequencies=8):
    seed = int(rng.integers(0, 2**31 - 1))
    return SinusoidalLocationEncoder(embedding_dim, num_frequencies, seed)


register_encoder("builtin", "sinusoidal_location", _location_factory)
