"""Network configuration and Rayleigh channel generation."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# Stream tags mixed into the (seed, trial) key so channel draws and link-level
# noise never share random numbers.
STREAM_CHANNEL = 0
STREAM_LINK = 1


class ConfigError(ValueError):
    """Invalid network or experiment configuration."""


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class NetworkConfig:
    """Antenna counts and noise-normalised power budgets.

    ``ps`` and ``ploc`` are linear powers relative to unit noise power, so
    the receive SNR at the relays is ``ps`` itself.
    """

    ns: int
    nd: int
    nr: int
    k: int
    ps: float
    ploc: float

    def __post_init__(self):
        for name in ("ns", "nd", "nr", "k"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not self.ps > 0:
            raise ConfigError(f"ps must be positive, got {self.ps!r}")
        if not self.ploc > 0:
            raise ConfigError(f"ploc must be positive, got {self.ploc!r}")
        if self.nd < self.ns:
            raise ConfigError(f"nd must be >= ns (got nd={self.nd}, ns={self.ns})")

    @property
    def m(self):
        """Number of spatial streams, min(ns, nd)."""
        return min(self.ns, self.nd)

    @property
    def sigma_x2(self):
        """Per-stream symbol power under equal power allocation."""
        return self.ps / self.ns

    @classmethod
    def from_db(cls, ns, nd, nr, k, ps_db, ploc_db=5.0):
        return cls(ns, nd, nr, k, db_to_linear(ps_db), db_to_linear(ploc_db))


class AntennaPair(NamedTuple):
    """Backward antenna ``m`` and forward antenna ``n`` on relay ``k``."""

    relay: int
    backward_antenna: int
    forward_antenna: int


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of every relay's channels.

    ``backward`` has shape (K, Nr, Ns): ``backward[k]`` is H_k.
    ``forward`` has shape (K, Nd, Nr): ``forward[k]`` is G_k.
    """

    backward: np.ndarray
    forward: np.ndarray

    def __post_init__(self):
        if self.backward.ndim != 3 or self.forward.ndim != 3:
            raise ValueError("backward and forward must be 3-D stacks")
        if self.backward.shape[0] != self.forward.shape[0]:
            raise ValueError("backward and forward must cover the same relays")
        if self.backward.shape[1] != self.forward.shape[2]:
            raise ValueError("relay antenna counts disagree between hops")

    @property
    def k(self):
        return self.backward.shape[0]

    def h(self, pair):
        """Backward row vector (length Ns) of a pair."""
        return self.backward[pair.relay, pair.backward_antenna, :]

    def g(self, pair):
        """Forward column vector (length Nd) of a pair."""
        return self.forward[pair.relay, :, pair.forward_antenna]


def rng_for(seed, trial, stream=STREAM_CHANNEL, *extra):
    """Independent generator keyed by (seed, trial, stream, ...).

    Keys are fed to ``SeedSequence`` so any two distinct keys give
    statistically independent streams and the result depends on nothing
    but the key.
    """
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(trial), int(stream), *map(int, extra)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def complex_gaussian(rng, shape):
    """Unit-variance circularly symmetric complex Gaussian samples."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * np.sqrt(0.5)


def draw_network(config, seed, trial):
    rng = rng_for(seed, trial, STREAM_CHANNEL)
    backward = complex_gaussian(rng, (config.k, config.nr, config.ns))
    forward = complex_gaussian(rng, (config.k, config.nd, config.nr))
    return ChannelRealization(backward, forward)


def candidate_pairs(config):
    """All K*Nr^2 antenna pairs in (relay, backward, forward) order."""
    return [
        AntennaPair(k, m, n)
        for k in range(config.k)
        for m in range(config.nr)
        for n in range(config.nr)
    ]
