"""Uplink primitives: Rayleigh block fading, AWGN, deep-fade masks and power
factor negotiation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


class _Unbounded:
    """Power factor of an agent whose signal is all zeros: any scale is feasible."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __reduce__(self):
        return (_Unbounded, ())


UNBOUNDED = _Unbounded()


class DeepFadeError(ValueError):
    """A deep-faded gain reached a computation that requires channel inversion."""


@dataclass(frozen=True)
class RadioConfig:
    subcarriers: int = 128
    bandwidth_hz: float = 15e3  # per subcarrier
    slot_s: float = 1e-3
    noise_psd: float = 1e-3 / 15e3  # W/Hz, so noise power N_0*W is 1 mW
    power_w: float = 1e-3  # per-agent max transmit power
    epsilon: float = 0.2  # deep-fade threshold on |h|^2

    def __post_init__(self):
        if self.subcarriers < 1 or self.bandwidth_hz <= 0 or self.slot_s <= 0:
            raise ValueError(f"invalid radio config {self}")
        if self.power_w <= 0 or self.noise_psd < 0 or self.epsilon < 0:
            raise ValueError(f"invalid radio config {self}")

    @property
    def noise_power(self) -> float:
        """Noise variance per subcarrier-slot, N_0 * W."""
        return self.noise_psd * self.bandwidth_hz

    @property
    def snr(self) -> float:
        return self.power_w / self.noise_power

    @classmethod
    def at_snr(cls, snr_db: float, **kwargs) -> "RadioConfig":
        """Fix N_0*W and set the transmit power to hit ``snr_db``."""
        base = cls(**kwargs)
        power = base.noise_power * 10.0 ** (snr_db / 10.0)
        return cls(**{**kwargs, "power_w": power})


def draw_channel(rng: np.random.Generator, n_agents: int, n_subcarriers: int) -> np.ndarray:
    """One slot of i.i.d. CN(0, 1) gains, shape ``(n_agents, n_subcarriers)``."""
    if n_agents < 1 or n_subcarriers < 1:
        raise ValueError("need at least one agent and one subcarrier")
    g = rng.standard_normal((2, n_agents, n_subcarriers))
    return (g[0] + 1j * g[1]) / np.sqrt(2.0)


def noise_sample(rng: np.random.Generator, variance: float, size=None):
    """Circularly-symmetric complex Gaussian with total variance ``variance``."""
    if variance < 0:
        raise ValueError(f"negative noise variance {variance}")
    shape = () if size is None else tuple(np.atleast_1d(size))
    if variance == 0:
        out = np.zeros(shape, dtype=np.complex128)
    else:
        g = rng.standard_normal((2, *shape))
        out = np.sqrt(variance / 2.0) * (g[0] + 1j * g[1])
    return complex(out) if size is None else out


def fade_mask(h: np.ndarray, epsilon: float) -> np.ndarray:
    return np.abs(h) ** 2 <= epsilon


def power_factor(x: np.ndarray, h: np.ndarray, power: float, epsilon: float = 0.0):
    """Scale alpha_m with ``alpha^2 * mean(|x/h|^2) == power`` over the active set.

    Returns ``UNBOUNDED`` when every signal is zero.
    """
    x = np.asarray(x)
    h = np.asarray(h)
    if x.size == 0 or x.shape != h.shape:
        raise ValueError("active set must be nonempty and match the gains")
    if np.any(np.abs(h) ** 2 <= epsilon):
        raise DeepFadeError("deep-faded subcarrier in the active set")
    energy = np.sum(np.abs(x / h) ** 2)
    if energy == 0:
        return UNBOUNDED
    return float(np.sqrt(power * x.size / energy))


def global_alpha(alphas: Iterable):
    """Minimum over the agents' power factors, ignoring ``UNBOUNDED``."""
    alphas = list(alphas)
    if not alphas:
        raise ValueError("no participating agents")
    finite = [a for a in alphas if a is not UNBOUNDED]
    return min(finite) if finite else UNBOUNDED
