"""Analog over-the-air aggregation of soft-cut outputs.

Element ``j`` of every agent's output is sent on subcarrier ``j % S`` of slot
``j // S``. Agents invert their channel and scale by the common power factor,
so the PS receives ``alpha * sum_m O^m_j + n`` on that subcarrier.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import UNBOUNDED, RadioConfig, draw_channel, fade_mask, global_alpha, noise_sample, power_factor


class FadingPolicy(enum.Enum):
    V0 = "A-SLv0"  # drop deep-faded contributions
    V1 = "A-SLv1"  # replace them with the mean of the transmitting agents


@dataclass
class SlotResult:
    received: np.ndarray  # equalized, policy-corrected inputs for this slot's elements
    alpha: object  # float, or UNBOUNDED when the slot carried no signal
    mask: np.ndarray  # (M, n) deep-fade indicator
    tx: np.ndarray  # (M, n) complex transmitted symbols, 0 where faded
    transmitters: np.ndarray  # (n,) number of agents sending each element
    erased: np.ndarray  # (n,) elements with nothing usable received


@dataclass
class AnalogRoundResult:
    I_hat: np.ndarray
    slots_used: int
    channel_uses: int
    alpha_per_slot: list = field(default_factory=list)
    fade_fraction: float = 0.0
    erased: int = 0


def channel_uses_analog(n_a: int, subcarriers: int) -> int:
    """Whole slots are consumed, so the cost is ceil(N_A/S)*S regardless of M."""
    if n_a < 1 or subcarriers < 1:
        raise ValueError("N_A and S must be positive")
    return math.ceil(n_a / subcarriers) * subcarriers


def apply_policy(partial, transmitters, n_agents: int, policy: FadingPolicy):
    """Correct received partial sums for agents that did not transmit.

    Under V1 each of the ``k`` silent agents is credited with the mean of the
    ``M - k`` transmitters, which scales the partial sum by ``M / (M - k)``.
    Elements nobody transmitted come out as 0 under either policy.
    """
    partial = np.asarray(partial, dtype=np.float64)
    transmitters = np.asarray(transmitters)
    if np.any(transmitters < 0) or np.any(transmitters > n_agents):
        raise ValueError("transmitter count out of range")
    out = np.where(transmitters > 0, partial, 0.0)
    if policy is FadingPolicy.V1:
        safe = np.maximum(transmitters, 1)
        out = np.where(transmitters > 0, out * (n_agents / safe), 0.0)
    return out


def analog_slot(
    x: np.ndarray,
    h: np.ndarray,
    radio: RadioConfig,
    policy: FadingPolicy,
    rng: np.random.Generator,
) -> SlotResult:
    """One slot: ``x`` and ``h`` are ``(M, n)`` signals and gains on its subcarriers."""
    n_agents, n = x.shape
    mask = fade_mask(h, radio.epsilon)
    active = ~mask
    transmitters = active.sum(axis=0)

    alphas = [
        power_factor(x[m, active[m]], h[m, active[m]], radio.power_w, radio.epsilon)
        for m in range(n_agents)
        if active[m].any()
    ]
    alpha = global_alpha(alphas) if alphas else UNBOUNDED
    if alpha is UNBOUNDED:
        # nothing was sent (all faded or all-zero signal); the slot is erased
        return SlotResult(
            received=np.zeros(n),
            alpha=UNBOUNDED,
            mask=mask,
            tx=np.zeros((n_agents, n), dtype=np.complex128),
            transmitters=transmitters,
            erased=np.ones(n, dtype=bool),
        )

    h_safe = np.where(active, h, 1.0)
    tx = np.where(active, alpha * x / h_safe, 0.0)
    y = np.sum(h * tx, axis=0) + noise_sample(rng, radio.noise_power, size=n)
    partial = y.real / alpha
    received = apply_policy(partial, transmitters, n_agents, policy)
    return SlotResult(received, alpha, mask, tx, transmitters, transmitters == 0)


def analog_round(
    outputs: np.ndarray,
    radio: RadioConfig,
    policy: FadingPolicy,
    rng: np.random.Generator,
    draw: Callable[[np.random.Generator, int, int], np.ndarray] = draw_channel,
) -> AnalogRoundResult:
    """Upload one inference's ``(M, N_A)`` soft-cut outputs and equalize at the PS."""
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim != 2 or outputs.shape[0] < 1:
        raise ValueError("outputs must be (M, N_A) with at least one agent")
    n_agents, n_a = outputs.shape
    if n_a == 0:
        raise ValueError("N_A must be positive")
    s = radio.subcarriers
    n_slots = math.ceil(n_a / s)

    i_hat = np.empty(n_a)
    alphas = []
    faded = 0
    erased = 0
    for slot in range(n_slots):
        lo, hi = slot * s, min((slot + 1) * s, n_a)
        h = draw(rng, n_agents, s)[:, : hi - lo]
        res = analog_slot(outputs[:, lo:hi], h, radio, policy, rng)
        i_hat[lo:hi] = res.received
        alphas.append(res.alpha)
        faded += int(res.mask.sum())
        erased += int(res.erased.sum())

    return AnalogRoundResult(
        I_hat=i_hat,
        slots_used=n_slots,
        channel_uses=n_slots * s,
        alpha_per_slot=alphas,
        fade_fraction=faded / (n_agents * n_a),
        erased=erased,
    )
