"""Digital baseline: orthogonal subcarriers, Shannon-rate uploads and channel-use
budgets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import RadioConfig, draw_channel
from .ota import channel_uses_analog

MAX_SLOTS = 10**6


class UndeliverableError(RuntimeError):
    """An upload did not finish within the slot guard."""


@dataclass(frozen=True)
class DigitalConfig:
    n_elements: int  # N_D, cut-layer outputs per agent
    radio: RadioConfig = field(default_factory=RadioConfig)
    bits_per_element: int = 32
    max_slots: int = MAX_SLOTS

    def __post_init__(self):
        if self.bits_per_element < 1 or self.n_elements < 0 or self.max_slots < 1:
            raise ValueError(f"invalid digital config {self}")

    @property
    def payload_bits(self) -> int:
        return self.bits_per_element * self.n_elements


@dataclass
class UploadOutcome:
    tau_hat: np.ndarray  # slots per agent
    tau_bar: int
    channel_uses: int


def shannon_rate(power: float, h, noise_psd: float, bandwidth_hz: float):
    """Achievable rate in bit/s on one subcarrier: W log2(1 + P|h|^2 / (N_0 W))."""
    gain = np.abs(h) ** 2
    return bandwidth_hz * np.log2(1.0 + power * gain / (noise_psd * bandwidth_hz))


def subcarrier_allocation(n_agents: int, subcarriers: int) -> int:
    """Even split; leftover subcarriers stay idle."""
    return max(subcarriers // n_agents, 1)


def _upload_slots(
    payload_bits: float,
    n_agents: int,
    n_subcarriers: int,
    radio: RadioConfig,
    rng: np.random.Generator,
    draw: Callable,
    max_slots: int,
) -> np.ndarray:
    """Slots each of ``n_agents`` needs; ``-1`` marks an undeliverable upload."""
    slots = np.zeros(n_agents, dtype=np.int64)
    if payload_bits <= 0:
        return slots
    sent = np.zeros(n_agents)
    pending = np.ones(n_agents, dtype=bool)
    for t in range(1, max_slots + 1):
        h = draw(rng, n_agents, n_subcarriers)
        bits = radio.slot_s * shannon_rate(radio.power_w, h, radio.noise_psd, radio.bandwidth_hz).sum(axis=1)
        sent += np.where(pending, bits, 0.0)
        done = pending & (sent >= payload_bits)
        slots[done] = t
        pending &= ~done
        if not pending.any():
            return slots
    slots[pending] = -1
    return slots


def upload_duration(
    payload_bits: float,
    n_subcarriers: int,
    radio: RadioConfig,
    rng: np.random.Generator,
    draw: Callable = draw_channel,
    max_slots: int = MAX_SLOTS,
) -> int | None:
    """Smallest number of slots whose accumulated capacity covers the payload.

    The rate is constant within a slot (block fading), so the time integral
    becomes a per-slot sum. Returns ``None`` if the guard is hit.
    """
    if n_subcarriers < 1:
        raise ValueError("allocation must have at least one subcarrier")
    t = int(_upload_slots(payload_bits, 1, n_subcarriers, radio, rng, draw, max_slots)[0])
    return None if t < 0 else t


def digital_round(
    n_agents: int, cfg: DigitalConfig, rng: np.random.Generator, draw: Callable = draw_channel
) -> UploadOutcome:
    """Upload every agent's cut output on orthogonal subcarriers.

    With more agents than subcarriers, agents go in batches of S (one
    subcarrier each) and the batch durations add up.
    """
    s = cfg.radio.subcarriers
    per_agent = subcarrier_allocation(n_agents, s)
    tau_hat = []
    tau_bar = 0
    for lo in range(0, n_agents, s):
        batch = min(s, n_agents - lo)
        t = _upload_slots(cfg.payload_bits, batch, per_agent, cfg.radio, rng, draw, cfg.max_slots)
        if np.any(t < 0):
            raise UndeliverableError(f"upload exceeded {cfg.max_slots} slots")
        tau_hat.append(t)
        tau_bar += int(t.max())
    return UploadOutcome(np.concatenate(tau_hat), tau_bar, tau_bar * s)


# ------------------------------------------------------------------ budget


@dataclass
class BudgetLedger:
    total_cus: int
    consumed: int = 0
    completed_tasks: int = 0


@dataclass(frozen=True)
class ScenarioParams:
    n_agents: int
    n_d: int = 32
    n_a: int = 256
    radio: RadioConfig = field(default_factory=RadioConfig)
    bits_per_element: int = 32


def run_budgeted(
    scheme: str,
    budget: int,
    params: ScenarioParams,
    rng: np.random.Generator | None = None,
    task_count: int = 10_000,
) -> BudgetLedger:
    """Run inference uploads in order until the budget or task count runs out.

    ``scheme`` is ``"analog"`` or ``"digital"``. A task that would overdraw
    the budget is not started.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if scheme == "analog":
        unit_cost = channel_uses_analog(params.n_a, params.radio.subcarriers)

        def task_cost():
            return unit_cost

    elif scheme == "digital":
        if rng is None:
            raise ValueError("digital budgeting needs a random generator")
        cfg = DigitalConfig(params.n_d, params.radio, params.bits_per_element)

        def task_cost():
            return digital_round(params.n_agents, cfg, rng).channel_uses

    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    ledger = BudgetLedger(total_cus=budget)
    while ledger.completed_tasks < task_count:
        cost = task_cost()
        if ledger.consumed + cost > budget:
            break
        ledger.consumed += cost
        ledger.completed_tasks += 1
    return ledger
