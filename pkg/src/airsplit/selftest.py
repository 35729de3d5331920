"""Fast invariant checks runnable without pytest (``airsplit selftest``)."""

from __future__ import annotations

import numpy as np

from .channel import RadioConfig, draw_channel
from .digital import ScenarioParams, run_budgeted
from .nn_core import Activation, DenseLayer, Network
from .ota import FadingPolicy, analog_round, analog_slot, channel_uses_analog
from .split_model import AggregationSpec, all_agent_outputs, centralized_forward, make_split, ps_forward


def random_split(rng, n_agents, in_dim, n_d, n_a, classes=4):
    def dense(n_in, n_out, act):
        return DenseLayer(rng.normal(size=(n_in, n_out)) / np.sqrt(n_in), rng.normal(size=n_out), act)

    agents = [Network([dense(in_dim, n_d, Activation.RELU)]) for _ in range(n_agents)]
    agg = AggregationSpec(
        [rng.normal(size=(n_d, n_a)) / np.sqrt(n_d * n_agents) for _ in range(n_agents)],
        rng.normal(size=n_a),
        Activation.RELU,
    )
    tail = Network([dense(n_a, classes, Activation.SOFTMAX)])
    return make_split(agents, agg, tail)


def check_split_equivalence(seeds=10):
    radio = RadioConfig(noise_psd=0.0, epsilon=0.0)
    worst = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        m = (1, 2, 6, 24)[seed % 4]
        split = random_split(rng, m, 5, 8, 16)
        xs = [rng.normal(size=5) for _ in range(m)]
        outputs = all_agent_outputs(split, xs)
        i_hat = analog_round(outputs, radio, FadingPolicy.V0, rng).I_hat
        worst = max(worst, np.abs(ps_forward(split, i_hat) - centralized_forward(split, xs)).max())
    return worst <= 1e-9, f"max abs diff {worst:.3g}"


def check_costs():
    ok = all(channel_uses_analog(256, 128) == 256 for _ in range(1, 129))
    return ok and channel_uses_analog(1, 128) == 128, "C_A = ceil(N_A/S)*S"


def check_budget():
    got = [
        run_budgeted("analog", b, ScenarioParams(m)).completed_tasks
        for b in (2_000_000, 5_000_000)
        for m in (6, 48)
    ]
    return got == [7812, 7812, 10000, 10000], f"completed {got}"


def check_power(slots=500):
    rng = np.random.default_rng(1)
    radio = RadioConfig()
    for _ in range(slots):
        x = rng.normal(size=(6, 128))
        h = draw_channel(rng, 6, 128)
        res = analog_slot(x, h, radio, FadingPolicy.V0, rng)
        active = ~res.mask
        powers = [np.mean(np.abs(res.tx[m, active[m]]) ** 2) for m in range(6) if active[m].any()]
        if max(powers) > radio.power_w + 1e-12 or abs(max(powers) / radio.power_w - 1) > 1e-9:
            return False, f"max power {max(powers)!r}"
    return True, f"{slots} slots within budget"


def check_channel_stats(n=200_000):
    g = np.abs(draw_channel(np.random.default_rng(2), 1, n)) ** 2
    mean, frac = g.mean(), np.mean(g <= 0.2)
    return abs(mean - 1) < 0.02 and abs(frac - (1 - np.exp(-0.2))) < 0.01, f"E|h|^2={mean:.4f}, P(fade)={frac:.4f}"


CHECKS = {
    "split equivalence": check_split_equivalence,
    "analog cost": check_costs,
    "budgeted tasks": check_budget,
    "power constraint": check_power,
    "channel statistics": check_channel_stats,
}


def run_selftest(echo=print) -> bool:
    passed = True
    for name, check in CHECKS.items():
        ok, detail = check()
        passed &= ok
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return passed
