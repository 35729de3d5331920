"""Desk-scale experiments: synthetic multi-view data, split-model training,
accuracy-vs-SNR and completed-tasks-vs-M sweeps."""

from __future__ import annotations

import csv
import hashlib
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import RadioConfig
from .digital import ScenarioParams, run_budgeted
from .nn_core import Activation, DenseLayer, Network, TrainConfig, softmax
from .ota import FadingPolicy, analog_round
from .split_model import (
    AggregationSpec,
    SplitNetwork,
    all_agent_outputs,
    centralized_forward,
    load_split,
    make_split,
    predict,
    ps_forward,
    save_split,
)

SCHEMES = ("A-SLv0", "A-SLv1", "digital")
ACCURACY_COLUMNS = ("scheme", "M", "snr_db", "run", "accuracy")
SCALABILITY_COLUMNS = ("scheme", "M", "cu_budget", "snr_db", "run", "completed_tasks")


@dataclass
class ExperimentConfig:
    agents: list[int] = field(default_factory=lambda: [6, 24])
    n_d: int = 32
    n_a: int = 256
    snr_db: list[float] = field(default_factory=lambda: [-20.0, 0.0, 20.0])
    policies: list[str] = field(default_factory=lambda: list(SCHEMES))
    cu_budgets: list[int] = field(default_factory=lambda: [2_000_000, 5_000_000])
    task_count: int = 10_000
    runs: int = 5
    seed: int = 0
    # dataset
    classes: int = 10
    dim: int = 16
    distortion: float = 0.5
    class_sep: float = 5.0
    train_samples: int = 2000
    test_samples: int = 500
    # training
    epochs: int = 30
    batch_size: int = 100
    learning_rate: float = 0.05
    # radio
    subcarriers: int = 128
    bandwidth_hz: float = 15e3
    slot_s: float = 1e-3
    noise_power_w: float = 1e-3  # N_0 * W, fixed while SNR varies
    epsilon: float = 0.2
    workers: int = 1

    def __post_init__(self):
        if not self.agents or not self.snr_db or not self.policies or not self.cu_budgets:
            raise ValueError("experiment grids must be nonempty")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        unknown = set(self.policies) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}")

    def radio(self, snr_db: float) -> RadioConfig:
        return RadioConfig.at_snr(
            snr_db,
            subcarriers=self.subcarriers,
            bandwidth_hz=self.bandwidth_hz,
            slot_s=self.slot_s,
            noise_psd=self.noise_power_w / self.bandwidth_hz,
            epsilon=self.epsilon,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.learning_rate, self.epochs, self.seed)

    def canonical(self) -> str:
        return "\n".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def point_rng(seed: int, *indices: int) -> np.random.Generator:
    """Independent stream for one grid point, fixed by the seed and its indices."""
    return np.random.default_rng(np.random.SeedSequence([seed, *indices]))


# ----------------------------------------------------------------- dataset


@dataclass
class SyntheticDataset:
    views: np.ndarray  # (n, M, d)
    labels: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_agents(self) -> int:
        return self.views.shape[1]

    def agent_inputs(self) -> list[np.ndarray]:
        return [self.views[:, m, :] for m in range(self.n_agents)]

    def split(self, n_first: int) -> tuple["SyntheticDataset", "SyntheticDataset"]:
        return (
            SyntheticDataset(self.views[:n_first], self.labels[:n_first]),
            SyntheticDataset(self.views[n_first:], self.labels[n_first:]),
        )


def generate_dataset(
    rng: np.random.Generator,
    classes: int,
    dim: int,
    distortion: float,
    n_samples: int,
    n_agents: int,
    class_sep: float = 3.0,
) -> SyntheticDataset:
    """Gaussian class clusters seen by ``n_agents`` distorted cameras.

    A shared latent ``z ~ N(mu_c, I)`` is drawn per sample; agent m observes
    ``(I + s G_m / sqrt(d)) z + s e_m`` with ``s = distortion``. Class means
    are ``class_sep`` apart pairwise when ``classes <= dim``.
    """
    if classes < 2 or dim < 1 or n_samples < classes or n_agents < 1 or distortion < 0:
        raise ValueError("degenerate dataset parameters")
    if classes <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        means = q[:, :classes].T * (class_sep / np.sqrt(2.0))
    else:
        means = rng.standard_normal((classes, dim)) * (class_sep / np.sqrt(2.0 * dim))

    labels = rng.permutation(np.arange(n_samples) % classes)
    latent = means[labels] + rng.standard_normal((n_samples, dim))
    mixing = np.eye(dim) + distortion * rng.standard_normal((n_agents, dim, dim)) / np.sqrt(dim)
    views = np.einsum("nd,med->nme", latent, mixing)
    views = views + distortion * rng.standard_normal((n_samples, n_agents, dim))
    return SyntheticDataset(views, labels)


# ---------------------------------------------------------------- training


def init_split(
    rng: np.random.Generator, n_agents: int, dim: int, n_d: int, n_a: int, classes: int
) -> SplitNetwork:
    """Shared agent segment ``dim -> N_D`` (ReLU), per-agent aggregation blocks,
    ReLU head and a softmax tail."""

    def uniform(n_in, shape):
        bound = 1.0 / np.sqrt(n_in)
        return rng.uniform(-bound, bound, size=shape)

    segment = Network([DenseLayer(uniform(dim, (dim, n_d)), uniform(dim, n_d), Activation.RELU)])
    fan_in = n_agents * n_d
    agg = AggregationSpec(
        [uniform(fan_in, (n_d, n_a)) for _ in range(n_agents)], uniform(fan_in, n_a), Activation.RELU
    )
    tail = Network([DenseLayer(uniform(n_a, (n_a, classes)), uniform(n_a, classes), Activation.SOFTMAX)])
    return make_split([segment] * n_agents, agg, tail)


def train_split_model(split: SplitNetwork, data: SyntheticDataset, cfg: TrainConfig) -> SplitNetwork:
    """Offline SGD on the unsplit model, keeping the agent segment shared.

    Architecture is fixed to the one built by :func:`init_split`.
    """
    seg = split.agent_segments[0].layers[0]
    tail = split.ps_tail.layers[0]
    w1, b1 = seg.weights.copy(), seg.bias.copy()
    wa = np.stack([c.weights for c in split.soft_cut])  # (M, N_D, N_A)
    ba = split.head_bias.copy()
    w3, b3 = tail.weights.copy(), tail.bias.copy()

    n_agents, n_d, n_a = wa.shape
    wa = wa.reshape(n_agents * n_d, n_a)  # stacked blocks act on the concatenated cuts
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x, y = data.views[idx], data.labels[idx]
            b = len(idx)
            z1 = x @ w1 + b1
            h1 = np.maximum(z1, 0.0).reshape(b, n_agents * n_d)
            z2 = h1 @ wa + ba
            h2 = np.maximum(z2, 0.0)
            d3 = softmax(h2 @ w3 + b3)
            d3[np.arange(b), y] -= 1.0
            d3 /= b
            d2 = (d3 @ w3.T) * (z2 > 0)
            d1 = (d2 @ wa.T).reshape(b, n_agents, n_d) * (z1 > 0)
            w3 -= lr * (h2.T @ d3)
            b3 -= lr * d3.sum(axis=0)
            wa -= lr * (h1.T @ d2)
            ba -= lr * d2.sum(axis=0)
            w1 -= lr * (x.reshape(-1, x.shape[-1]).T @ d1.reshape(-1, n_d))
            b1 -= lr * d1.sum(axis=(0, 1))
    wa = wa.reshape(n_agents, n_d, n_a)

    segment = Network([DenseLayer(w1, b1, Activation.RELU)])
    agg = AggregationSpec(list(wa), ba, split.head_activation)
    return make_split([segment] * split.n_agents, agg, Network([DenseLayer(w3, b3, Activation.SOFTMAX)]))


def split_loss(split: SplitNetwork, data: SyntheticDataset) -> float:
    probs = centralized_forward(split, data.agent_inputs())
    return float(-np.log(np.maximum(probs[np.arange(len(data)), data.labels], 1e-300)).mean())


class MissingModelError(FileNotFoundError):
    pass


def model_path(model_dir, n_agents: int) -> Path:
    return Path(model_dir) / f"split_M{n_agents}.asls"


def build_model(
    cfg: ExperimentConfig,
    n_agents: int,
    m_index: int = 0,
    model_dir=None,
    allow_train: bool = True,
):
    """Generate data for ``n_agents`` and get a split model for it.

    A model saved under ``model_dir`` is reused; otherwise one is trained
    (and saved there, if a directory was given).
    """
    rng = point_rng(cfg.seed, 0, m_index, n_agents)
    data = generate_dataset(
        rng, cfg.classes, cfg.dim, cfg.distortion,
        cfg.train_samples + cfg.test_samples, n_agents, cfg.class_sep,
    )
    train, test = data.split(cfg.train_samples)
    split = init_split(rng, n_agents, cfg.dim, cfg.n_d, cfg.n_a, cfg.classes)
    path = model_path(model_dir, n_agents) if model_dir is not None else None
    if path is not None and path.exists():
        return load_split(path), train, test
    if not allow_train:
        raise MissingModelError(f"no trained model for M={n_agents} and training is disabled")
    split = train_split_model(split, train, cfg.train_config())
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_split(split, path)
    return split, train, test


# -------------------------------------------------------------- evaluation


def digital_predictions(split: SplitNetwork, data: SyntheticDataset) -> np.ndarray:
    """Error-free decoding: the PS sees exact cut outputs."""
    return predict(centralized_forward(split, data.agent_inputs()))


def analog_predictions(
    split: SplitNetwork,
    data: SyntheticDataset,
    radio: RadioConfig,
    policy: FadingPolicy,
    rng: np.random.Generator,
) -> np.ndarray:
    outputs = all_agent_outputs(split, data.agent_inputs())  # (M, n, N_A)
    received = np.stack(
        [analog_round(outputs[:, i, :], radio, policy, rng).I_hat for i in range(len(data))]
    )
    return predict(ps_forward(split, received))


def _accuracy_rows(
    cfg: ExperimentConfig, m_index: int, n_agents: int, model_dir=None, allow_train=True
) -> list[tuple]:
    split, _, test = build_model(cfg, n_agents, m_index, model_dir, allow_train)
    rows = []
    if "digital" in cfg.policies:
        acc = float(np.mean(digital_predictions(split, test) == test.labels))
        # error-free decoding makes digital accuracy SNR independent
        for snr in cfg.snr_db:
            rows.append(("digital", n_agents, snr, 0, acc))
    for p_index, scheme in enumerate(SCHEMES[:2]):
        if scheme not in cfg.policies:
            continue
        policy = FadingPolicy(scheme)
        for s_index, snr in enumerate(cfg.snr_db):
            for run in range(cfg.runs):
                rng = point_rng(cfg.seed, 1, m_index, p_index, s_index, run)
                pred = analog_predictions(split, test, cfg.radio(snr), policy, rng)
                rows.append((scheme, n_agents, snr, run, float(np.mean(pred == test.labels))))
    return rows


def _scalability_rows(cfg: ExperimentConfig, m_index: int, n_agents: int) -> list[tuple]:
    rows = []
    for b_index, budget in enumerate(cfg.cu_budgets):
        for s_index, snr in enumerate(cfg.snr_db):
            params = ScenarioParams(n_agents, cfg.n_d, cfg.n_a, cfg.radio(snr))
            for run in range(cfg.runs):
                for scheme in cfg.policies:
                    if scheme == "digital":
                        rng = point_rng(cfg.seed, 2, m_index, b_index, s_index, run)
                        ledger = run_budgeted("digital", budget, params, rng, cfg.task_count)
                    else:
                        ledger = run_budgeted("analog", budget, params, None, cfg.task_count)
                    rows.append((scheme, n_agents, budget, snr, run, ledger.completed_tasks))
    return rows


def _map_grid(fn, cfg: ExperimentConfig, *extra) -> list[tuple]:
    jobs = [(cfg, i, m, *extra) for i, m in enumerate(cfg.agents)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(fn, *zip(*jobs)))
    else:
        chunks = [fn(*job) for job in jobs]
    # pool.map keeps submission order, so rows come out in grid order
    return [row for chunk in chunks for row in chunk]


def run_accuracy_sweep(cfg: ExperimentConfig, model_dir=None, allow_train: bool = True) -> list[tuple]:
    """Rows ``(scheme, M, snr_db, run, accuracy)``; digital is reported with run 0."""
    return _map_grid(_accuracy_rows, cfg, model_dir, allow_train)


def run_scalability_sweep(cfg: ExperimentConfig) -> list[tuple]:
    """Rows ``(scheme, M, cu_budget, snr_db, run, completed_tasks)``."""
    return _map_grid(_scalability_rows, cfg)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(columns: Sequence[str], rows: Sequence[tuple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()
