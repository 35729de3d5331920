"""Split network with the aggregation layer broken into two soft layers.

The original aggregation layer computes ``a(sum_m W^m o^m + b)`` where ``o^m``
is agent m's cut-layer output. It is replaced by

* a per-agent soft cut: ``O^m = o^m @ W^m`` (zero bias, identity activation),
  whose outputs can be superposed over a shared channel, and
* a PS head: ``a(I + b)`` on the received sum ``I = sum_m O^m``, followed by
  the remaining PS layers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .nn_core import (
    Activation,
    DenseLayer,
    Network,
    ShapeError,
    WeightFormatError,
    activate,
    decode_network,
    encode_network,
    forward,
)


@dataclass
class AggregationSpec:
    per_agent_weights: list[np.ndarray]  # M blocks of shape (N_D, N_A)
    bias: np.ndarray  # (N_A,)
    activation: Activation = Activation.RELU

    def __post_init__(self):
        self.per_agent_weights = [np.asarray(w, dtype=np.float64) for w in self.per_agent_weights]
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if not self.per_agent_weights:
            raise ValueError("aggregation needs at least one agent")
        shape = self.per_agent_weights[0].shape
        for m, w in enumerate(self.per_agent_weights):
            if w.shape != shape or w.ndim != 2:
                raise ShapeError(f"agent {m} aggregation block", shape, w.shape)
        if self.bias.shape != (shape[1],):
            raise ShapeError("aggregation bias", shape[1], self.bias.shape)

    @property
    def n_agents(self) -> int:
        return len(self.per_agent_weights)

    @property
    def n_d(self) -> int:
        return self.per_agent_weights[0].shape[0]

    @property
    def n_a(self) -> int:
        return self.per_agent_weights[0].shape[1]


@dataclass(frozen=True)
class SplitNetwork:
    agent_segments: tuple[Network, ...]
    soft_cut: tuple[DenseLayer, ...]
    head_bias: np.ndarray
    head_activation: Activation
    ps_tail: Network

    @property
    def n_agents(self) -> int:
        return len(self.agent_segments)

    @property
    def n_a(self) -> int:
        return len(self.head_bias)

    @property
    def n_d(self) -> int:
        return self.soft_cut[0].in_dim


def make_split(
    agent_nets: Sequence[Network], agg: AggregationSpec, ps_tail: Network
) -> SplitNetwork:
    if len(agent_nets) != agg.n_agents:
        raise ValueError(f"{len(agent_nets)} agent networks for {agg.n_agents} aggregation blocks")
    for m, net in enumerate(agent_nets):
        if net.out_dim != agg.n_d:
            raise ShapeError(f"agent {m} segment output", agg.n_d, net.out_dim)
    if ps_tail.layers and ps_tail.in_dim != agg.n_a:
        raise ShapeError("PS tail input", agg.n_a, ps_tail.in_dim)
    soft_cut = tuple(
        DenseLayer(w.copy(), np.zeros(agg.n_a), Activation.IDENTITY)
        for w in agg.per_agent_weights
    )
    return SplitNetwork(
        agent_segments=tuple(net.copy() for net in agent_nets),
        soft_cut=soft_cut,
        head_bias=agg.bias.copy(),
        head_activation=Activation(agg.activation),
        ps_tail=ps_tail.copy(),
    )


def agent_forward(split: SplitNetwork, m: int, x_m: np.ndarray) -> np.ndarray:
    """Soft-cut output of agent ``m``: the cut activation times W^m, nothing else."""
    cut = forward(split.agent_segments[m], x_m)
    return cut @ split.soft_cut[m].weights


def all_agent_outputs(split: SplitNetwork, inputs: Sequence[np.ndarray]) -> np.ndarray:
    """Stack ``agent_forward`` over agents: shape ``(M, N_A)`` or ``(M, n, N_A)``."""
    if len(inputs) != split.n_agents:
        raise ShapeError("agent inputs", split.n_agents, len(inputs))
    return np.stack([agent_forward(split, m, x) for m, x in enumerate(inputs)])


def ps_forward(split: SplitNetwork, received: np.ndarray) -> np.ndarray:
    received = np.asarray(received, dtype=np.float64)
    if received.shape[-1] != split.n_a:
        raise ShapeError("PS head input", split.n_a, received.shape[-1])
    hidden = activate(split.head_activation, received + split.head_bias)
    return forward(split.ps_tail, hidden)


def centralized_forward(split: SplitNetwork, inputs: Sequence[np.ndarray]) -> np.ndarray:
    """Reference output of the unsplit model.

    Concatenates every agent's cut activation and applies the original
    aggregation layer as one dense layer with stacked weights.
    """
    if len(inputs) != split.n_agents:
        raise ShapeError("agent inputs", split.n_agents, len(inputs))
    cuts = [forward(seg, x) for seg, x in zip(split.agent_segments, inputs)]
    stacked = np.concatenate([layer.weights for layer in split.soft_cut], axis=0)
    aggregation = DenseLayer(stacked, split.head_bias, split.head_activation)
    return forward(Network([aggregation, *split.ps_tail.layers]), np.concatenate(cuts, axis=-1))


def predict(probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(probs, axis=-1)


# ----------------------------------------------------------- serialization

SPLIT_MAGIC = b"ASLS"
SPLIT_VERSION = 1
_TAG_AGENT, _TAG_CUT, _TAG_HEAD, _TAG_TAIL = b"A", b"C", b"H", b"T"


def encode_split(split: SplitNetwork) -> bytes:
    """Container of tagged sections, each network in the ASLW layout."""
    parts = [struct.pack("<4sII", SPLIT_MAGIC, SPLIT_VERSION, split.n_agents)]
    for seg in split.agent_segments:
        parts += [_TAG_AGENT, encode_network(seg)]
    for cut in split.soft_cut:
        parts += [_TAG_CUT, encode_network(Network([cut]))]
    parts += [
        _TAG_HEAD,
        struct.pack("<BI", int(split.head_activation), split.n_a),
        np.ascontiguousarray(split.head_bias, dtype="<f8").tobytes(),
    ]
    parts += [_TAG_TAIL, encode_network(split.ps_tail)]
    return b"".join(parts)


def decode_split(buf: bytes) -> SplitNetwork:
    if len(buf) < 12:
        raise WeightFormatError("truncated split header", len(buf))
    magic, version, n_agents = struct.unpack_from("<4sII", buf, 0)
    if magic != SPLIT_MAGIC:
        raise WeightFormatError(f"bad magic {magic!r}", 0)
    if version != SPLIT_VERSION:
        raise WeightFormatError(f"unsupported split version {version}", 4)
    offset = 12

    def expect(tag: bytes):
        nonlocal offset
        if buf[offset : offset + 1] != tag:
            raise WeightFormatError(f"expected section {tag!r}", offset)
        offset += 1

    def section(tag: bytes) -> Network:
        nonlocal offset
        expect(tag)
        net, offset = decode_network(buf, offset)
        return net

    segments = [section(_TAG_AGENT) for _ in range(n_agents)]
    cuts = [section(_TAG_CUT) for _ in range(n_agents)]
    expect(_TAG_HEAD)
    if offset + 5 > len(buf):
        raise WeightFormatError("truncated head section", offset)
    act_tag, n_a = struct.unpack_from("<BI", buf, offset)
    offset += 5
    if offset + 8 * n_a > len(buf):
        raise WeightFormatError("truncated head bias", offset)
    bias = np.frombuffer(buf, dtype="<f8", count=n_a, offset=offset).astype(np.float64)
    offset += 8 * n_a
    tail = section(_TAG_TAIL)
    if offset != len(buf):
        raise WeightFormatError("trailing bytes after split model", offset)

    for m, cut in enumerate(cuts):
        if len(cut.layers) != 1:
            raise WeightFormatError(f"soft cut {m} must be a single layer", 0)
    agg = AggregationSpec([c.layers[0].weights for c in cuts], bias, Activation(act_tag))
    return make_split(segments, agg, tail)


def save_split(split: SplitNetwork, path) -> None:
    Path(path).write_bytes(encode_split(split))


def load_split(path) -> SplitNetwork:
    return decode_split(Path(path).read_bytes())
