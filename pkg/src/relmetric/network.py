"""
The table-shaped half of the model.

From context vectors H (n x rho) build the metric tensor G (n x n x kappa),
concatenate the dependency table D and the position table P, and run the
padded-convolution stack; the last layer has one channel per tag and a
softmax over that axis gives the per-cell distribution Q.

The first layer of the stack is a pointwise (1 x 1) projection of
G, D and P; only the later layers use the spatial window. A stack of depth
lambda therefore sees a (2*lambda - 1)-wide neighbourhood: 3 x 3 at depth 2,
5 x 5 at depth 3.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import tensor as T
from .encoder import Vocabulary
from .errors import ConfigError, ContractError, ShapeError
from .tensor import BatchNorm, Tensor

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


def _normal(rng, shape, name, dtype):
    return T.parameter(rng.normal(0.0, 0.1, size=shape), name=name, dtype=dtype)


class MetricBank:
    """kappa bilinear metrics R^k, stored as one (kappa, rho, rho) tensor."""

    def __init__(self, channels: int, context_dim: int, rng, dtype=T.DEFAULT_DTYPE, batch_norm: bool = True):
        self.R = _normal(rng, (channels, context_dim, context_dim), "metric.R", dtype)
        self.norm = BatchNorm(channels, dtype=dtype, name="metric.bn") if batch_norm else None

    @property
    def channels(self) -> int:
        return self.R.shape[0]

    def parameters(self) -> dict[str, Tensor]:
        params = {"metric.R": self.R}
        if self.norm is not None:
            params.update({"metric.bn.scale": self.norm.scale, "metric.bn.shift": self.norm.shift})
        return params


def metric_tables(h: Tensor, bank: MetricBank) -> Tensor:
    """G[i, j, k] = h_i^T R^k h_j, before normalization."""
    if h.ndim != 2 or h.shape[1] != bank.R.shape[1]:
        raise ShapeError(f"context matrix {h.shape} incompatible with metrics of side {bank.R.shape[1]}")
    hr = T.einsum("ip,kpq->ikq", h, bank.R)
    return T.einsum("ikq,jq->ijk", hr, h)


class DependencyParams:
    """Tag embeddings F^dep plus the null-edge vector phi.

    Index 1 of the tag vocabulary (its UNK slot) absorbs dependency labels
    never seen in training.
    """

    def __init__(self, tags: Vocabulary, dim: int, rng, dtype=T.DEFAULT_DTYPE):
        self.tags = tags
        self.F = _normal(rng, (len(tags), dim), "dep.F", dtype)
        self.phi = _normal(rng, (dim,), "dep.phi", dtype)

    def parameters(self) -> dict[str, Tensor]:
        return {"dep.F": self.F, "dep.phi": self.phi}


def dependency_table(edges: Iterable[tuple[int, int, str]], n: int, params: DependencyParams) -> Tensor:
    """D[i, j] = D[j, i] = F^dep[tag] for an edge (i, j, tag); phi elsewhere."""
    edges = list(edges)
    beta = params.phi.shape[0]
    cells = np.full((n, n), -1, dtype=np.int64)
    for i, j, tag in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise ContractError(f"dependency edge ({i}, {j}) outside a sentence of length {n}")
        k = params.tags.lookup(tag)
        cells[i, j] = k
        cells[j, i] = k
    has_edge = (cells >= 0)[..., None].astype(params.phi.dtype)
    table = T.take_rows(params.F, np.maximum(cells, 0).reshape(-1)).reshape(n, n, beta)
    null = T.broadcast_to(params.phi, (n, n, beta))
    return T.add(T.mul(table, has_edge), T.mul(null, 1.0 - has_edge))


class PositionParams:
    """Embeddings for signed offsets -max_offset..max_offset (row = offset + max_offset)."""

    def __init__(self, max_offset: int, dim: int, rng, dtype=T.DEFAULT_DTYPE):
        self.max_offset = max_offset
        self.F = _normal(rng, (2 * max_offset + 1, dim), "pos.F", dtype)

    def parameters(self) -> dict[str, Tensor]:
        return {"pos.F": self.F}

    def row(self, offset: int) -> int:
        return int(np.clip(offset, -self.max_offset, self.max_offset)) + self.max_offset


def position_table(n: int, params: PositionParams) -> Tensor:
    """P[i, j] = F^dist[i - j]; offsets beyond the table clamp to its ends."""
    idx = np.arange(n)
    offsets = idx[:, None] - idx[None, :]
    if n - 1 > params.max_offset:
        logger.warning("sentence of length %d exceeds the position table (max offset %d); clamping",
                       n, params.max_offset)
    rows = np.clip(offsets, -params.max_offset, params.max_offset) + params.max_offset
    gamma = params.F.shape[1]
    return T.take_rows(params.F, rows.reshape(-1)).reshape(n, n, gamma)


class PoolStack:
    """lambda padded convolutions; every layer sees D and P re-concatenated.

    Layer 0 mixes channels only (window 1); layers 1..lambda-1 use ``window``.
    """

    def __init__(self, layers: int, channels: int, metric_channels: int, dep_dim: int, pos_dim: int,
                 n_tags: int, rng, window: int = 3, dtype=T.DEFAULT_DTYPE, batch_norm: bool = True):
        if layers < 2:
            raise ConfigError(f"the pooling stack needs at least 2 layers, got {layers}")
        if window < 3 or window % 2 == 0:
            raise ConfigError(f"convolution window must be odd and >= 3, got {window}")
        self.side = dep_dim + pos_dim
        self.weights, self.biases, self.norms = [], [], []
        in_ch = metric_channels
        for k in range(layers):
            out_ch = n_tags if k == layers - 1 else channels
            t = 1 if k == 0 else window
            self.weights.append(_normal(rng, (out_ch, t, t, in_ch + self.side), f"pool.{k}.w", dtype))
            self.biases.append(_normal(rng, (out_ch,), f"pool.{k}.b", dtype))
            if k < layers - 1 and batch_norm:
                self.norms.append(BatchNorm(out_ch, dtype=dtype, name=f"pool.{k}.bn"))
            in_ch = out_ch

    @property
    def depth(self) -> int:
        return len(self.weights)

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"pool.{k}.w"] = w
            params[f"pool.{k}.b"] = b
        for k, bn in enumerate(self.norms):
            params[f"pool.{k}.bn.scale"] = bn.scale
            params[f"pool.{k}.bn.shift"] = bn.shift
        return params


@dataclass
class TableOutput:
    logits: Tensor
    q: Tensor
    layers: list = field(default_factory=list)  # L^1..L^lambda, pre-normalization


def forward(g: Tensor, d: Tensor, p: Tensor, stack: PoolStack, training: bool = False) -> TableOutput:
    """Run the convolution stack over G and return logits and Q."""
    side = T.concat([d, p], axis=2)
    if side.shape[2] != stack.side:
        raise ShapeError(f"D and P provide {side.shape[2]} channels, stack expects {stack.side}")
    x = g
    layers = []
    last = stack.depth - 1
    for k, (w, b) in enumerate(zip(stack.weights, stack.biases)):
        out = T.conv2d_padded(T.concat([x, side], axis=2), w, b)
        if k < last:
            out = T.relu(out)
            layers.append(out)
            if stack.norms:
                out = stack.norms[k](out, training)
        else:
            layers.append(out)
        x = out
    return TableOutput(x, T.softmax(x, axis=2), layers)


def table_loss(q: Tensor, y: np.ndarray) -> Tensor:
    """-(1/n) sum_ij sum_k Y log Q, with Q floored at 1e-12 inside the log."""
    if q.shape != y.shape:
        raise ShapeError(f"prediction {q.shape} and target {y.shape} differ")
    n = q.shape[0]
    logq = T.log(T.clamp_min(q, LOG_FLOOR))
    return T.mul(T.tsum(T.mul(logq, y.astype(q.dtype))), -1.0 / n)


def table_loss_from_logits(logits: Tensor, y: np.ndarray) -> Tensor:
    """Same quantity as :func:`table_loss` computed through log-softmax."""
    if logits.shape != y.shape:
        raise ShapeError(f"logits {logits.shape} and target {y.shape} differ")
    n = logits.shape[0]
    return T.mul(T.tsum(T.mul(T.log_softmax(logits, axis=2), y.astype(logits.dtype))), -1.0 / n)
