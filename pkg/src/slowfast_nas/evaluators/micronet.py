"""Trainable micro-network backend over d-dimensional feature vectors.

Cells are executed as their DAGs with vector analogs of the seven ops:
separable convs become banded linear maps + ReLU applied twice, dilated
convs a dilation-2 banded map + ReLU applied once, pools sliding window-3
max/mean, identity a passthrough.  Reduction cells subsample to width d/2
inside the cell; every cell ends with a concat of its B intermediate nodes
and a trained (but non-searched) projection back to width d.  Forward and
backward passes are written out explicitly in float64 numpy so gradients
can be validated against central finite differences.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..rng import stream_key
from ..search_space import CellType, Genotype, OperationKind, SearchSpaceScheme, genotype_key
from ..weight_store import InheritedWeights, WeightEntry, WeightKey, enumerate_keys
from .base import EstimationRequest, EstimationResult, NonFiniteLoss
from .dataset import DatasetSplit


class ShapeMismatch(Exception):
    pass


@dataclass(frozen=True)
class TrainHyper:
    """One-epoch SGD settings; the cosine horizon equals the generation count.

    The default rate follows linear batch scaling (0.1 at batch 256 becomes
    0.025 at batch 64); without normalization layers the stack is unstable
    at 0.1."""

    lr0: float = 0.025
    t_max: int = 50
    batch_size: int = 64
    weight_decay: float = 3e-4

    def __post_init__(self):
        if self.lr0 <= 0 or self.t_max < 1 or self.batch_size < 1 or self.weight_decay < 0:
            raise ValueError("invalid training hyperparameters")

    def lr(self, epoch_index: int) -> float:
        return 0.5 * self.lr0 * (1.0 + math.cos(math.pi * epoch_index / self.t_max))


@dataclass(frozen=True)
class MacroConfig:
    """Cell stacking: s normal, 1 reduction, s normal, 1 reduction, s normal."""

    stack: int = 2
    feature_dim: int = 16

    def __post_init__(self):
        if self.stack < 1:
            raise ValueError("stack must be at least 1")
        if self.feature_dim < 4 or self.feature_dim % 2 != 0:
            raise ValueError("feature_dim must be even and at least 4")

    @property
    def num_cells(self) -> int:
        return 3 * self.stack + 2

    def cell_sequence(self) -> List[CellType]:
        n, r = CellType.NORMAL, CellType.REDUCTION
        return [n] * self.stack + [r] + [n] * self.stack + [r] + [n] * self.stack


def edge_position(cell_type: CellType, source_node: int, d: int) -> Tuple[int, int, int]:
    """(input width, output width, stride) for an op sitting on this edge."""
    if cell_type is CellType.REDUCTION and source_node < 2:
        return d, d // 2, 2
    if cell_type is CellType.REDUCTION:
        return d // 2, d // 2, 1
    return d, d, 1


def op_param_shape(op: OperationKind, w_out: int) -> Tuple[int, ...]:
    if op.op_type == "sep_conv":
        return (2, w_out, op.kernel_size)
    if op.op_type == "dil_conv":
        return (w_out, op.kernel_size)
    return (0,)


def shape_registry(scheme: SearchSpaceScheme, macro: MacroConfig) -> Dict[WeightKey, Tuple[int, ...]]:
    registry = {}
    for key in enumerate_keys(scheme):
        _, w_out, _ = edge_position(key.cell_type, key.source_node, macro.feature_dim)
        registry[key] = op_param_shape(key.op, w_out)
    return registry


# --- primitive forward/backward kernels -------------------------------------


def _gather_plan(w_in: int, w_out: int, taps: int, stride: int, dilation: int):
    """Index map idx[o, t] = stride*o + dilation*(t - taps//2) plus validity."""
    o = np.arange(w_out)[:, None]
    t = np.arange(taps)[None, :]
    idx = stride * o + dilation * (t - taps // 2)
    valid = (idx >= 0) & (idx < w_in)
    matrix = np.zeros((w_out * taps, w_in))
    rows = np.arange(w_out * taps)
    matrix[rows[valid.ravel()], idx.ravel()[valid.ravel()]] = 1.0
    return idx, valid, matrix


class _Banded:
    """y[b, o] = sum_t P[o, t] * x[b, idx(o, t)] with zero padding off the edge."""

    def __init__(self, w_in: int, w_out: int, taps: int, stride: int, dilation: int):
        self.w_out = w_out
        self.taps = taps
        _, _, self.matrix = _gather_plan(w_in, w_out, taps, stride, dilation)

    def gather(self, x: np.ndarray) -> np.ndarray:
        return (x @ self.matrix.T).reshape(x.shape[0], self.w_out, self.taps)

    def forward(self, x: np.ndarray, params: np.ndarray):
        gathered = self.gather(x)
        return np.einsum("bot,ot->bo", gathered, params), gathered

    def backward(self, grad_y: np.ndarray, gathered: np.ndarray, params: np.ndarray):
        grad_p = np.einsum("bo,bot->ot", grad_y, gathered)
        spread = grad_y[:, :, None] * params[None, :, :]
        grad_x = spread.reshape(grad_y.shape[0], -1) @ self.matrix
        return grad_x, grad_p


class _Pool:
    def __init__(self, w_in: int, w_out: int, stride: int, mode: str):
        self.mode = mode
        self.w_out = w_out
        self.idx, self.valid, self.matrix = _gather_plan(w_in, w_out, 3, stride, 1)
        self.counts = self.valid.sum(axis=1)

    def forward(self, x: np.ndarray):
        gathered = (x @ self.matrix.T).reshape(x.shape[0], self.w_out, 3)
        if self.mode == "avg":
            y = gathered.sum(axis=2) / self.counts[None, :]
            return y, None
        masked = np.where(self.valid[None, :, :], gathered, -np.inf)
        argmax = np.argmax(masked, axis=2)  # first maximal index on ties
        return np.take_along_axis(masked, argmax[:, :, None], axis=2)[:, :, 0], argmax

    def backward(self, grad_y: np.ndarray, cache, x_width: int):
        batch = grad_y.shape[0]
        if self.mode == "avg":
            spread = (grad_y / self.counts[None, :])[:, :, None] * self.valid[None, :, :]
            return spread.reshape(batch, -1) @ self.matrix
        argmax = cache
        grad_x = np.zeros((batch, x_width))
        source = np.take_along_axis(self.idx[None, :, :].repeat(batch, 0), argmax[:, :, None], axis=2)[:, :, 0]
        np.add.at(grad_x, (np.arange(batch)[:, None], source), grad_y)
        return grad_x


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


class _EdgeOp:
    """One operation instance bound to a store key and an edge position."""

    def __init__(self, op: OperationKind, key: WeightKey, w_in: int, w_out: int, stride: int):
        self.op = op
        self.key = key
        self.w_in = w_in
        self.w_out = w_out
        self.stride = stride
        if op.op_type == "sep_conv":
            k = op.kernel_size
            self.band1 = _Banded(w_in, w_out, k, stride, 1)
            self.band2 = _Banded(w_out, w_out, k, 1, 1)
        elif op.op_type == "dil_conv":
            self.band = _Banded(w_in, w_out, op.kernel_size, stride, 2)
        elif op.op_type in ("pool_max", "pool_avg"):
            self.pool = _Pool(w_in, w_out, stride, "max" if op.op_type == "pool_max" else "avg")

    def forward(self, x: np.ndarray, params: Optional[np.ndarray], margins: Optional[list] = None):
        kind = self.op.op_type
        if kind == "identity":
            y = x if self.stride == 1 else x[:, :: self.stride]
            return y, None
        if kind in ("pool_max", "pool_avg"):
            y, cache = self.pool.forward(x)
            if margins is not None and self.pool.mode == "max":
                margins.append(self.pool.last_gap)
            return y, cache
        if kind == "sep_conv":
            z1, g1 = self.band1.forward(x, params[0])
            a1 = _relu(z1)
            z2, g2 = self.band2.forward(a1, params[1])
            if margins is not None:
                margins.append(float(np.abs(z1).min()))
                margins.append(float(np.abs(z2).min()))
            return _relu(z2), (z1, g1, z2, g2)
        z, g = self.band.forward(x, params)
        if margins is not None:
            margins.append(float(np.abs(z).min()))
        return _relu(z), (z, g)

    def backward(self, grad_y: np.ndarray, cache, params: Optional[np.ndarray]):
        """Returns (grad_x, grad_params or None)."""
        kind = self.op.op_type
        if kind == "identity":
            if self.stride == 1:
                return grad_y, None
            grad_x = np.zeros((grad_y.shape[0], self.w_in))
            grad_x[:, :: self.stride] = grad_y
            return grad_x, None
        if kind in ("pool_max", "pool_avg"):
            return self.pool.backward(grad_y, cache, self.w_in), None
        if kind == "sep_conv":
            z1, g1, z2, g2 = cache
            grad_z2 = grad_y * (z2 > 0)
            grad_a1, grad_p2 = self.band2.backward(grad_z2, g2, params[1])
            grad_z1 = grad_a1 * (z1 > 0)
            grad_x, grad_p1 = self.band1.backward(grad_z1, g1, params[0])
            return grad_x, np.stack([grad_p1, grad_p2])
        z, g = cache
        grad_z = grad_y * (z > 0)
        return self.band.backward(grad_z, g, params)


# --- network -----------------------------------------------------------------


class _CellInstance:
    def __init__(self, genotype: Genotype, cell_type: CellType, d: int):
        cell = genotype.cell(cell_type)
        self.cell_type = cell_type
        self.num_blocks = cell.num_blocks
        self.mid_width = d // 2 if cell_type is CellType.REDUCTION else d
        self.edges: List[Tuple[int, _EdgeOp]] = []
        for b, block in enumerate(cell.blocks):
            node = b + 2
            for pre, op in ((block.pre1, block.op1), (block.pre2, block.op2)):
                key = WeightKey(cell_type, pre, node, op)
                w_in, w_out, stride = edge_position(cell_type, pre, d)
                self.edges.append((pre, _EdgeOp(op, key, w_in, w_out, stride)))

    def forward(self, s0: np.ndarray, s1: np.ndarray, params: Dict[WeightKey, np.ndarray]):
        states = [s0, s1]
        caches = []
        for b in range(self.num_blocks):
            total = None
            for pre, edge in self.edges[2 * b : 2 * b + 2]:
                y, cache = edge.forward(states[pre], params[edge.key])
                caches.append((pre, edge, cache))
                total = y if total is None else total + y
            states.append(total)
        concat = np.concatenate(states[2:], axis=1)
        return concat, (states, caches)

    def backward(
        self,
        grad_concat: np.ndarray,
        cache,
        params: Dict[WeightKey, np.ndarray],
        grads: Dict[WeightKey, np.ndarray],
    ):
        states, caches = cache
        node_grads = [np.zeros_like(s) for s in states]
        w = self.mid_width
        for b in range(self.num_blocks):
            node_grads[b + 2] += grad_concat[:, b * w : (b + 1) * w]
        for b in range(self.num_blocks - 1, -1, -1):
            gy = node_grads[b + 2]
            for pre, edge, edge_cache in caches[2 * b : 2 * b + 2]:
                gx, gp = edge.backward(gy, edge_cache, params[edge.key])
                node_grads[pre] += gx
                if gp is not None:
                    grads[edge.key] += gp
        return node_grads[0], node_grads[1]


class MicroNet:
    """Stacked-cell network: searched edge weights live in `params` (keyed by
    the store), the per-cell projections and the classifier head live with
    the instance."""

    def __init__(
        self,
        genotype: Genotype,
        macro: MacroConfig,
        classes: int,
        inherited: InheritedWeights,
        rng: np.random.Generator,
    ):
        d = macro.feature_dim
        self.macro = macro
        self.classes = classes
        self.cells = [_CellInstance(genotype, ct, d) for ct in macro.cell_sequence()]
        self.params: Dict[WeightKey, np.ndarray] = {}
        for key, entry in inherited.items():
            expected = op_param_shape(key.op, edge_position(key.cell_type, key.source_node, d)[1])
            if tuple(entry.params.shape) != expected:
                raise ShapeMismatch(f"{key.text()}: got {entry.params.shape}, expected {expected}")
            self.params[key] = entry.params.astype(float).copy()
        # Projection init is calibrated with a probe batch so every cell
        # emits roughly unit-scale features: per-genotype path gains differ
        # by orders of magnitude (identity/pool chains vs stacked convs) and
        # an uncalibrated stack diverges under the default learning rate.
        probe_pp = probe_p = rng.normal(size=(64, d))
        self.projections = []
        for cell in self.cells:
            concat, _ = cell.forward(probe_pp, probe_p, self.params)
            fan_in = cell.num_blocks * cell.mid_width
            rms = float(np.sqrt(np.mean(concat**2)))
            a = math.sqrt(3.0 / fan_in) / max(rms, 1e-6)
            proj_w = rng.uniform(-a, a, size=(d, fan_in))
            proj_b = np.zeros(d)
            self.projections.append([proj_w, proj_b])
            probe_pp, probe_p = probe_p, concat @ proj_w.T + proj_b
        # zero head: untrained nets score exactly ln(classes) and early SGD
        # ramps the architecture gradients in gradually
        self.head = [np.zeros((classes, d)), np.zeros(classes)]

    # -- passes ---------------------------------------------------------------

    def forward(self, x: np.ndarray):
        s_prev_prev, s_prev = x, x
        caches = []
        for cell, (proj_w, proj_b) in zip(self.cells, self.projections):
            concat, cell_cache = cell.forward(s_prev_prev, s_prev, self.params)
            out = concat @ proj_w.T + proj_b
            caches.append((cell_cache, concat))
            s_prev_prev, s_prev = s_prev, out
        logits = s_prev @ self.head[0].T + self.head[1]
        return logits, (caches, s_prev)

    def predict_logits(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        logits, (caches, final) = self.forward(x)
        batch = x.shape[0]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(log_norm - shifted[np.arange(batch), y]))

        probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
        grad_logits = probs
        grad_logits[np.arange(batch), y] -= 1.0
        grad_logits /= batch

        grads = {key: np.zeros_like(p) for key, p in self.params.items()}
        head_w, _ = self.head
        grad_head_w = grad_logits.T @ final
        grad_head_b = grad_logits.sum(axis=0)
        grad_out = grad_logits @ head_w

        proj_grads = [None] * len(self.cells)
        grad_prev = grad_out          # d loss / d output of cell i
        grad_prev_prev = np.zeros_like(grad_out)
        for i in range(len(self.cells) - 1, -1, -1):
            cell_cache, concat = caches[i]
            proj_w, _ = self.projections[i]
            proj_grads[i] = [grad_prev.T @ concat, grad_prev.sum(axis=0)]
            grad_concat = grad_prev @ proj_w
            g0, g1 = self.cells[i].backward(grad_concat, cell_cache, self.params, grads)
            # cell i read (output of cell i-2, output of cell i-1)
            grad_prev = grad_prev_prev + g1
            grad_prev_prev = g0
        grad_input = grad_prev + grad_prev_prev  # both stem slots are the input

        return loss, grads, proj_grads, [grad_head_w, grad_head_b], grad_input

    def validation_loss(self, x: np.ndarray, y: np.ndarray) -> float:
        logits = self.predict_logits(x)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        return float(np.mean(log_norm - shifted[np.arange(len(y)), y]))

    # -- bookkeeping ----------------------------------------------------------

    def parameter_count(self) -> int:
        count = sum(p.size for p in self.params.values())
        count += sum(w.size + b.size for w, b in self.projections)
        count += self.head[0].size + self.head[1].size
        return count


def build_network(
    genotype: Genotype,
    macro: MacroConfig,
    classes: int,
    weights: InheritedWeights,
    rng: np.random.Generator,
) -> MicroNet:
    return MicroNet(genotype, macro, classes, weights, rng)


def sgd_epoch(
    net: MicroNet,
    hyper: TrainHyper,
    data: DatasetSplit,
    epoch_index: int,
    rng: np.random.Generator,
) -> float:
    """One shuffled pass of plain SGD with weight decay, then validation loss."""
    lr = hyper.lr(epoch_index)
    order = rng.permutation(len(data.train_x))
    for start in range(0, len(order), hyper.batch_size):
        batch = order[start : start + hyper.batch_size]
        loss, grads, proj_grads, head_grads, _ = net.loss_and_grads(
            data.train_x[batch], data.train_y[batch]
        )
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"training loss diverged to {loss!r}")
        if lr == 0.0:
            continue
        wd = hyper.weight_decay
        for key, grad in grads.items():
            if net.params[key].size:
                net.params[key] -= lr * (grad + wd * net.params[key])
        for (pw, pb), (gw, gb) in zip(net.projections, proj_grads):
            pw -= lr * (gw + wd * pw)
            pb -= lr * (gb + wd * pb)
        net.head[0] -= lr * (head_grads[0] + wd * net.head[0])
        net.head[1] -= lr * (head_grads[1] + wd * net.head[1])
    val = net.validation_loss(data.val_x, data.val_y)
    if not math.isfinite(val):
        raise NonFiniteLoss(f"validation loss diverged to {val!r}")
    return val


class MicronetEvaluator:
    """Estimate = build from inherited weights, train one epoch, validate.

    All per-request randomness (projection/head init, batch order) derives
    from (seed, epoch index, genotype), so repeated estimates of the same
    request agree bitwise and no mutable state survives between calls.
    """

    def __init__(self, hyper: TrainHyper, macro: MacroConfig, data: DatasetSplit, seed: int):
        self.hyper = hyper
        self.macro = macro
        self.data = data
        self.seed = seed

    def shape_registry(self, scheme: SearchSpaceScheme) -> Dict[WeightKey, Tuple[int, ...]]:
        return shape_registry(scheme, self.macro)

    def _request_rng(self, req: EstimationRequest) -> np.random.Generator:
        digest = hashlib.sha256(genotype_key(req.genotype).encode()).digest()
        entropy = [self.seed, stream_key("estimate"), req.epoch_index, int.from_bytes(digest[:8], "little")]
        return np.random.default_rng(np.random.SeedSequence(entropy))

    def estimate(self, req: EstimationRequest) -> EstimationResult:
        rng = self._request_rng(req)
        net = build_network(req.genotype, self.macro, self.data.classes, req.inherited, rng)
        val = sgd_epoch(net, self.hyper, self.data, req.epoch_index, rng)
        trained = {
            key: WeightEntry(params=net.params[key].copy(), version=entry.version)
            for key, entry in req.inherited.items()
        }
        return EstimationResult(validation_loss=val, trained=trained)
