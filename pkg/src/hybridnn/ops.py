"""Layer operation kernels: forward, backward, and shape rules.

Each kind works on float32 arrays with a leading batch dimension and a
fixed, sequential reduction order, so repeated evaluation of the same
inputs is bit-identical. Backward kernels return the input gradient plus
gradients for every parameter of the node.

Per-sample shapes (no batch dimension) drive validation and memory
accounting; see infer_shape / param_shapes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ShapeMismatchError

F32 = np.float32

# attrs accepted per kind: name -> (required, validator)
_POS_INT = lambda v: isinstance(v, int) and not isinstance(v, bool) and v > 0
_NONNEG_INT = lambda v: isinstance(v, int) and not isinstance(v, bool) and v >= 0


def _conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


# ---------------------------------------------------------------------------
# dense


def _dense_shape(in_shape, attrs):
    if len(in_shape) != 1:
        raise ValueError(f"dense expects a flat input, got {in_shape}")
    return (attrs["units"],)


def _dense_params(in_shape, attrs):
    return {"weight": (attrs["units"], in_shape[0]), "bias": (attrs["units"],)}


def _dense_fwd(x, params, attrs):
    y = x @ params["weight"].T + params["bias"]
    return y, {"x": x}


def _dense_bwd(dy, aux, params, attrs):
    dx = dy @ params["weight"]
    dw = dy.T @ aux["x"]
    db = dy.sum(axis=0)
    return dx, {"weight": dw, "bias": db}


# ---------------------------------------------------------------------------
# relu


def _relu_fwd(x, params, attrs):
    return np.maximum(x, F32(0.0)), {"mask": x > 0}


def _relu_bwd(dy, aux, params, attrs):
    return dy * aux["mask"], {}


# ---------------------------------------------------------------------------
# conv2d


def _conv2d_shape(in_shape, attrs):
    if len(in_shape) != 3:
        raise ValueError(f"conv2d expects (channels, h, w), got {in_shape}")
    c, h, w = in_shape
    k, s, p = attrs["kernel"], attrs.get("stride", 1), attrs.get("padding", 0)
    oh, ow = _conv_out(h, k, s, p), _conv_out(w, k, s, p)
    if oh < 1 or ow < 1:
        raise ValueError(f"kernel {k} too large for input {in_shape}")
    return (attrs["filters"], oh, ow)


def _conv2d_params(in_shape, attrs):
    c = in_shape[0]
    k = attrs["kernel"]
    return {"weight": (attrs["filters"], c, k, k), "bias": (attrs["filters"],)}


def _im2col(x, k, s, oh, ow):
    n, c = x.shape[:2]
    cols = np.empty((n, c, k, k, oh, ow), dtype=F32)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = x[:, :, i : i + s * oh : s, j : j + s * ow : s]
    return cols


def _conv2d_fwd(x, params, attrs):
    k, s, p = attrs["kernel"], attrs.get("stride", 1), attrs.get("padding", 0)
    w, b = params["weight"], params["bias"]
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    n, c, h, wd = x.shape
    oh, ow = _conv_out(h, k, s, 0), _conv_out(wd, k, s, 0)
    cols = _im2col(x, k, s, oh, ow)
    # (n, oh*ow, c*k*k) @ (c*k*k, filters)
    flat = cols.reshape(n, c * k * k, oh * ow)
    y = np.matmul(flat.transpose(0, 2, 1), w.reshape(w.shape[0], -1).T)
    y += b
    y = y.transpose(0, 2, 1).reshape(n, w.shape[0], oh, ow)
    return np.ascontiguousarray(y), {"cols": cols, "in_shape": x.shape, "padding": p}


def _conv2d_bwd(dy, aux, params, attrs):
    k, s = attrs["kernel"], attrs.get("stride", 1)
    w = params["weight"]
    cols, padded_shape, p = aux["cols"], aux["in_shape"], aux["padding"]
    db = dy.sum(axis=(0, 2, 3))
    dw = np.einsum("nfhw,ncijhw->fcij", dy, cols, dtype=F32, casting="same_kind")
    dcols = np.einsum("nfhw,fcij->ncijhw", dy, w, dtype=F32, casting="same_kind")
    oh, ow = dy.shape[2], dy.shape[3]
    dxp = np.zeros(padded_shape, dtype=F32)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + s * oh : s, j : j + s * ow : s] += dcols[:, :, i, j]
    if p:
        dxp = dxp[:, :, p:-p, p:-p]
    return np.ascontiguousarray(dxp), {"weight": dw, "bias": db}


# ---------------------------------------------------------------------------
# maxpool2d


def _maxpool_shape(in_shape, attrs):
    if len(in_shape) != 3:
        raise ValueError(f"maxpool2d expects (channels, h, w), got {in_shape}")
    c, h, w = in_shape
    k = attrs["kernel"]
    s = attrs.get("stride", k)
    oh, ow = _conv_out(h, k, s, 0), _conv_out(w, k, s, 0)
    if oh < 1 or ow < 1:
        raise ValueError(f"pool kernel {k} too large for input {in_shape}")
    return (c, oh, ow)


def _maxpool_fwd(x, params, attrs):
    k = attrs["kernel"]
    s = attrs.get("stride", k)
    n, c, h, w = x.shape
    oh, ow = _conv_out(h, k, s, 0), _conv_out(w, k, s, 0)
    win = np.empty((n, c, oh, ow, k, k), dtype=F32)
    for i in range(k):
        for j in range(k):
            win[:, :, :, :, i, j] = x[:, :, i : i + s * oh : s, j : j + s * ow : s]
    flat = win.reshape(n, c, oh, ow, k * k)
    idx = flat.argmax(axis=-1)  # first max on ties: deterministic
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(y), {"idx": idx, "in_shape": x.shape}


def _maxpool_bwd(dy, aux, params, attrs):
    k = attrs["kernel"]
    s = attrs.get("stride", k)
    idx, in_shape = aux["idx"], aux["in_shape"]
    n, c, oh, ow = idx.shape
    dx = np.zeros(in_shape, dtype=F32)
    ni, ci, ohi, owi = np.indices(idx.shape)
    hi = ohi * s + idx // k
    wi = owi * s + idx % k
    np.add.at(dx, (ni, ci, hi, wi), dy)
    return dx, {}


# ---------------------------------------------------------------------------
# flatten


def _flatten_shape(in_shape, attrs):
    return (int(np.prod(in_shape)),) if in_shape else (1,)


def _flatten_fwd(x, params, attrs):
    return np.ascontiguousarray(x.reshape(x.shape[0], -1)), {"in_shape": x.shape}


def _flatten_bwd(dy, aux, params, attrs):
    return dy.reshape(aux["in_shape"]), {}


# ---------------------------------------------------------------------------
# softmax-cross-entropy (batch-reducing loss head; only valid as output node)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def check_class_indices(targets: np.ndarray, classes: int) -> np.ndarray:
    """Cast float-encoded class labels to ints, rejecting bad values."""
    idx = targets.reshape(-1)
    as_int = idx.astype(np.int64)
    if not np.all(as_int == idx):
        raise ValueError("targets must hold integral class indices")
    if as_int.size and (as_int.min() < 0 or as_int.max() >= classes):
        raise ValueError(f"target class out of range [0, {classes})")
    return as_int


def _sce_shape(in_shape, attrs):
    if len(in_shape) != 1:
        raise ValueError(f"softmax-cross-entropy expects logits, got {in_shape}")
    return ()


def _sce_fwd(x, params, attrs, targets=None):
    if targets is None:
        raise ValueError("softmax-cross-entropy needs batch targets")
    t = check_class_indices(np.asarray(targets), x.shape[1])
    if t.shape[0] != x.shape[0]:
        raise ValueError("targets batch dimension does not match logits")
    shifted = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted[np.arange(x.shape[0]), t] - lse
    loss = F32(-np.mean(logp, dtype=F32))
    probs = np.exp(shifted - lse[:, None])
    return np.asarray(loss, dtype=F32), {"probs": probs, "targets": t}


def _sce_bwd(dy, aux, params, attrs):
    probs, t = aux["probs"], aux["targets"]
    n = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(n), t] -= F32(1.0)
    grad *= F32(dy) / F32(n)
    return grad, {}


def softmax_cross_entropy(logits: np.ndarray, targets) -> tuple[np.float32, np.ndarray]:
    """Mean cross-entropy loss over a batch and its gradient wrt logits.

    The criterion used for every classification sub-model; also available
    as a graph node through the op registry.
    """
    loss, aux = _sce_fwd(logits, {}, {}, targets=targets)
    dlogits, _ = _sce_bwd(F32(1.0), aux, {}, {})
    return loss, dlogits


# ---------------------------------------------------------------------------
# embedding-lookup


def _embed_shape(in_shape, attrs):
    if len(in_shape) != 1:
        raise ValueError(f"embedding-lookup expects token indices, got {in_shape}")
    return (in_shape[0], attrs["dim"])


def _embed_params(in_shape, attrs):
    return {"table": (attrs["vocab"], attrs["dim"])}


def _embed_fwd(x, params, attrs):
    table = params["table"]
    idx = check_class_indices(x, table.shape[0]).reshape(x.shape)
    return np.ascontiguousarray(table[idx]), {"idx": idx}


def _embed_bwd(dy, aux, params, attrs):
    table = params["table"]
    dt = np.zeros_like(table)
    np.add.at(dt, aux["idx"].reshape(-1), dy.reshape(-1, table.shape[1]))
    return None, {"table": dt}  # indices carry no gradient


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class OpKind:
    name: str
    attr_spec: dict  # attr name -> (required, validator)
    infer_shape: Callable
    param_shapes: Callable
    forward: Callable
    backward: Callable
    loss_head: bool = False
    takes_targets: bool = False


def _no_params(in_shape, attrs):
    return {}


OP_KINDS: dict[str, OpKind] = {
    k.name: k
    for k in [
        OpKind(
            "dense",
            {"units": (True, _POS_INT)},
            _dense_shape,
            _dense_params,
            _dense_fwd,
            _dense_bwd,
        ),
        OpKind(
            "relu",
            {},
            lambda s, a: tuple(s),
            _no_params,
            _relu_fwd,
            _relu_bwd,
        ),
        OpKind(
            "conv2d",
            {
                "filters": (True, _POS_INT),
                "kernel": (True, _POS_INT),
                "stride": (False, _POS_INT),
                "padding": (False, _NONNEG_INT),
            },
            _conv2d_shape,
            _conv2d_params,
            _conv2d_fwd,
            _conv2d_bwd,
        ),
        OpKind(
            "maxpool2d",
            {"kernel": (True, _POS_INT), "stride": (False, _POS_INT)},
            _maxpool_shape,
            _no_params,
            _maxpool_fwd,
            _maxpool_bwd,
        ),
        OpKind(
            "flatten",
            {},
            _flatten_shape,
            _no_params,
            _flatten_fwd,
            _flatten_bwd,
        ),
        OpKind(
            "softmax-cross-entropy",
            {},
            _sce_shape,
            _no_params,
            _sce_fwd,
            _sce_bwd,
            loss_head=True,
            takes_targets=True,
        ),
        OpKind(
            "embedding-lookup",
            {"vocab": (True, _POS_INT), "dim": (True, _POS_INT)},
            _embed_shape,
            _embed_params,
            _embed_fwd,
            _embed_bwd,
        ),
    ]
}


def kaiming_bound(fan_in: int) -> float:
    """Uniform init bound for relu-gain layers."""
    return math.sqrt(6.0 / fan_in)


def init_node_params(node_id: str, op: str, shapes: dict, seed: int, rng_stream) -> dict:
    """Seeded initial values for one node's parameters.

    Keyed by (seed, parameter id) so values never depend on merge order or
    on any other node; biases start at zero.
    """
    out = {}
    for name, shape in shapes.items():
        pid = f"{node_id}.{name}"
        if name == "bias":
            out[pid] = np.zeros(shape, dtype=F32)
            continue
        gen = rng_stream("init", seed, pid)
        if op == "dense":
            bound = kaiming_bound(shape[1])
        elif op == "conv2d":
            bound = kaiming_bound(shape[1] * shape[2] * shape[3])
        elif op == "embedding-lookup":
            bound = 1.0 / math.sqrt(shape[1])
        else:
            bound = 1.0
        out[pid] = gen.uniform(-bound, bound, size=shape).astype(F32)
    return out
