"""Parameter update rules and the step-decay learning-rate schedule.

State lives outside the engine so a checkpoint can carry it verbatim:
SGD momentum buffers and Adam first/second moments plus the shared step
counter. Updates mutate parameter arrays in place, in sorted param-id
order, so two runs apply arithmetic identically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

F32 = np.float32

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DECAY_FACTOR = 0.1


def lr_at_epoch(base_lr: float, milestones: tuple[int, ...], epoch: int) -> float:
    """Learning rate in effect during a zero-based epoch.

    Each milestone is a one-based epoch number at whose start the rate
    drops by DECAY_FACTOR; passing epoch 3 with milestones (2, 4) means
    one drop has happened and the second applies from epoch index 3 on.
    """
    drops = sum(1 for m in milestones if epoch + 1 >= m)
    return base_lr * (DECAY_FACTOR ** drops)


@dataclass
class OptimizerState:
    """Per-job update-rule state, serialized into checkpoints."""

    kind: str
    momentum: float = 0.0
    step: int = 0
    # param id -> buffer; populated lazily on first update
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    m1: dict[str, np.ndarray] = field(default_factory=dict)
    m2: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def fresh(cls, kind: str, momentum: float = 0.0) -> "OptimizerState":
        if kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {kind!r}")
        return cls(kind=kind, momentum=momentum)


def apply_update(
    state: OptimizerState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
) -> None:
    """One optimizer step over every parameter, in place."""
    state.step += 1
    lr32 = F32(lr)
    if state.kind == "sgd":
        mom = F32(state.momentum)
        for pid in sorted(params):
            g = grads[pid]
            if state.momentum:
                v = state.velocity.get(pid)
                v = g.copy() if v is None else mom * v + g
                state.velocity[pid] = v
                g = v
            params[pid] -= lr32 * g
        return

    b1, b2, eps = F32(ADAM_BETA1), F32(ADAM_BETA2), F32(ADAM_EPS)
    t = state.step
    bias1 = F32(1.0 - ADAM_BETA1 ** t)
    bias2 = F32(1.0 - ADAM_BETA2 ** t)
    for pid in sorted(params):
        g = grads[pid]
        m = state.m1.get(pid)
        v = state.m2.get(pid)
        m = (F32(1.0) - b1) * g if m is None else b1 * m + (F32(1.0) - b1) * g
        v = (F32(1.0) - b2) * g * g if v is None else b2 * v + (F32(1.0) - b2) * g * g
        state.m1[pid] = m
        state.m2[pid] = v
        m_hat = m / bias1
        v_hat = v / bias2
        params[pid] -= lr32 * m_hat / (np.sqrt(v_hat) + eps)
