"""Frame-level multi-label losses with analytic gradients.

Every loss takes multi-hot targets ``y`` and predicted probabilities ``p``
with classes on the last axis, and returns ``(value, gradient)``: the value
is summed over classes (one number per frame), the gradient is
``d value / d p`` with the shape of ``p``. Leading axes are frames.

Each loss splits into an *active* part (weighted by the targets) and an
*inactive* part (weighted by one minus the targets)::

    loss          active                     inactive
    bce           -y . log p                 -(1 - y) . log(1 - p)
    bootstrap     -y~ . log p                -(1 - y~) . log(1 - p)
    label_smooth  -y_s . log p               -(1 - y_s) . log(1 - p)
    gce           y . (1 - p**q) / q         (1 - y) . (1 - (1 - p)**q) / q

with ``y~ = beta*y + (1 - beta)*p`` and ``y_s = y*(1 - alpha) + alpha/2``.
The reweighted loss ``srl`` scales the two parts by ``gamma`` and ``xi``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

EPS = 1e-7

BETA_SWEEP = tuple(round(0.1 * i, 1) for i in range(1, 11))
ALPHA_SWEEP = (0.05, 0.1, 0.2, 0.4, 0.8)
Q_SWEEP = tuple(round(0.1 * i, 1) for i in range(1, 10))
XI_SWEEP = (1.0, 0.5, 0.25, 0.125, 0.0625)

BASE_LOSSES = ("bce", "bootstrap", "label_smooth", "gce")
LOSSES = BASE_LOSSES + ("srl",)


class GradientCheckError(AssertionError):
    pass


@dataclass(frozen=True)
class LossParams:
    """Loss hyperparameters.

    beta : float in (0, 1]
        Bootstrap blend between the given targets and the predictions.
    alpha : float in [0, 1)
        Label smoothing strength.
    q : float in (0, 1]
        GCE exponent; small q behaves like BCE, q = 1 is MAE.
    gamma, xi : float >= 0
        Weights of the active and inactive parts in ``srl``.
    """

    beta: float = 0.9
    alpha: float = 0.4
    q: float = 0.5
    gamma: float = 1.0
    xi: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not 0.0 < self.q <= 1.0:
            raise ValueError(f"q must lie in (0, 1], got {self.q}")
        if not self.gamma >= 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.xi >= 0.0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")

    def as_dict(self) -> dict:
        return asdict(self)


def _inputs(y, p):
    y = np.asarray(y, dtype=float)
    p = np.clip(np.asarray(p, dtype=float), EPS, 1.0 - EPS)
    if y.shape != p.shape:
        raise ValueError(f"targets {y.shape} and predictions {p.shape} differ in shape")
    return y, p


def bootstrap_target(y, p, beta: float) -> np.ndarray:
    y, p = _inputs(y, p)
    return beta * y + (1.0 - beta) * p


def smooth_target(y, alpha: float) -> np.ndarray:
    return np.asarray(y, dtype=float) * (1.0 - alpha) + alpha / 2.0


def soft_bce(target, p):
    """Cross entropy against a fixed soft target (no gradient through it)."""
    t = np.asarray(target, dtype=float)
    _, p = _inputs(t, p)
    value = np.sum(-t * np.log(p) - (1.0 - t) * np.log(1.0 - p), axis=-1)
    grad = -t / p + (1.0 - t) / (1.0 - p)
    return value, grad


def bce(y, p):
    return soft_bce(_inputs(y, p)[0], p)


def bootstrap(y, p, beta: float = 0.9, stop_gradient: bool = True):
    """Soft bootstrapping.

    By default the blended target is a constant for the gradient. With
    ``stop_gradient=False`` the gradient also flows through the target,
    adding ``(1 - beta) * (log(1 - p) - log p)`` per class.
    """
    y, pc = _inputs(y, p)
    target = beta * y + (1.0 - beta) * pc
    value, grad = soft_bce(target, pc)
    if not stop_gradient:
        grad = grad + (1.0 - beta) * (np.log(1.0 - pc) - np.log(pc))
    return value, grad


def label_smooth(y, p, alpha: float = 0.4):
    y, p = _inputs(y, p)
    return soft_bce(smooth_target(y, alpha), p)


def gce(y, p, q: float = 0.5):
    y, p = _inputs(y, p)
    value = np.sum(y * (1.0 - p**q) / q + (1.0 - y) * (1.0 - (1.0 - p) ** q) / q, axis=-1)
    grad = -y * p ** (q - 1.0) + (1.0 - y) * (1.0 - p) ** (q - 1.0)
    return value, grad


def loss_parts(base: str, y, p, params: LossParams = LossParams()):
    """``(active, inactive, d_active, d_inactive)`` of a base loss."""
    y, p = _inputs(y, p)
    if base == "gce":
        q = params.q
        return (np.sum(y * (1.0 - p**q) / q, axis=-1),
                np.sum((1.0 - y) * (1.0 - (1.0 - p) ** q) / q, axis=-1),
                -y * p ** (q - 1.0),
                (1.0 - y) * (1.0 - p) ** (q - 1.0))
    if base == "bce":
        t = y
    elif base == "bootstrap":
        t = params.beta * y + (1.0 - params.beta) * p
    elif base == "label_smooth":
        t = smooth_target(y, params.alpha)
    else:
        raise ValueError(f"unknown base loss {base!r}")
    return (np.sum(-t * np.log(p), axis=-1),
            np.sum(-(1.0 - t) * np.log(1.0 - p), axis=-1),
            -t / p,
            (1.0 - t) / (1.0 - p))


def srl(base: str, y, p, params: LossParams = LossParams()):
    """Reweighted loss ``gamma * active + xi * inactive`` of ``base``."""
    active, inactive, d_active, d_inactive = loss_parts(base, y, p, params)
    value = params.gamma * active + params.xi * inactive
    grad = params.gamma * d_active + params.xi * d_inactive
    return value, grad


def loss_fn(op: str, params: LossParams = LossParams(), base: str = "bce") -> Callable:
    """Bind ``op`` to its hyperparameters as a ``(y, p) -> (value, grad)`` callable."""
    if op == "bce":
        return bce
    if op == "bootstrap":
        return lambda y, p: bootstrap(y, p, params.beta)
    if op == "label_smooth":
        return lambda y, p: label_smooth(y, p, params.alpha)
    if op == "gce":
        return lambda y, p: gce(y, p, params.q)
    if op == "srl":
        if base not in BASE_LOSSES:
            raise ValueError(f"unknown base loss {base!r}")
        return lambda y, p: srl(base, y, p, params)
    raise ValueError(f"unknown loss {op!r}")


def batch_loss(op: str, y, p, params: LossParams = LossParams(), base: str = "bce"):
    """Mean frame loss over a ``[frames, M]`` batch, and its gradient."""
    value, grad = loss_fn(op, params, base)(y, p)
    n = np.shape(value)[0] if np.ndim(value) else 1
    return float(np.mean(value)), grad / n


def _frozen_target_fn(op: str, y, p, params: LossParams, base: str) -> Callable:
    # the bootstrap target is a constant of the gradient, so hold it at p
    if op == "bootstrap" or (op == "srl" and base == "bootstrap"):
        target = bootstrap_target(y, p, params.beta)
        if op == "bootstrap":
            return lambda q_: soft_bce(target, q_)[0]

        def fn(q_):
            _, q_ = _inputs(target, q_)
            return np.sum(-params.gamma * target * np.log(q_)
                          - params.xi * (1.0 - target) * np.log(1.0 - q_), axis=-1)
        return fn
    f = loss_fn(op, params, base)
    return lambda q_: f(y, q_)[0]


def grad_check(op: str, y, p, params: LossParams = LossParams(), h: float = 1e-6,
               base: str = "bce") -> float:
    """Largest relative gap between the analytic and a central-difference gradient.

    The gap of one component is ``|a - n| / max(|a|, |n|, 1)``, i.e. relative
    for gradients above one in magnitude and absolute below. For bootstrap the
    blended target is held fixed at ``p``, matching the analytic gradient.
    """
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    _, analytic = loss_fn(op, params, base)(y, p)
    f = _frozen_target_fn(op, y, p, params, base)
    numeric = np.zeros_like(p)
    flat = numeric.reshape(-1)
    for i in range(p.size):
        step = np.zeros(p.size)
        step[i] = h
        step = step.reshape(p.shape)
        flat[i] = np.sum(f(p + step) - f(p - step)) / (2.0 * h)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / scale)) if p.size else 0.0

