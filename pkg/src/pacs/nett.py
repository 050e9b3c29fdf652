"""NETT reconstruction with a trained or a finite-difference regularizer.

The functional is

    1/2 |A f - g|^2 + lambda/2 R(f)

with ``R(f) = |V(f)|_F^2`` for a trained network ``V``, ``R(f) = |D_x f|^2 +
|D_y f|^2`` for the deterministic (H1) variant, and optionally ``+ a |f|^2``.
It is minimised by a fixed number of incremental gradient sweeps: a data
step followed by a regularizer step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .imaging import grad_xy, gradient_normal
from .nn.network import Network, backprop
from .sampling import CSOperator

log = logging.getLogger(__name__)


@dataclass
class NettParams:
    mu: float = 0.5
    lam: float = 0.5
    iterations: int = 10
    regularizer: str = "trained"  # trained | deterministic | trained_augmented
    weights: Network | None = field(default=None, repr=False)
    a: float = 0.0
    nonneg_clamp: bool = False
    # evaluate the regularizer gradient at the previous iterate instead of after the data step
    paper_literal_indices: bool = False

    def __post_init__(self):
        if self.regularizer not in ("trained", "deterministic", "trained_augmented"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.mu < 0 or self.lam < 0 or self.a < 0:
            raise ValueError("mu, lambda and a must be non-negative")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.regularizer != "deterministic" and self.weights is None:
            raise ValueError(f"regularizer {self.regularizer!r} needs network weights")


def _network_value(net: Network, f) -> np.ndarray:
    return np.asarray(net.forward(np.asarray(f)[None]), dtype=float)[0]


def regularizer_value(f, params: NettParams) -> float:
    f = np.asarray(f, dtype=float)
    if params.regularizer == "deterministic":
        dx, dy = grad_xy(f)
        return float(np.sum(dx**2) + np.sum(dy**2))
    r = float(np.sum(_network_value(params.weights, f) ** 2))
    if params.regularizer == "trained_augmented":
        r += params.a * float(np.sum(f**2))
    return r


def regularizer_gradient(f, params: NettParams) -> np.ndarray:
    """Gradient of ``R(f) / 2``.

    For a network this is the input gradient of ``|V(f)|^2 / 2``, i.e. the
    reverse pass of ``V`` with cotangent ``V(f)``.
    """
    f = np.asarray(f, dtype=float)
    if params.regularizer == "deterministic":
        return gradient_normal(f)
    if f.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {f.shape}")
    net = params.weights
    x = f[None].astype(net.dtype)
    v = net.forward(x)
    _, dx = backprop(net, x, v)
    grad = np.asarray(dx, dtype=float)[0]
    if params.regularizer == "trained_augmented":
        grad = grad + params.a * f
    return grad


def nett_objective(f, g, op: CSOperator, params: NettParams) -> float:
    r = op.apply_A(f) - g
    return float(0.5 * np.sum(r**2) + 0.5 * params.lam * regularizer_value(f, params))


def nett_step(f, g, op: CSOperator, params: NettParams) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != op.grid.shape or np.shape(g) != op.data_shape:
        raise ValueError(f"image {f.shape} / data {np.shape(g)} do not match the operator")
    fhat = f - params.mu * op.apply_A_transpose(op.apply_A(f) - g)
    at = f if params.paper_literal_indices else fhat
    out = fhat - params.mu * params.lam * regularizer_gradient(at, params)
    if params.nonneg_clamp:
        out = np.maximum(out, 0.0)
    return out


def solve_nett(g, op: CSOperator, params: NettParams, init=None):
    """Run ``params.iterations`` sweeps from ``init`` (default ``A^sharp g``).

    Returns ``(f, history)`` with the objective before the first and after
    every sweep.
    """
    g = np.asarray(g, dtype=float)
    f = op.apply_A_sharp(g) if init is None else np.asarray(init, dtype=float).copy()
    history = [nett_objective(f, g, op, params)]
    for _ in range(params.iterations):
        f = nett_step(f, g, op, params)
        history.append(nett_objective(f, g, op, params))
    log.debug("nett: objective %.6g -> %.6g", history[0], history[-1])
    return f, history


def reconstruct_residual_unet(g, op: CSOperator, net: Network) -> np.ndarray:
    """``A^sharp g + U(A^sharp g)`` in one forward pass of the residual net."""
    if np.shape(g) != op.data_shape:
        raise ValueError(f"data shape {np.shape(g)} != {op.data_shape}")
    b = op.apply_A_sharp(g)
    # the skip connection is added in binary64 so that U = 0 returns b exactly
    return b + np.asarray(net.forward(b[None], residual_only=True), dtype=float)[0]
