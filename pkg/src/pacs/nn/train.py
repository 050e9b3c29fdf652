"""MAE loss, Adam and the minibatch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .network import Network

log = logging.getLogger(__name__)


@dataclass
class TrainPair:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x)
        self.y = np.asarray(self.y)
        if self.x.shape[-2:] != self.y.shape[-2:]:
            raise ValueError(f"input {self.x.shape} and target {self.y.shape} differ in spatial size")


def mae_loss(pred, target) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def mae_cotangent(pred, target) -> np.ndarray:
    """Subgradient of :func:`mae_loss` in ``pred``, with ``sign(0) = 0``."""
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return np.sign(pred - target) / pred.size


@dataclass
class AdamState:
    lr: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float = 0.0005, **kw) -> "AdamState":
        return cls(lr, **kw, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params, grads) -> list[np.ndarray]:
    """One bias-corrected Adam update; mutates ``state`` and returns new parameters."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter, gradient and moment lists differ in length")
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1**t
    c2 = 1 - state.beta2**t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter {p.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1 - state.beta2) * g * g
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        out.append((p - state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype))
    return out


def make_regularizer_dataset(phantoms, op, n1: int | None = None, n2: int | None = None, initial=None):
    """Pairs ``(b_k, b_k - f_k)`` for the first ``n1`` phantoms, then ``(f_k, 0)``.

    ``b_k = A^sharp A f_k`` is taken from ``initial`` when given.  With the
    defaults ``n1 = n2 = len(phantoms)`` and the clean half reuses the same
    phantoms, giving ``2N`` pairs.
    """
    phantoms = [np.asarray(f, dtype=float) for f in phantoms]
    if not phantoms:
        raise ValueError("empty phantom list")
    N = len(phantoms)
    n1 = N if n1 is None else n1
    n2 = N if n2 is None else n2
    if initial is None:
        initial = [op.initial_reconstruction(f) for f in phantoms[:n1]]
    pairs = []
    for k in range(n1):
        f = phantoms[k % N]
        b = np.asarray(initial[k % len(initial)], dtype=float)
        pairs.append(TrainPair(b, b - f))
    for k in range(n2):
        f = phantoms[(n1 + k) % N]
        pairs.append(TrainPair(f, np.zeros_like(f)))
    return pairs


def make_unet_dataset(phantoms, initial):
    """Pairs ``(b_k, f_k)``: the residual net ``b + U(b)`` is fitted to ``f``."""
    if not phantoms:
        raise ValueError("empty phantom list")
    if len(phantoms) != len(initial):
        raise ValueError("phantom and initial reconstruction counts differ")
    return [TrainPair(b, f) for f, b in zip(phantoms, initial)]


def _as_batch(arrs, dtype):
    return np.stack([np.asarray(a, dtype=dtype).reshape((1,) + np.shape(a)[-2:]) for a in arrs])


def train(net: Network, dataset, epochs: int, lr: float = 0.0005, batch: int = 4, seed: int = 0,
          callback=None):
    """Shuffled minibatch Adam on the MAE loss.

    Returns ``(net, losses)`` where ``net`` is a trained copy and
    ``losses[e]`` is the mean batch loss of epoch ``e``.  The shuffle order
    is drawn from ``seed``.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if batch < 1 or epochs < 0:
        raise ValueError("batch must be positive and epochs non-negative")
    net = net.copy()
    X = _as_batch([p.x for p in dataset], net.dtype)
    Y = _as_batch([p.y for p in dataset], net.dtype)
    rng = np.random.default_rng(seed)
    params = net.params()
    adam = AdamState.for_params(params, lr)
    losses = []
    for epoch in range(epochs):
        order = rng.permutation(len(dataset))
        batch_losses = []
        for start in range(0, len(order), batch):
            idx = order[start : start + batch]
            pred, state = net.forward(X[idx], keep=True)
            batch_losses.append(mae_loss(pred, Y[idx]))
            grads, _ = net.backward(state, mae_cotangent(pred, Y[idx]).astype(net.dtype))
            if lr != 0:
                params = adam_step(adam, params, grads)
                net.set_params(params)
        losses.append(float(np.mean(batch_losses)))
        log.debug("epoch %d loss %.6g", epoch + 1, losses[-1])
        if callback is not None:
            callback(epoch, losses[-1])
    return net, losses
