"""Compressed-sensing measurement matrices and the composed operators A = S W."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .wave import WaveOperator


@dataclass
class SamplingScheme:
    """``m x M`` measurement matrix ``S`` acting on the sensor index.

    ``sparse`` keeps every ``M/m``-th sensor with weight ``v``;
    ``bernoulli`` draws every entry as ``+-1/sqrt(m)`` from ``seed``.
    """

    kind: str
    m: int
    M: int
    seed: int = 0
    v: float = 2.0
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.m <= self.M:
            raise ValueError(f"need 1 <= m <= M, got m={self.m}, M={self.M}")
        if self.kind == "sparse":
            if self.M % self.m:
                raise ValueError(f"sparse sampling needs m | M, got m={self.m}, M={self.M}")
            S = np.zeros((self.m, self.M))
            S[np.arange(self.m), (self.M // self.m) * np.arange(self.m)] = self.v
        elif self.kind == "bernoulli":
            rng = np.random.default_rng(self.seed)
            S = rng.choice([-1.0, 1.0], size=(self.m, self.M)) / np.sqrt(self.m)
        else:
            raise ValueError(f"unknown sampling kind {self.kind!r}")
        self.matrix = S

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m, "M": self.M, "seed": self.seed, "v": self.v}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingScheme":
        return cls(d["kind"], int(d["m"]), int(d["M"]), int(d.get("seed", 0)), float(d.get("v", 2.0)))


def make_scheme(kind: str, m: int, M: int, seed: int = 0, v: float = 2.0) -> SamplingScheme:
    return SamplingScheme(kind, m, M, seed, v)


def apply_S(scheme: SamplingScheme, p) -> np.ndarray:
    """``g[j, l] = sum_k S[j, k] p[k, l]`` for every time index ``l``."""
    p = np.asarray(p, dtype=float)
    if p.shape[-2] != scheme.M:
        raise ValueError(f"expected {scheme.M} channels, got {p.shape[-2]}")
    return scheme.matrix @ p


def apply_S_transpose(scheme: SamplingScheme, g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape[-2] != scheme.m:
        raise ValueError(f"expected {scheme.m} channels, got {g.shape[-2]}")
    return scheme.matrix.T @ g


def add_noise(y, level: float, seed: int = 0) -> np.ndarray:
    """Add white Gaussian noise with standard deviation ``level * rms(y)``."""
    if level < 0:
        raise ValueError(f"noise level must be non-negative, got {level}")
    y = np.asarray(y, dtype=float)
    if level == 0:
        return y.copy()
    sigma = level * np.linalg.norm(y) / np.sqrt(y.size)
    return y + sigma * np.random.default_rng(seed).standard_normal(y.shape)


class CSOperator:
    """``A = (S kron I) W`` with its exact transpose and the initial reconstruction ``B S^T``."""

    def __init__(self, wave: WaveOperator, scheme: SamplingScheme):
        if scheme.M != wave.M:
            raise ValueError(f"scheme expects {scheme.M} sensors, operator has {wave.M}")
        self.wave = wave
        self.scheme = scheme

    @property
    def grid(self):
        return self.wave.grid

    @property
    def data_shape(self) -> tuple[int, int]:
        return (self.scheme.m, self.wave.Q)

    def apply_A(self, f) -> np.ndarray:
        return apply_S(self.scheme, self.wave.forward(f, check_support=False))

    def apply_A_transpose(self, g) -> np.ndarray:
        return self.wave.adjoint(apply_S_transpose(self.scheme, g))

    def apply_A_sharp(self, g) -> np.ndarray:
        return self.wave.fbp(apply_S_transpose(self.scheme, g))

    def normal(self, f) -> np.ndarray:
        return self.apply_A_transpose(self.apply_A(f))

    def dt2(self, g) -> np.ndarray:
        return self.wave.dt2(g)

    def initial_reconstruction(self, f) -> np.ndarray:
        """``A^sharp A f``, the artefact-bearing input image for a phantom ``f``."""
        return self.apply_A_sharp(self.apply_A(f))


def power_iteration(op, shape, iters: int = 50, seed: int = 0) -> float:
    """Largest eigenvalue of the symmetric positive semi-definite map ``op``."""
    x = np.random.default_rng(seed).standard_normal(shape)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = op(x)
        lam = float(np.vdot(x, y))
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        x = y / nrm
    return lam
