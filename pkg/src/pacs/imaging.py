"""Pixel grids and the discrete differential operators shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

INV_SQRT2 = 2.0 ** -0.5


@dataclass(frozen=True)
class Grid:
    """Square pixel grid covering ``extent = (x_min, x_max, y_min, y_max)``.

    Images on the grid are ``(n_side, n_side)`` arrays indexed ``[iy, ix]``;
    pixel centres sit at ``x_min + (ix + 1/2) * pixel_size``.
    """

    n_side: int = 64
    extent: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)

    def __post_init__(self):
        if self.n_side < 1:
            raise ValueError(f"n_side must be positive, got {self.n_side}")
        x0, x1, y0, y1 = (float(v) for v in self.extent)
        object.__setattr__(self, "extent", (x0, x1, y0, y1))
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"degenerate extent {self.extent}")
        if not np.isclose(x1 - x0, y1 - y0, rtol=1e-12, atol=0.0):
            raise ValueError("grid pixels must be square (equal side lengths)")

    @property
    def pixel_size(self) -> float:
        return (self.extent[1] - self.extent[0]) / self.n_side

    @property
    def n(self) -> int:
        return self.n_side**2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_side, self.n_side)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` arrays of pixel-centre coordinates."""
        h = self.pixel_size
        xs = self.extent[0] + (np.arange(self.n_side) + 0.5) * h
        ys = self.extent[2] + (np.arange(self.n_side) + 0.5) * h
        X, Y = np.meshgrid(xs, ys)
        return X, Y


@dataclass
class ImageField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )


def laplacian(f: np.ndarray, pixel_size: float = 1.0) -> np.ndarray:
    """5-point Laplacian with zero (Dirichlet) values outside the grid.

    The operator is symmetric, so it is its own transpose.
    """
    f = np.asarray(f)
    out = -4.0 * f
    out[1:, :] += f[:-1, :]
    out[:-1, :] += f[1:, :]
    out[:, 1:] += f[:, :-1]
    out[:, :-1] += f[:, 1:]
    return out / pixel_size**2


def grad_xy(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences ``2^{-1/2} (f[k+1] - f[k])`` along x (axis 1) and y (axis 0).

    The output is zero-padded at the trailing edge, so constants map to zero.
    """
    f = np.asarray(f, dtype=float)
    dx = np.zeros_like(f)
    dy = np.zeros_like(f)
    dx[:, :-1] = f[:, 1:] - f[:, :-1]
    dy[:-1, :] = f[1:, :] - f[:-1, :]
    return INV_SQRT2 * dx, INV_SQRT2 * dy


def grad_xy_adjoint(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Exact transpose of :func:`grad_xy` applied to the pair ``(dx, dy)``."""
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    out = np.zeros_like(dx)
    out[:, 1:] += dx[:, :-1]
    out[:, :-1] -= dx[:, :-1]
    out[1:, :] += dy[:-1, :]
    out[:-1, :] -= dy[:-1, :]
    return INV_SQRT2 * out


def gradient_normal(f: np.ndarray) -> np.ndarray:
    """``(D_x^T D_x + D_y^T D_y) f``, the gradient of half the H1 seminorm."""
    return grad_xy_adjoint(*grad_xy(f))


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    radius = int(np.ceil(4.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(f: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur truncated at 4 sigma with a unit-sum kernel.

    The border is mirrored, which keeps constants fixed and preserves the
    total mass of images supported away from the edge.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    f = np.asarray(f, dtype=float)
    if sigma == 0:
        return f.copy()
    k = gaussian_kernel1d(sigma)
    out = ndimage.convolve1d(f, k, axis=0, mode="reflect")
    return ndimage.convolve1d(out, k, axis=1, mode="reflect")
