"""Discrete 2D photoacoustic forward model on a circular sensor array.

Time is stored in distance units ``tau = c t`` on ``tau_l = l * dtau``,
``l = 0..Q-1`` with ``dtau = 2R / (Q - 1)``.  The pressure at a sensor is

    p(s, tau) = kappa * d/dtau  int_0^tau  rho * CM_f(s, rho) / sqrt(tau^2 - rho^2) drho

where ``CM_f(s, rho)`` is the mean of ``f`` over the circle of radius ``rho``
around ``s``.  The map is assembled as ``K @ C`` with ``C`` a sparse
circular-mean matrix shared by every time sample and ``K`` a small dense
Abel/differentiation matrix shared by every sensor, so the transpose is exact.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse

from .imaging import Grid

log = logging.getLogger(__name__)

MIN_ANGULAR_SAMPLES = 64


@dataclass(frozen=True)
class SensorArc:
    """``count`` sensors on the circle of radius ``radius``.

    With both angles unset the sensors sit at ``2 pi (k-1) / M``; otherwise
    they are spread evenly from ``angle_start`` to ``angle_end`` (degrees,
    both ends included).
    """

    count: int
    radius: float = 1.0
    angle_start: float | None = None
    angle_end: float | None = None

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"need at least 2 sensors, got {self.count}")
        if (self.angle_start is None) != (self.angle_end is None):
            raise ValueError("give both angle_start and angle_end, or neither")

    @property
    def full_circle(self) -> bool:
        return self.angle_start is None

    def angles(self) -> np.ndarray:
        """Sensor polar angles in radians."""
        k = np.arange(self.count)
        if self.full_circle:
            return 2.0 * np.pi * k / self.count
        start, end = np.deg2rad(self.angle_start), np.deg2rad(self.angle_end)
        return start + k * (end - start) / (self.count - 1)

    def angular_step(self) -> float:
        if self.full_circle:
            return 2.0 * np.pi / self.count
        return abs(np.deg2rad(self.angle_end - self.angle_start)) / (self.count - 1)

    def arc_weights(self) -> np.ndarray:
        """Arc-length quadrature weight ``R * dtheta`` of every sensor."""
        return np.full(self.count, self.radius * self.angular_step())


def sensor_positions(arc: SensorArc) -> np.ndarray:
    """``(M, 2)`` array of sensor coordinates."""
    theta = arc.angles()
    return arc.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)


@dataclass
class Sinogram:
    """Pressure traces, one row per channel, on the ``tau = c t`` axis."""

    values: np.ndarray
    arc: SensorArc
    c: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError("sinogram values must be (channels, Q)")

    @property
    def Q(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> float:
        return 2.0 * self.arc.radius / self.c

    @property
    def dtau(self) -> float:
        return 2.0 * self.arc.radius / (self.Q - 1)


def time_axis(radius: float, Q: int) -> np.ndarray:
    return 2.0 * radius * np.arange(Q) / (Q - 1)


def _abel_primitives(rho, s):
    """Antiderivatives of ``rho / sqrt(s^2 - rho^2)`` and ``rho^2 / sqrt(s^2 - rho^2)``."""
    rho, s = np.broadcast_arrays(rho, s)
    root = np.sqrt(np.maximum(s**2 - rho**2, 0.0))
    ratio = np.divide(rho, s, out=np.zeros(rho.shape), where=s > 0)
    return -root, 0.5 * s**2 * np.arcsin(np.clip(ratio, -1.0, 1.0)) - 0.5 * rho * root


def _segment_integrals(lo, hi, s):
    """``int rho/sqrt(s^2-rho^2)`` and ``int rho^2/sqrt(...)`` over ``[lo, min(hi, s)]``."""
    top = np.minimum(hi, s)
    active = lo < s
    top = np.where(active, top, lo)
    F0a, F1a = _abel_primitives(lo, s)
    F0b, F1b = _abel_primitives(top, s)
    return np.where(active, F0b - F0a, 0.0), np.where(active, F1b - F1a, 0.0)


def abel_matrix(Q: int, dtau: float) -> np.ndarray:
    """``(Q, Q)`` matrix taking circular means at ``rho_j = (j + 1/2) dtau`` to pressure.

    The means are interpolated linearly between nodes (constant below the
    first one) and the kernel ``rho / sqrt(s^2 - rho^2)`` is integrated
    exactly against each piece, so the square-root singularity at
    ``rho = s`` is never evaluated.  The integral is sampled on the half grid
    ``s = tau_l +- dtau/2`` and differenced centrally.
    """
    nodes = (np.arange(Q) + 0.5) * dtau
    s = np.maximum((np.arange(-1, Q) + 0.5) * dtau, 0.0)[:, None]
    J = np.zeros((Q + 1, Q))
    # constant piece [0, rho_0]
    I0, _ = _segment_integrals(np.zeros(1)[None, :], nodes[:1][None, :], s)
    J[:, 0] += I0[:, 0]
    lo = nodes[:-1][None, :]
    hi = nodes[1:][None, :]
    I0, I1 = _segment_integrals(lo, hi, s)
    J[:, :-1] += (hi * I0 - I1) / dtau  # falling hat of the left node
    J[:, 1:] += (I1 - lo * I0) / dtau  # rising hat of the right node
    return (J[1:] - J[:-1]) / dtau


def _circle_offsets(Q: int, dtau: float, pixel_size: float):
    """Per-point radius index, offset radius and relative angle for every cell."""
    rho = (np.arange(Q) + 0.5) * dtau
    counts = np.maximum(MIN_ANGULAR_SAMPLES, np.ceil(2.0 * np.pi * rho / pixel_size)).astype(int)
    ring = np.repeat(np.arange(Q), counts)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    phi = 2.0 * np.pi * (np.arange(ring.size) - starts) / counts[ring]
    return ring, rho[ring], phi, 1.0 / counts[ring]


def _bspline3(t):
    """Centred cubic B-spline, support ``|t| < 2``."""
    t = np.abs(t)
    return np.where(
        t < 1.0,
        2.0 / 3.0 - t * t + 0.5 * t**3,
        np.where(t < 2.0, (2.0 - t) ** 3 / 6.0, 0.0),
    )


def spline_prefilter(f: np.ndarray) -> np.ndarray:
    """Cubic B-spline coefficients interpolating ``f`` at pixel centres.

    Coefficients outside the grid are zero, so the per-axis system is the
    symmetric tridiagonal ``(1/6, 2/3, 1/6)`` and the filter is self-adjoint.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    ab = np.empty((3, n))
    ab[0], ab[1], ab[2] = 1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0
    batch = f.shape[:-2]
    c = f.reshape(-1, n, n)
    # axis 0 (rows) then axis 1 (columns); each solve handles many right-hand sides
    c = linalg.solve_banded((1, 1), ab, np.moveaxis(c, 1, 0).reshape(n, -1))
    c = np.moveaxis(c.reshape(n, -1, n), 0, 1)
    c = linalg.solve_banded((1, 1), ab, np.moveaxis(c, 2, 0).reshape(n, -1))
    c = np.moveaxis(c.reshape(n, -1, n), 0, 2)
    return c.reshape(*batch, n, n)


def _interp_rows(px, py, grid: Grid):
    """Point index, flat pixel index and weight of every cubic B-spline tap."""
    h = grid.pixel_size
    u = (px - grid.extent[0]) / h - 0.5
    v = (py - grid.extent[2]) / h - 0.5
    i0 = np.floor(u).astype(np.int64)
    j0 = np.floor(v).astype(np.int64)
    wx = [_bspline3(u - (i0 + d)) for d in (-1, 0, 1, 2)]
    wy = [_bspline3(v - (j0 + d)) for d in (-1, 0, 1, 2)]
    idx, wts, which = [], [], []
    for a, di in enumerate((-1, 0, 1, 2)):
        ix = i0 + di
        okx = (ix >= 0) & (ix < grid.n_side)
        for b, dj in enumerate((-1, 0, 1, 2)):
            iy = j0 + dj
            ok = okx & (iy >= 0) & (iy < grid.n_side)
            which.append(np.nonzero(ok)[0])
            idx.append(iy[ok] * grid.n_side + ix[ok])
            wts.append((wx[a] * wy[b])[ok])
    return np.concatenate(which), np.concatenate(idx), np.concatenate(wts)


def circular_mean_matrix(grid: Grid, centers: np.ndarray, Q: int, dtau: float, inward: np.ndarray):
    """Sparse ``(len(centers) * Q, n)`` matrix of interpolated circular means.

    Row ``k * Q + j`` averages the image over the circle of radius
    ``(j + 1/2) dtau`` around ``centers[k]``.  Sample angles are measured from
    ``inward[k]`` so that grid-symmetric sensors see mirrored sample sets.
    """
    ring, r, phi, w_ring = _circle_offsets(Q, dtau, grid.pixel_size)
    h = grid.pixel_size
    x0, x1, y0, y1 = grid.extent
    blocks = []
    for (cx, cy), base in zip(centers, inward):
        ang = base + phi
        px = cx + r * np.cos(ang)
        py = cy + r * np.sin(ang)
        keep = (px > x0 - 2 * h) & (px < x1 + 2 * h) & (py > y0 - 2 * h) & (py < y1 + 2 * h)
        pts, cols, wts = _interp_rows(px[keep], py[keep], grid)
        rows = ring[keep][pts]
        vals = wts * w_ring[keep][pts]
        blocks.append(sparse.csr_matrix((vals, (rows, cols)), shape=(Q, grid.n)))
    return sparse.vstack(blocks, format="csr")


@dataclass
class WaveOperator:
    """Forward map ``W``, its exact transpose and the FBP inversion ``B``.

    Arrays are accepted with arbitrary leading batch axes: images as
    ``(..., N, N)`` and sinograms as ``(..., M, Q)``.
    """

    grid: Grid
    arc: SensorArc
    Q: int
    c: float = 1.0
    kappa: float = 1.0
    _C: sparse.csr_matrix = field(init=False, repr=False)
    _K: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.Q < 3:
            raise ValueError(f"need at least 3 time samples, got {self.Q}")
        self.dtau = 2.0 * self.arc.radius / (self.Q - 1)
        self.taus = time_axis(self.arc.radius, self.Q)
        self.positions = sensor_positions(self.arc)
        inward = self.arc.angles() + np.pi
        self._C = circular_mean_matrix(self.grid, self.positions, self.Q, self.dtau, inward)
        self._K = self.kappa * abel_matrix(self.Q, self.dtau)
        X, Y = self.grid.coordinates()
        self._outside = np.hypot(X, Y) >= self.arc.radius
        log.debug("circular-mean matrix: %s, nnz=%d", self._C.shape, self._C.nnz)

    @property
    def M(self) -> int:
        return self.arc.count

    @property
    def data_shape(self) -> tuple[int, int]:
        return (self.M, self.Q)

    def _check_image(self, f):
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.grid.shape:
            raise ValueError(f"image shape {f.shape[-2:]} does not match grid {self.grid.shape}")
        return f

    def _check_data(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape[-2:] != self.data_shape:
            raise ValueError(f"sinogram shape {g.shape[-2:]} != {self.data_shape}")
        return g

    def check_support(self, f) -> bool:
        """Return True if ``f`` vanishes outside the open sensor disc."""
        return not np.any(np.asarray(f)[..., self._outside])

    def forward(self, f, check_support: bool = True) -> np.ndarray:
        f = self._check_image(f)
        if check_support and not self.check_support(f):
            warnings.warn("image has support outside the sensor disc", stacklevel=2)
        batch = f.shape[:-2]
        flat = spline_prefilter(f).reshape(-1, self.grid.n).T
        means = (self._C @ flat).T.reshape(*batch, self.M, self.Q)
        return means @ self._K.T

    def adjoint(self, g) -> np.ndarray:
        g = self._check_data(g)
        batch = g.shape[:-2]
        means = (g @ self._K).reshape(-1, self.M * self.Q).T
        out = (self._C.T @ means).T
        return spline_prefilter(out.reshape(*batch, *self.grid.shape))

    def normal(self, f) -> np.ndarray:
        """``W^T W f``."""
        return self.adjoint(self.forward(f, check_support=False))

    def fbp(self, g) -> np.ndarray:
        """Filtered backprojection

            f(r) = -1/(pi R) sum_k w_k int_{|r - s_k|}^{2R} d/dtau(tau p) / sqrt(tau^2 - |r - s_k|^2) dtau

        The filtered trace ``p + tau dp/dtau`` uses central differences and
        is held constant on each sample cell; the kernel ``1/sqrt(tau^2 - d^2)``
        is integrated exactly over every cell above ``d``, so the lowest cell
        starts at the singularity without evaluating it.
        """
        g = self._check_data(g)
        batch = g.shape[:-2]
        g2 = g.reshape(-1, self.M, self.Q)
        q = np.gradient(self.taus * g2, self.dtau, axis=-1)
        X, Y = self.grid.coordinates()
        X, Y = X.ravel(), Y.ravel()
        lo = np.maximum(self.taus - 0.5 * self.dtau, 0.0)
        hi = np.minimum(self.taus + 0.5 * self.dtau, self.taus[-1])
        weights = self.arc.arc_weights()
        out = np.zeros((g2.shape[0], self.grid.n))
        for k, (sx, sy) in enumerate(self.positions):
            d = np.maximum(np.hypot(X - sx, Y - sy), 1e-12)[:, None]
            a = np.maximum(lo[None, :], d)
            b = np.maximum(hi[None, :], d)
            kern = np.log((b + np.sqrt(b**2 - d**2)) / (a + np.sqrt(a**2 - d**2)))
            out += weights[k] * (q[:, k, :] @ kern.T)
        out *= -1.0 / (np.pi * self.arc.radius)
        return out.reshape(*batch, *self.grid.shape)

    def dt2(self, g) -> np.ndarray:
        return dt2(g, self.dtau, self.c)


def dt2(g, dtau: float, c: float = 1.0, end: str = "extrapolate") -> np.ndarray:
    """Second time difference ``(g[l+1] - 2 g[l] + g[l-1]) / dt^2`` with ``dt = dtau / c``.

    The sample before ``tau = 0`` is zero (causal data).  Traces do not vanish
    at ``tau = 2R`` in 2D, so by default the missing sample after the record
    is extrapolated quadratically, which repeats the last interior value;
    ``end="zero"`` zero-pads instead.
    """
    g = np.asarray(g, dtype=float)
    if g.shape[-1] < 3:
        raise ValueError("need at least 3 time samples")
    if end not in ("extrapolate", "zero"):
        raise ValueError(f"unknown end handling {end!r}")
    out = -2.0 * g
    out[..., 1:] += g[..., :-1]
    out[..., :-1] += g[..., 1:]
    if end == "extrapolate":
        out[..., -1] = out[..., -2]
    return out * (c / dtau) ** 2


def calibrate_kappa(grid: Grid, arc: SensorArc, Q: int, sigma: float = 2.0, radius_px: float = 10.0) -> float:
    """Scale that makes the full-data round trip ``fbp(forward(f))`` return unit peak.

    The calibration phantom is a centred unit disc blurred by ``sigma`` pixels.
    """
    from .phantoms import disc_phantom

    op = WaveOperator(grid, arc, Q, kappa=1.0)
    f = disc_phantom(grid, radius_px, sigma)
    return float(f.max() / op.fbp(op.forward(f)).max())
