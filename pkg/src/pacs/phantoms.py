"""Synthetic initial-pressure phantoms: random vessel trees, a cross, a leaf and a disc."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .imaging import Grid, gaussian_smooth

KINDS = ("vessel", "cross", "leaf", "disc")
EDGE_MARGIN_PX = 2


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "vessel"
    seed: int = 0
    smoothness: float = 0.5
    radius_px: float = 10.0  # disc only

    def to_dict(self) -> dict:
        return asdict(self)


def _support_mask(grid: Grid, radius: float, center=(0.0, 0.0)) -> np.ndarray:
    """Pixels at least ``EDGE_MARGIN_PX`` (plus the pixel half-diagonal) inside the disc."""
    X, Y = grid.coordinates()
    h = grid.pixel_size
    r = np.hypot(X - center[0], Y - center[1])
    return r < radius - (EDGE_MARGIN_PX + 0.75) * h


def _distance_to_polyline(X, Y, pts) -> np.ndarray:
    a = pts[:-1]
    b = pts[1:]
    ab = b - a
    px = X.ravel()[:, None]
    py = Y.ravel()[:, None]
    t = ((px - a[:, 0]) * ab[:, 0] + (py - a[:, 1]) * ab[:, 1]) / np.maximum((ab**2).sum(1), 1e-30)
    t = np.clip(t, 0.0, 1.0)
    dx = px - (a[:, 0] + t * ab[:, 0])
    dy = py - (a[:, 1] + t * ab[:, 1])
    return np.sqrt(dx**2 + dy**2).min(axis=1).reshape(X.shape)


def _bezier(ctrl: np.ndarray, n: int = 64) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    if len(ctrl) == 3:
        return (1 - t) ** 2 * ctrl[0] + 2 * (1 - t) * t * ctrl[1] + t**2 * ctrl[2]
    return (1 - t) ** 3 * ctrl[0] + 3 * (1 - t) ** 2 * t * ctrl[1] + 3 * (1 - t) * t**2 * ctrl[2] + t**3 * ctrl[3]


def _vessel(grid: Grid, rng: np.random.Generator, radius: float) -> np.ndarray:
    X, Y = grid.coordinates()
    h = grid.pixel_size
    img = np.zeros(grid.shape)
    reach = 0.75 * radius
    # a trunk plus branches that start on previously drawn vessels
    curves = []
    for i in range(int(rng.integers(3, 11))):
        if curves and rng.random() < 0.7:
            parent = curves[int(rng.integers(len(curves)))]
            start = parent[int(rng.integers(8, len(parent) - 8))]
        else:
            r0 = reach * np.sqrt(rng.random())
            a0 = rng.uniform(0, 2 * np.pi)
            start = np.array([r0 * np.cos(a0), r0 * np.sin(a0)])
        length = rng.uniform(0.25, 0.7) * radius
        heading = rng.uniform(0, 2 * np.pi)
        ctrl = [start]
        for k in range(1, 4):
            heading += rng.normal(0.0, 0.5)
            ctrl.append(ctrl[-1] + length / 3 * np.array([np.cos(heading), np.sin(heading)]))
        ctrl = np.array(ctrl)
        # keep the curve inside the vessel region by pulling control points in
        norms = np.hypot(ctrl[:, 0], ctrl[:, 1])
        ctrl *= np.minimum(1.0, reach / np.maximum(norms, 1e-12))[:, None]
        pts = _bezier(ctrl)
        curves.append(pts)
        width = rng.uniform(1.0, 4.0) * h
        level = rng.uniform(0.5, 1.0)
        d = _distance_to_polyline(X, Y, pts)
        img = np.maximum(img, np.where(d <= 0.5 * width, level, 0.0))
    return img


def _cross(grid: Grid, rng: np.random.Generator, radius: float) -> np.ndarray:
    X, Y = grid.coordinates()
    h = grid.pixel_size
    ang = rng.uniform(0, np.pi / 2)
    c, s = np.cos(ang), np.sin(ang)
    u = c * X + s * Y
    v = -s * X + c * Y
    half_len = 0.55 * radius
    half_w = 3.0 * h
    bar1 = (np.abs(u) <= half_len) & (np.abs(v) <= half_w)
    bar2 = (np.abs(v) <= half_len) & (np.abs(u) <= half_w)
    return (bar1 | bar2).astype(float)


def _leaf(grid: Grid, rng: np.random.Generator, radius: float) -> np.ndarray:
    """Leaf outline with a midrib and thin side veins."""
    X, Y = grid.coordinates()
    h = grid.pixel_size
    ang = rng.uniform(0, 2 * np.pi)
    c, s = np.cos(ang), np.sin(ang)
    u = c * X + s * Y
    v = -s * X + c * Y
    a, b = 0.6 * radius, 0.32 * radius
    ell = (u / a) ** 2 + (v / b) ** 2
    blade = ell <= 1.0
    outline = blade & (ell >= (1.0 - 2.2 * h / b) ** 2)
    img = 0.5 * outline.astype(float)
    midrib = blade & (np.abs(v) <= 1.0 * h)
    img = np.maximum(img, 1.0 * midrib)
    n_veins = int(rng.integers(4, 8))
    for x0 in np.linspace(-0.7 * a, 0.7 * a, n_veins):
        for side in (-1.0, 1.0):
            # vein runs from the midrib towards the tip at 40 degrees
            t = (u - x0) * np.cos(0.7) + side * v * np.sin(0.7)
            dist = np.abs(-(u - x0) * np.sin(0.7) + side * v * np.cos(0.7))
            vein = blade & (t >= 0) & (dist <= 0.6 * h) & (side * v >= 0)
            img = np.maximum(img, 0.8 * vein)
    return img


def disc_phantom(grid: Grid, radius_px: float, sigma: float = 0.0, center=(0.0, 0.0)) -> np.ndarray:
    """Unit disc of ``radius_px`` pixels, optionally Gaussian-blurred."""
    X, Y = grid.coordinates()
    r = np.hypot(X - center[0], Y - center[1])
    img = (r < radius_px * grid.pixel_size).astype(float)
    return gaussian_smooth(img, sigma)


def gen_phantom(spec: PhantomSpec, grid: Grid, sensor_radius: float | None = None) -> np.ndarray:
    """Render ``spec`` on ``grid``.

    Values lie in [0, 1] and vanish within ``EDGE_MARGIN_PX`` pixels of the
    sensor circle (by default the disc inscribed in the grid).  The output
    depends only on ``spec`` and ``grid``.
    """
    if spec.kind not in KINDS:
        raise ValueError(f"unknown phantom kind {spec.kind!r}; expected one of {KINDS}")
    if sensor_radius is None:
        sensor_radius = 0.5 * (grid.extent[1] - grid.extent[0])
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "disc":
        img = disc_phantom(grid, spec.radius_px)
    else:
        img = {"vessel": _vessel, "cross": _cross, "leaf": _leaf}[spec.kind](grid, rng, sensor_radius)
    img = gaussian_smooth(img, spec.smoothness)
    img = np.clip(img, 0.0, 1.0) * _support_mask(grid, sensor_radius)
    return img
