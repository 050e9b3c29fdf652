"""Image-quality metrics and per-method evaluation tables."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import gaussian_kernel1d

METRICS = ("mse", "rmae", "psnr", "ssim")
# direction in which each metric improves
HIGHER_IS_BETTER = {"mse": False, "rmae": False, "psnr": True, "ssim": True}

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def rmae(x, y) -> float:
    """Relative mean absolute error in percent of ``|y|_1``."""
    x, y = _pair(x, y)
    norm = np.sum(np.abs(y))
    if norm == 0:
        raise ValueError("rmae is undefined for an all-zero ground truth")
    return float(100.0 * np.sum(np.abs(x - y)) / norm)


def psnr(x, y) -> float:
    """Peak SNR in dB with the ground-truth maximum as peak; ``inf`` for identical images."""
    x, y = _pair(x, y)
    peak = np.max(y)
    if peak <= 0:
        raise ValueError("psnr needs a ground truth with positive maximum")
    err = mse(x, y)
    if err == 0:
        return math.inf
    return float(10.0 * np.log10(peak**2 / err))


def _gaussian_window():
    # same sampled Gaussian as the smoothing kernel, cut to the window size
    k = gaussian_kernel1d(SSIM_SIGMA)
    r = len(k) // 2
    h = SSIM_WINDOW // 2
    w = k[r - h : r + h + 1]
    return w / w.sum()


def _filter_valid(a, w):
    a = sliding_window_view(a, len(w), axis=0) @ w
    return sliding_window_view(a, len(w), axis=1) @ w


def ssim_map(x, y) -> np.ndarray:
    x, y = _pair(x, y)
    if x.ndim != 2 or min(x.shape) < SSIM_WINDOW:
        raise ValueError(f"ssim needs 2-D images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    L = np.max(y) - np.min(y)
    if L == 0:
        raise ValueError("ssim is undefined for a constant ground truth")
    c1 = (SSIM_K1 * L) ** 2
    c2 = (SSIM_K2 * L) ** 2
    w = _gaussian_window()
    mx = _filter_valid(x, w)
    my = _filter_valid(y, w)
    sxx = _filter_valid(x * x, w) - mx * mx
    syy = _filter_valid(y * y, w) - my * my
    sxy = _filter_valid(x * y, w) - mx * my
    return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))


def ssim(x, y) -> float:
    """Mean SSIM over all fully contained 11x11 Gaussian windows (sigma 1.5)."""
    return float(np.mean(ssim_map(x, y)))


def image_metrics(x, y) -> dict:
    return {"mse": mse(x, y), "rmae": rmae(x, y), "psnr": psnr(x, y), "ssim": ssim(x, y)}


@dataclass
class MetricsReport:
    method: str
    dataset: str
    per_image: list[dict] = field(default_factory=list)

    @property
    def means(self) -> dict:
        return {m: float(np.mean([r[m] for r in self.per_image])) for m in METRICS}

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "dataset": self.dataset,
            "per_image": [{m: _json_float(r[m]) for m in METRICS} for r in self.per_image],
            "means": {m: _json_float(v) for m, v in self.means.items()},
        }


def _json_float(v: float):
    # JSON has no infinity; identical images are reported with this sentinel
    return "inf" if v == math.inf else v


def evaluate_dataset(recons, truths, label: str, dataset: str = "") -> MetricsReport:
    if len(recons) != len(truths):
        raise ValueError(f"{len(recons)} reconstructions for {len(truths)} ground truths")
    if not truths:
        raise ValueError("empty dataset")
    return MetricsReport(label, dataset, [image_metrics(x, y) for x, y in zip(recons, truths)])


def best_methods(reports: list[MetricsReport]) -> dict:
    """Method label with the best mean for every metric."""
    best = {}
    for m in METRICS:
        vals = [r.means[m] for r in reports]
        i = int(np.argmax(vals) if HIGHER_IS_BETTER[m] else np.argmin(vals))
        best[m] = reports[i].method
    return best


def format_table(reports: list[MetricsReport]) -> str:
    """Aligned text table of mean metrics, one row per method; ``*`` marks the best value."""
    best = best_methods(reports)
    header = ["method", "MSE", "RMAE", "PSNR", "SSIM"]
    fmt = {"mse": "{:.5f}", "rmae": "{:.2f}", "psnr": "{:.2f}", "ssim": "{:.4f}"}
    rows = []
    for r in reports:
        means = r.means
        cells = [r.method]
        for m in METRICS:
            cells.append(fmt[m].format(means[m]) + ("*" if best[m] == r.method else " "))
        rows.append(cells)
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in [header] + rows]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def reports_to_json(reports: list[MetricsReport], **extra) -> str:
    payload = dict(extra)
    payload["methods"] = [r.to_dict() for r in reports]
    payload["best"] = best_methods(reports)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
