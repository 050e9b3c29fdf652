import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pacs.imaging import gaussian_kernel1d
from pacs.metrics import (
    MetricsReport,
    best_methods,
    evaluate_dataset,
    format_table,
    mse,
    psnr,
    reports_to_json,
    rmae,
    ssim,
)


def ssim_oracle(x, y):
    """Direct per-window SSIM with explicit weighted sums."""
    k = gaussian_kernel1d(1.5)[1:-1]
    w = np.outer(k, k) / np.outer(k, k).sum()
    L = y.max() - y.min()
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    vals = []
    for i in range(x.shape[0] - 10):
        for j in range(x.shape[1] - 10):
            a, b = x[i : i + 11, j : j + 11], y[i : i + 11, j : j + 11]
            ma, mb = np.sum(w * a), np.sum(w * b)
            va = np.sum(w * (a - ma) ** 2)
            vb = np.sum(w * (b - mb) ** 2)
            cov = np.sum(w * (a - ma) * (b - mb))
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return np.mean(vals)


def test_identical_images(rng):
    y = rng.random((16, 16))
    assert mse(y, y) == 0 and rmae(y, y) == 0 and psnr(y, y) == math.inf
    assert ssim(y, y) == 1.0


def test_binary_offset_closed_form(rng):
    y = (rng.random((16, 16)) > 0.5).astype(float)
    y[0, 0] = 1
    x = y + 0.5
    assert mse(x, y) == 0.25
    assert psnr(x, y) == pytest.approx(6.0206, abs=1e-4)


def test_elementwise_oracles(rng):
    x, y = rng.random((2, 12, 12))
    xs, ys = x.ravel(), y.ravel()
    m = sum((a - b) ** 2 for a, b in zip(xs, ys)) / xs.size
    r = 100 * sum(abs(a - b) for a, b in zip(xs, ys)) / sum(abs(b) for b in ys)
    assert abs(mse(x, y) - m) <= 1e-12 * m
    assert abs(rmae(x, y) - r) <= 1e-12 * r
    assert abs(psnr(x, y) - 10 * math.log10(max(ys) ** 2 / m)) <= 1e-12 * 10


def test_ssim_against_window_oracle(rng):
    x, y = rng.random((2, 20, 24))
    assert abs(ssim(x, y) - ssim_oracle(x, y)) <= 1e-9


def test_ssim_anticorrelated():
    # checkerboard: local means vanish, so only the structure term flips sign
    y = np.indices((24, 24)).sum(axis=0) % 2 * 2.0 - 1.0
    assert ssim(-y, y) < -0.9


def test_errors():
    with pytest.raises(ValueError):
        rmae(np.ones(4), np.zeros(4))
    with pytest.raises(ValueError):
        psnr(np.ones(4), np.zeros(4))
    with pytest.raises(ValueError):
        ssim(np.ones((12, 12)), np.zeros((12, 12)))
    with pytest.raises(ValueError):
        mse(np.ones(3), np.ones(4))


@given(st.integers(0, 10_000), st.floats(0.1, 10))
@settings(max_examples=30, deadline=None)
def test_symmetry_and_scale_properties(seed, a):
    x, y = np.random.default_rng(seed).random((2, 14, 14)) + 0.01
    assert mse(x, y) == pytest.approx(mse(y, x), rel=1e-15)
    assert rmae(a * x, a * y) == pytest.approx(rmae(x, y), rel=1e-12)
    assert psnr(a * x, a * y) == pytest.approx(psnr(x, y), rel=1e-12)
    assert -1 <= ssim(x, y) <= 1


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_ssim_self_is_one(seed):
    x = np.random.default_rng(seed).standard_normal((16, 16))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_psnr_degrades_with_noise():
    y = np.random.default_rng(0).random((32, 32))
    means = []
    for sigma in (0.01, 0.03, 0.1, 0.3):
        means.append(np.mean([psnr(y + sigma * np.random.default_rng(s).standard_normal(y.shape), y) for s in range(8)]))
    assert all(a > b for a, b in zip(means, means[1:]))


def test_evaluate_dataset(rng):
    ys = list(rng.random((3, 16, 16)))
    rep = evaluate_dataset(ys, ys, "ref")
    assert rep.means["mse"] == 0 and rep.means["ssim"] == 1 and rep.means["psnr"] == math.inf
    single = evaluate_dataset([ys[0] + 0.1], [ys[0]], "one")
    assert single.means == single.per_image[0]
    with pytest.raises(ValueError):
        evaluate_dataset(ys[:2], ys, "bad")


def test_table_layout_and_best(rng):
    y = list(rng.random((2, 16, 16)))
    reports = [evaluate_dataset([t + s for t in y], y, name) for name, s in
               (("FBP", 0.3), ("l1", 0.05), ("H1", 0.2), ("U-net", 0.1), ("NETT", 0.02))]
    text = format_table(reports)
    lines = text.strip().split("\n")
    assert lines[0].split() == ["method", "MSE", "RMAE", "PSNR", "SSIM"]
    assert [l.split()[0] for l in lines[1:]] == ["FBP", "l1", "H1", "U-net", "NETT"]
    assert best_methods(reports) == {"mse": "NETT", "rmae": "NETT", "psnr": "NETT", "ssim": "NETT"}
    assert lines[-1].count("*") == 4
    payload = json.loads(reports_to_json(reports, dataset="x"))
    assert [m["method"] for m in payload["methods"]] == ["FBP", "l1", "H1", "U-net", "NETT"]
    assert len(payload["methods"][0]["per_image"]) == 2


def test_json_infinity_sentinel(rng):
    y = rng.random((16, 16))
    d = MetricsReport("x", "d", [{"mse": 0.0, "rmae": 0.0, "psnr": math.inf, "ssim": 1.0}]).to_dict()
    assert d["means"]["psnr"] == "inf"
    json.dumps(d, allow_nan=False)
