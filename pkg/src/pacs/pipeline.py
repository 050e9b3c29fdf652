"""End-to-end workflow: phantoms, simulated data, training, reconstruction, evaluation.

Every command reads and writes under ``cfg.out``::

    phantoms/{train,eval}_NNN.paif         + manifest.json
    sinograms/{id}.pasg                    full data W f
    measurements/{tag}/{id}_{clean,noisy}.pasg
    initial/{tag}/{id}.paif                A^sharp g of the (noisy) data
    train/{tag}/{model}/weights.netw, loss.csv
    recon/{tag}/{method}/eval_NNN.paif, objective.csv
    report/{tag}/report.json, report.txt

where ``tag`` names the sampling scheme and noise variant.  Every
directory carries a ``manifest.json`` whose entries record file checksums
and the checksum of the producing configuration.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import io as _io
import json
import logging
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig
from .imaging import Grid
from .l1joint import JointParams, estimate_step_bound, solve_joint_l1
from .metrics import evaluate_dataset, format_table, reports_to_json
from .nett import NettParams, reconstruct_residual_unet, solve_nett
from .nn.network import Network, build_regularizer_net, build_residual_unet
from .nn.train import make_regularizer_dataset, make_unet_dataset, train
from .phantoms import PhantomSpec, gen_phantom
from .sampling import CSOperator, add_noise, make_scheme
from .wave import SensorArc, Sinogram, WaveOperator

log = logging.getLogger(__name__)

METHODS = ("fbp", "l1", "h1", "unet", "nett")
METHOD_LABELS = {"fbp": "FBP", "l1": "l1", "h1": "H1", "unet": "U-net", "nett": "NETT"}
MODELS = ("regularizer", "unet")
EVAL_SEED_OFFSET = 500_000


class PipelineError(Exception):
    """Failure with a short machine-readable ``code``."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


# -- helpers --------------------------------------------------------------


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_manifest(path: Path, code: str) -> dict:
    if not path.exists():
        raise PipelineError(code, f"missing manifest {path}")
    return json.loads(path.read_text())


def _mkdir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PipelineError("unwritable-output", f"cannot create {path}: {exc}") from exc
    return path


def _entry(root: Path, path: Path, cfg: RunConfig, **extra) -> dict:
    return {"file": str(path.relative_to(root)), "sha256": sha256_file(path), "config_checksum": cfg.checksum(), **extra}


def make_grid(cfg: RunConfig) -> Grid:
    return Grid(cfg.grid.n_side, tuple(cfg.grid.extent))


def make_arc(cfg: RunConfig) -> SensorArc:
    a = cfg.arc
    return SensorArc(a.count, a.radius, a.angle_start, a.angle_end)


@functools.lru_cache(maxsize=4)
def _wave(n_side, extent, count, radius, a0, a1, Q, c) -> WaveOperator:
    return WaveOperator(Grid(n_side, extent), SensorArc(count, radius, a0, a1), Q, c)


def make_wave(cfg: RunConfig) -> WaveOperator:
    a = cfg.arc
    return _wave(cfg.grid.n_side, tuple(cfg.grid.extent), a.count, a.radius, a.angle_start, a.angle_end, cfg.Q, cfg.c)


def make_operator(cfg: RunConfig) -> CSOperator:
    s = cfg.sampling
    return CSOperator(make_wave(cfg), make_scheme(s.kind, s.m, cfg.arc.count, s.seed, s.v))


def phantom_ids(cfg: RunConfig) -> tuple[list[str], list[str]]:
    return ([f"train_{i:03d}" for i in range(cfg.phantom.n_train)], [f"eval_{i:03d}" for i in range(cfg.phantom.n_eval)])


def _phantom_seed(cfg: RunConfig, pid: str) -> int:
    split, idx = pid.split("_")
    return cfg.seed * 1_000_000 + (EVAL_SEED_OFFSET if split == "eval" else 0) + int(idx)


def _load_images(root: Path, paths) -> np.ndarray:
    out = []
    for p in paths:
        if not (root / p).exists():
            raise PipelineError("missing-input", f"missing file {root / p}")
        out.append(io.read_paif(root / p)[0])
    return np.stack(out) if out else np.zeros((0, 0, 0))


# -- commands -------------------------------------------------------------


def cmd_phantom(cfg: RunConfig) -> dict:
    """Render the training and evaluation phantoms."""
    root = Path(cfg.out)
    pdir = _mkdir(root / "phantoms")
    grid = make_grid(cfg)
    entries = []
    train_ids, eval_ids = phantom_ids(cfg)
    for pid in train_ids + eval_ids:
        kind = cfg.phantom.kind if pid.startswith("train") else cfg.phantom.eval_kind
        spec = PhantomSpec(kind, _phantom_seed(cfg, pid), cfg.phantom.smoothness)
        path = pdir / f"{pid}.paif"
        io.write_paif(path, gen_phantom(spec, grid, cfg.arc.radius), grid)
        entries.append(_entry(root, path, cfg, id=pid, seed=spec.seed, kind=kind))
    manifest = {"config_checksum": cfg.checksum(), "phantoms": entries}
    _write_json(pdir / "manifest.json", manifest)
    log.info("wrote %d phantoms", len(entries))
    return manifest


def cmd_simulate(cfg: RunConfig) -> dict:
    """Full sinograms, clean and noisy CS measurements and initial reconstructions."""
    root = Path(cfg.out)
    phantoms = _read_manifest(root / "phantoms" / "manifest.json", "missing-phantoms")["phantoms"]
    op = make_operator(cfg)
    wave = op.wave
    tag = cfg.data_tag
    sdir = _mkdir(root / "sinograms")
    mdir = _mkdir(root / "measurements" / tag)
    idir = _mkdir(root / "initial" / tag)
    arc = make_arc(cfg)
    entries = []
    for i, ent in enumerate(phantoms):
        pid = ent["id"]
        f, grid = io.read_paif(root / ent["file"])
        if grid != wave.grid:
            raise PipelineError("geometry-mismatch", f"phantom {pid} grid {grid} does not match the configuration")
        full = wave.forward(f)
        g = op.apply_A(f)
        noisy = add_noise(g, cfg.noise_level, _phantom_seed(cfg, pid) + 7)
        paths = {
            "sinogram": sdir / f"{pid}.pasg",
            "clean": mdir / f"{pid}_clean.pasg",
            "noisy": mdir / f"{pid}_noisy.pasg",
            "initial": idir / f"{pid}.paif",
        }
        io.write_pasg(paths["sinogram"], Sinogram(full, arc, cfg.c))
        io.write_pasg(paths["clean"], Sinogram(g, arc, cfg.c))
        io.write_pasg(paths["noisy"], Sinogram(noisy, arc, cfg.c))
        # the initial image is computed from the data as stored, so downstream reads agree
        stored = io.read_pasg(paths["noisy"], cfg.arc.count).values
        io.write_paif(paths["initial"], op.apply_A_sharp(stored), wave.grid)
        entries.append({
            "id": pid,
            "phantom": ent["file"],
            "files": {k: _entry(root, p, cfg) for k, p in paths.items()},
        })
    manifest = {
        "config_checksum": cfg.checksum(),
        "tag": tag,
        "scheme": op.scheme.to_dict(),
        "noise_level": cfg.noise_level,
        "items": entries,
    }
    _write_json(mdir / "manifest.json", manifest)
    log.info("simulated %d phantoms (%s)", len(entries), tag)
    return manifest


def _simulation(cfg: RunConfig) -> tuple[Path, list[dict]]:
    root = Path(cfg.out)
    items = _read_manifest(root / "measurements" / cfg.data_tag / "manifest.json", "missing-dataset")["items"]
    return root, items


def build_model(cfg: RunConfig, model: str) -> Network:
    t = cfg.train
    if model == "regularizer":
        return build_regularizer_net(t.hidden_channels, seed=cfg.seed)
    if model == "unet":
        return build_residual_unet(t.unet_depth, t.unet_channels, seed=cfg.seed)
    raise PipelineError("bad-argument", f"unknown model {model!r}")


def cmd_train(cfg: RunConfig, model: str, epochs: int | None = None, lr: float | None = None) -> dict:
    """Train the regularizer or the residual U-net on the training split."""
    root, items = _simulation(cfg)
    items = [it for it in items if it["id"].startswith("train")]
    if not items:
        raise PipelineError("missing-dataset", "no training phantoms in the simulated dataset")
    net = build_model(cfg, model)
    fs = _load_images(root, [it["phantom"] for it in items])
    bs = _load_images(root, [it["files"]["initial"]["file"] for it in items])
    if model == "regularizer":
        dataset = make_regularizer_dataset(list(fs), None, initial=list(bs))
    else:
        dataset = make_unet_dataset(list(fs), list(bs))
    epochs = cfg.train.epochs if epochs is None else epochs
    lr = cfg.train.lr if lr is None else lr
    net, losses = train(net, dataset, epochs, lr, cfg.train.batch, cfg.seed)
    tdir = _mkdir(root / "train" / cfg.data_tag / model)
    net.save(tdir / "weights.netw")
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "loss"])
    for e, loss in enumerate(losses, 1):
        w.writerow([e, repr(loss)])
    (tdir / "loss.csv").write_text(buf.getvalue())
    manifest = {
        "config_checksum": cfg.checksum(),
        "model": model,
        "dataset_size": len(dataset),
        "epochs": epochs,
        "lr": lr,
        "files": {k: _entry(root, tdir / k, cfg) for k in ("weights.netw", "loss.csv")},
    }
    _write_json(tdir / "manifest.json", manifest)
    log.info("trained %s: loss %.4g -> %.4g", model, losses[0] if losses else np.nan, losses[-1] if losses else np.nan)
    return manifest


def _weights(cfg: RunConfig, model: str, path=None) -> Network:
    p = Path(path) if path is not None else Path(cfg.out) / "train" / cfg.data_tag / model / "weights.netw"
    if not p.exists():
        raise PipelineError("missing-weights", f"missing {model} weights {p}")
    return Network.load(p)


def reconstruct_one(cfg: RunConfig, op: CSOperator, method: str, g, nets: dict, overrides: dict):
    """Reconstruct one measurement; returns ``(image, objective_history)``."""
    mu = overrides.get("mu")
    lam = overrides.get("lam")
    iters = overrides.get("iters")
    clamp = overrides.get("clamp") or cfg.nett.clamp
    if method == "fbp":
        return op.apply_A_sharp(g), []
    if method == "l1":
        j = cfg.joint
        alpha = j.alpha if overrides.get("alpha") is None else overrides["alpha"]
        beta = j.beta if overrides.get("beta") is None else overrides["beta"]
        step = mu if mu is not None else nets["l1_mu"]
        params = JointParams(alpha, beta, step, j.iterations if iters is None else iters, cfg.c)
        f, state = solve_joint_l1(g, op, params)
        return f, state.objective_history
    if method == "h1":
        n = cfg.nett
        params = NettParams(cfg.h1_mu() if mu is None else mu, n.h1_lam if lam is None else lam,
                            n.iterations if iters is None else iters, "deterministic", nonneg_clamp=clamp)
        return solve_nett(g, op, params)
    if method == "nett":
        n = cfg.nett
        kind = "trained_augmented" if n.a > 0 else "trained"
        params = NettParams(cfg.nett_mu() if mu is None else mu, n.lam if lam is None else lam,
                            n.iterations if iters is None else iters, kind, nets["regularizer"], n.a, clamp)
        return solve_nett(g, op, params)
    if method == "unet":
        return reconstruct_residual_unet(g, op, nets["unet"]), []
    raise PipelineError("bad-argument", f"unknown method {method!r}")


def cmd_reconstruct(cfg: RunConfig, method: str, weights=None, **overrides) -> dict:
    """Reconstruct every evaluation measurement with ``method``."""
    if method not in METHODS:
        raise PipelineError("bad-argument", f"unknown method {method!r}")
    root, items = _simulation(cfg)
    items = [it for it in items if it["id"].startswith("eval")]
    op = make_operator(cfg)
    nets = {}
    if method == "nett":
        nets["regularizer"] = _weights(cfg, "regularizer", weights)
    elif method == "unet":
        nets["unet"] = _weights(cfg, "unet", weights)
    elif method == "l1" and overrides.get("mu") is None:
        mu = cfg.joint_mu()
        alpha = cfg.joint.alpha if overrides.get("alpha") is None else overrides["alpha"]
        nets["l1_mu"] = mu if mu is not None else estimate_step_bound(op, alpha, cfg.c)
    rdir = _mkdir(root / "recon" / cfg.data_tag / method)
    entries = []
    rows = []
    for it in items:
        g = io.read_pasg(root / it["files"]["noisy"]["file"], cfg.arc.count).values
        if g.shape != op.data_shape:
            raise PipelineError("geometry-mismatch", f"{it['id']}: data shape {g.shape} != {op.data_shape}")
        f, history = reconstruct_one(cfg, op, method, g, nets, overrides)
        path = rdir / f"{it['id']}.paif"
        io.write_paif(path, f, op.grid)
        entries.append(_entry(root, path, cfg, id=it["id"]))
        rows += [(it["id"], k, repr(float(v))) for k, v in enumerate(history)]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["image", "iteration", "objective"])
    w.writerows(rows)
    (rdir / "objective.csv").write_text(buf.getvalue())
    used = {k: v for k, v in overrides.items() if v is not None}
    if "l1_mu" in nets:
        used["mu"] = nets["l1_mu"]
    manifest = {"config_checksum": cfg.checksum(), "method": method, "parameters": used, "images": entries}
    _write_json(rdir / "manifest.json", manifest)
    log.info("reconstructed %d images with %s", len(entries), method)
    return manifest


def cmd_evaluate(cfg: RunConfig, methods=METHODS) -> dict:
    """Mean metrics per method against the evaluation phantoms; JSON and text table."""
    root = Path(cfg.out)
    phantoms = _read_manifest(root / "phantoms" / "manifest.json", "missing-phantoms")["phantoms"]
    truth = {p["id"]: p["file"] for p in phantoms if p["id"].startswith("eval")}
    if not truth:
        raise PipelineError("missing-input", "no evaluation phantoms")
    ids = sorted(truth)
    truths = list(_load_images(root, [truth[i] for i in ids]))
    reports = []
    for method in methods:
        man = _read_manifest(root / "recon" / cfg.data_tag / method / "manifest.json", "missing-reconstructions")
        files = {e["id"]: e["file"] for e in man["images"]}
        if sorted(files) != ids:
            raise PipelineError("mismatched-files", f"{method}: reconstructions do not match the evaluation phantoms")
        recons = list(_load_images(root, [files[i] for i in ids]))
        reports.append(evaluate_dataset(recons, truths, METHOD_LABELS.get(method, method), cfg.data_tag))
    rdir = _mkdir(root / "report" / cfg.data_tag)
    text = reports_to_json(reports, config_checksum=cfg.checksum(), dataset=cfg.data_tag, images=ids)
    (rdir / "report.json").write_text(text)
    table = format_table(reports)
    (rdir / "report.txt").write_text(table)
    log.debug("report for %s:\n%s", cfg.data_tag, table)
    return json.loads(text)


def run_all(cfg: RunConfig, methods=METHODS) -> dict:
    """Phantoms through evaluation in one call."""
    cmd_phantom(cfg)
    cmd_simulate(cfg)
    for model in MODELS:
        if ("nett" if model == "regularizer" else "unet") in methods:
            cmd_train(cfg, model)
    for method in methods:
        cmd_reconstruct(cfg, method)
    return cmd_evaluate(cfg, methods)
