import json

import numpy as np
import pytest

from pacs import io, pipeline
from pacs.cli import main
from pacs.config import PAPER_JOINT_MU, RunConfig, desk_preset, paper_preset
from pacs.nn.network import Network

TINY = {
    "grid": {"n_side": 16},
    "arc": {"count": 16},
    "Q": 40,
    "sampling": {"m": 4},
    "phantom": {"n_train": 3, "n_eval": 2},
    "joint": {"iterations": 3},
    "nett": {"iterations": 2},
    "train": {"epochs": 1, "hidden_channels": 4, "unet_channels": 4},
}


def tiny(tmp_path, **patch):
    cfg = RunConfig.from_dict(TINY, desk_preset())
    return RunConfig.from_dict({"out": str(tmp_path), **patch}, cfg)


def test_round_trip(tmp_path):
    cfg = tiny(tmp_path)
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    assert RunConfig.load(path) == cfg
    assert RunConfig.load(path).checksum() == cfg.checksum()


def test_checksum_ignores_out_but_not_seed(tmp_path):
    a = tiny(tmp_path)
    assert a.checksum() == tiny(tmp_path / "other").checksum()
    assert a.checksum() != tiny(tmp_path, seed=1).checksum()


def test_unknown_keys_and_invalid_values():
    with pytest.raises(ValueError):
        RunConfig.from_dict({"colour": 1})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"nett": {"momentum": 1}})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"sampling": {"m": 15}})  # sparse needs m | M
    with pytest.raises(ValueError):
        RunConfig.from_dict({"noise_level": -0.1})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"sampling": {"kind": "gaussian"}})


def test_desk_preset():
    cfg = desk_preset()
    assert (cfg.grid.n_side, cfg.arc.count, cfg.Q, cfg.sampling.m) == (64, 64, 160, 16)
    assert (cfg.nett.mu, cfg.nett.lam, cfg.nett.iterations) == (0.5, 0.5, 10)
    assert (cfg.train.epochs, cfg.train.lr, cfg.train.batch) == (100, 0.0005, 4)
    assert cfg.joint.iterations == 70 and cfg.joint_mu() is None


def test_step_scale_per_scheme():
    sparse = desk_preset()
    bern = RunConfig.from_dict({"sampling": {"kind": "bernoulli"}})
    assert (sparse.nett_mu(), sparse.h1_mu()) == (0.5, 0.5)
    assert (bern.nett_mu(), bern.h1_mu()) == (0.3, 0.3)
    assert RunConfig.from_dict({"noise_level": 0.07}).nett_mu() == 0.5
    # nested dicts merge key by key
    partial = RunConfig.from_dict({"nett": {"step_scale": {"bernoulli": 0.5}}})
    assert partial.nett.step_scale == {"sparse": 1.0, "bernoulli": 0.5}
    with pytest.raises(ValueError):
        RunConfig.from_dict({"nett": {"step_scale": {"gaussian": 1.0}}})
    with pytest.raises(ValueError):
        RunConfig.from_dict({"nett": {"step_scale": {"sparse": 0.0}}})


def test_paper_preset_values():
    cfg = paper_preset()
    assert (cfg.grid.n_side, cfg.arc.count, cfg.Q, cfg.sampling.m) == (128, 240, 747, 60)
    assert (cfg.arc.angle_start, cfg.arc.angle_end) == (35.0, 324.0)
    assert (cfg.phantom.n_train, cfg.train.epochs) == (500, 300)
    assert (cfg.joint.alpha, cfg.joint.beta, cfg.joint.iterations) == (0.001, 0.005, 70)
    assert (cfg.nett.h1_mu, cfg.nett.h1_lam) == (0.5, 0.35)
    assert cfg.joint_mu() == 0.0625
    assert cfg.nett.step_scale == {"sparse": 1.0, "bernoulli": 1.0}
    for (kind, noisy), mu in PAPER_JOINT_MU.items():
        c = RunConfig.from_dict({"sampling": {"kind": kind}, "noise_level": 0.07 if noisy else 0.0}, cfg)
        assert c.joint_mu() == mu


def test_data_tag():
    assert desk_preset().data_tag == "sparse-clean"
    assert RunConfig.from_dict({"noise_level": 0.07}).data_tag == "sparse-noise0.07"


def test_zero_phantoms_empty_manifest(tmp_path):
    cfg = tiny(tmp_path, phantom={"n_train": 0, "n_eval": 0})
    assert pipeline.cmd_phantom(cfg)["phantoms"] == []
    assert pipeline.cmd_simulate(cfg)["items"] == []
    with pytest.raises(pipeline.PipelineError) as err:
        pipeline.cmd_train(cfg, "regularizer")
    assert err.value.code == "missing-dataset"


def test_phantoms_deterministic(tmp_path):
    a = pipeline.cmd_phantom(tiny(tmp_path / "a"))
    b = pipeline.cmd_phantom(tiny(tmp_path / "b"))
    assert [e["sha256"] for e in a["phantoms"]] == [e["sha256"] for e in b["phantoms"]]
    c = pipeline.cmd_phantom(tiny(tmp_path / "c", seed=3))
    assert [e["sha256"] for e in a["phantoms"]] != [e["sha256"] for e in c["phantoms"]]


def test_simulate_noise_free_and_sparse_channels(tmp_path):
    cfg = tiny(tmp_path)
    pipeline.cmd_phantom(cfg)
    man = pipeline.cmd_simulate(cfg)
    for it in man["items"]:
        files = it["files"]
        assert files["clean"]["sha256"] == files["noisy"]["sha256"]
        g = io.read_pasg(tmp_path / files["clean"]["file"], 16).values
        full = io.read_pasg(tmp_path / files["sinogram"]["file"], 16).values
        assert g.shape == (4, 40)
        assert np.array_equal(g, 2.0 * full[::4])  # weight v = 2 on every kept sensor


def test_noise_changes_only_noisy_file(tmp_path):
    clean = tiny(tmp_path)
    noisy = tiny(tmp_path, noise_level=0.07)
    pipeline.cmd_phantom(clean)
    a = pipeline.cmd_simulate(clean)["items"]
    b = pipeline.cmd_simulate(noisy)["items"]
    for x, y in zip(a, b):
        assert x["files"]["clean"]["sha256"] == y["files"]["clean"]["sha256"]
        assert x["files"]["noisy"]["sha256"] != y["files"]["noisy"]["sha256"]


def test_schemes_differ_only_in_measurements(tmp_path):
    s = tiny(tmp_path)
    b = tiny(tmp_path, sampling={"kind": "bernoulli"})
    pipeline.cmd_phantom(s)
    ms = pipeline.cmd_simulate(s)["items"]
    mb = pipeline.cmd_simulate(b)["items"]
    for x, y in zip(ms, mb):
        assert x["phantom"] == y["phantom"]
        assert x["files"]["sinogram"]["sha256"] == y["files"]["sinogram"]["sha256"]
        assert x["files"]["clean"]["sha256"] != y["files"]["clean"]["sha256"]


def test_train_zero_lr_keeps_init(tmp_path):
    cfg = tiny(tmp_path)
    pipeline.cmd_phantom(cfg)
    pipeline.cmd_simulate(cfg)
    pipeline.cmd_train(cfg, "regularizer", epochs=2, lr=0.0)
    saved = Network.load(tmp_path / "train" / cfg.data_tag / "regularizer" / "weights.netw")
    init = pipeline.build_model(cfg, "regularizer")
    assert all(np.array_equal(p, q) for p, q in zip(saved.params(), init.params()))
    loss = (tmp_path / "train" / cfg.data_tag / "regularizer" / "loss.csv").read_text().splitlines()
    assert loss[0] == "epoch,loss" and len(loss) == 3


def test_zero_unet_reconstructs_initial(tmp_path):
    cfg = tiny(tmp_path)
    pipeline.cmd_phantom(cfg)
    pipeline.cmd_simulate(cfg)
    wpath = tmp_path / "zero.netw"
    pipeline.build_model(cfg, "unet").zero_weights().save(wpath)
    man = pipeline.cmd_reconstruct(cfg, "unet", wpath)
    fbp = pipeline.cmd_reconstruct(cfg, "fbp")
    assert [e["sha256"] for e in man["images"]] == [e["sha256"] for e in fbp["images"]]


def test_missing_weights(tmp_path):
    cfg = tiny(tmp_path)
    pipeline.cmd_phantom(cfg)
    pipeline.cmd_simulate(cfg)
    with pytest.raises(pipeline.PipelineError) as err:
        pipeline.cmd_reconstruct(cfg, "nett")
    assert err.value.code == "missing-weights"


def test_pipeline_report_and_truth_self_check(tmp_path):
    cfg = tiny(tmp_path)
    report = pipeline.run_all(cfg)
    assert [m["method"] for m in report["methods"]] == ["FBP", "l1", "H1", "U-net", "NETT"]
    lines = (tmp_path / "report" / cfg.data_tag / "report.txt").read_text().splitlines()
    assert len(lines) == 6 and all(len(l.split()) == 5 for l in lines)
    # the ground truth evaluated against itself
    rdir = tmp_path / "recon" / cfg.data_tag / "truth"
    man = json.loads((tmp_path / "phantoms" / "manifest.json").read_text())
    images = [{"id": p["id"], "file": p["file"]} for p in man["phantoms"] if p["id"].startswith("eval")]
    rdir.mkdir(parents=True)
    (rdir / "manifest.json").write_text(json.dumps({"images": images}))
    rep = pipeline.cmd_evaluate(cfg, ["truth"])
    assert rep["methods"][0]["means"] == {"mse": 0.0, "rmae": 0.0, "psnr": "inf", "ssim": 1.0}


def write_cfg(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return str(path)


def test_cli_end_to_end(tmp_path, capsys):
    common = ["--config", write_cfg(tmp_path), "--out", str(tmp_path / "run"), "--seed", "2"]
    assert main(["phantom", *common]) == 0
    assert main(["simulate", *common]) == 0
    assert main(["train", "--model", "regularizer", *common]) == 0
    assert main(["train", "--model", "unet", "--epochs", "1", *common]) == 0
    assert main(["reconstruct", "--method", "all", *common]) == 0
    assert main(["reconstruct", "--method", "nett", "--mu", "0.1", "--lambda", "0.2", "--clamp", *common]) == 0
    capsys.readouterr()
    assert main(["evaluate", *common]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].split() == ["method", "MSE", "RMAE", "PSNR", "SSIM"]
    man = json.loads((tmp_path / "run" / "recon" / "sparse-clean" / "nett" / "manifest.json").read_text())
    assert man["parameters"] == {"mu": 0.1, "lam": 0.2, "clamp": True}


def test_cli_missing_input_exit_code(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path / "nothing")]) == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("pacs-error ")
    payload = json.loads(err[len("pacs-error "):])
    assert payload == {"code": "missing-phantoms", "command": "simulate", "message": payload["message"]}


def test_cli_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"sampling": {"m": 7}}')
    assert main(["phantom", "--config", str(bad), "--out", str(tmp_path)]) == 1
    payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1][len("pacs-error "):])
    assert payload["code"] == "invalid-input"


def test_cli_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["reconstruct", "--method", "magic"])
    assert exc.value.code == 2
    assert "pacs-error" in capsys.readouterr().err
