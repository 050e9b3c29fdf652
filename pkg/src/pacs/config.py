"""Run configuration with the desk and paper presets."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path


@dataclass
class GridConfig:
    n_side: int = 64
    extent: tuple = (-1.0, 1.0, -1.0, 1.0)


@dataclass
class ArcConfig:
    count: int = 64
    radius: float = 1.0
    angle_start: float | None = None
    angle_end: float | None = None


@dataclass
class SamplingConfig:
    kind: str = "sparse"
    m: int = 16
    seed: int = 1
    v: float = 2.0


@dataclass
class PhantomConfig:
    kind: str = "vessel"
    smoothness: float = 0.5
    n_train: int = 50
    n_eval: int = 10
    eval_kind: str = "vessel"


@dataclass
class JointConfig:
    alpha: float = 1e-8
    beta: float = 50.0
    # None selects the stability bound of the smooth part
    mu: float | None = None
    iterations: int = 70


@dataclass
class NettConfig:
    mu: float = 0.5
    lam: float = 0.5
    iterations: int = 10
    h1_mu: float = 0.5
    h1_lam: float = 0.35
    a: float = 0.0
    clamp: bool = False
    # multiplies every NETT and H1 step size; Bernoulli sampling has the larger |A^T A|
    step_scale: dict = field(default_factory=lambda: {"sparse": 1.0, "bernoulli": 0.6})


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 0.0005
    batch: int = 4
    hidden_channels: int = 32
    unet_depth: int = 3
    unet_channels: int = 16


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    arc: ArcConfig = field(default_factory=ArcConfig)
    Q: int = 160
    c: float = 1.0
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    noise_level: float = 0.0
    phantom: PhantomConfig = field(default_factory=PhantomConfig)
    joint: JointConfig = field(default_factory=JointConfig)
    nett: NettConfig = field(default_factory=NettConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    preset: str = "desk"
    out: str = "run"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"]["extent"] = list(d["grid"]["extent"])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict, base: "RunConfig | None" = None) -> "RunConfig":
        """Build a config from ``d``; keys missing from ``d`` keep the values of ``base``."""
        cfg = copy.deepcopy(base) if base is not None else cls()
        _merge(cfg, d, "config")
        cfg.grid.extent = tuple(float(v) for v in cfg.grid.extent)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, base: "RunConfig | None" = None) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()), base)

    def checksum(self) -> str:
        """SHA-256 of the canonical JSON, ignoring the output directory."""
        d = self.to_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @property
    def noisy(self) -> bool:
        return self.noise_level > 0

    def joint_mu(self) -> float | None:
        """Explicit joint step size, the per-scheme value of the paper preset, or None for the stability bound."""
        if self.joint.mu is not None:
            return self.joint.mu
        if self.preset == "paper":
            return PAPER_JOINT_MU[(self.sampling.kind, self.noisy)]
        return None

    def nett_mu(self) -> float:
        return self.nett.mu * self.nett.step_scale[self.sampling.kind]

    def h1_mu(self) -> float:
        return self.nett.h1_mu * self.nett.step_scale[self.sampling.kind]

    @property
    def data_tag(self) -> str:
        """Name of the measurement variant used downstream, e.g. ``sparse-clean``."""
        return f"{self.sampling.kind}-" + ("clean" if self.noise_level == 0 else f"noise{self.noise_level:g}")

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.sampling.kind not in ("sparse", "bernoulli"):
            raise ValueError(f"unknown sampling kind {self.sampling.kind!r}")
        if not 1 <= self.sampling.m <= self.arc.count:
            raise ValueError(f"need 1 <= m <= M, got m={self.sampling.m}, M={self.arc.count}")
        if self.sampling.kind == "sparse" and self.arc.count % self.sampling.m:
            raise ValueError(f"sparse sampling needs m | M, got m={self.sampling.m}, M={self.arc.count}")
        if self.noise_level < 0:
            raise ValueError("noise level must be non-negative")
        if self.phantom.n_train < 0 or self.phantom.n_eval < 0:
            raise ValueError("phantom counts must be non-negative")
        if set(self.nett.step_scale) != {"sparse", "bernoulli"} or min(self.nett.step_scale.values()) <= 0:
            raise ValueError("nett.step_scale needs positive entries for 'sparse' and 'bernoulli'")
        if self.Q < 3 or self.grid.n_side < 1:
            raise ValueError("Q must be at least 3 and the grid non-empty")


def _merge(obj, d: dict, where: str) -> None:
    if not isinstance(d, dict):
        raise ValueError(f"{where}: expected an object")
    names = {f.name: f for f in fields(obj)}
    for key, value in d.items():
        if key not in names:
            raise ValueError(f"{where}: unknown key {key!r}")
        current = getattr(obj, key)
        if is_dataclass(current):
            _merge(current, value, f"{where}.{key}")
        elif isinstance(current, dict) and isinstance(value, dict):
            setattr(obj, key, {**current, **value})
        else:
            setattr(obj, key, value)


def desk_preset() -> RunConfig:
    """Scaled configuration: 64x64 grid, 64 sensors, 160 samples, m = 16."""
    return RunConfig()


def paper_preset() -> RunConfig:
    """Full-size parameters in dimensionless geometry.

    The experimental setup's sensor arc, sample counts, dataset size and
    solver parameters, on the square [-1, 1]^2 with unit sensor radius.
    """
    return RunConfig(
        grid=GridConfig(128, (-1.0, 1.0, -1.0, 1.0)),
        arc=ArcConfig(240, 1.0, 35.0, 324.0),
        Q=747,
        sampling=SamplingConfig("sparse", 60, 1, 2.0),
        phantom=PhantomConfig(n_train=500, n_eval=10),
        joint=JointConfig(alpha=0.001, beta=0.005, mu=None, iterations=70),
        nett=NettConfig(mu=0.5, lam=0.5, iterations=10, h1_mu=0.5, h1_lam=0.35,
                        step_scale={"sparse": 1.0, "bernoulli": 1.0}),
        train=TrainConfig(epochs=300, lr=0.0005, batch=4, hidden_channels=32, unet_depth=3, unet_channels=16),
        preset="paper",
    )


# step sizes of the joint l1 solver under the paper preset, by (scheme, noisy)
PAPER_JOINT_MU = {
    ("sparse", False): 0.0625,
    ("sparse", True): 0.03125,
    ("bernoulli", False): 0.125,
    ("bernoulli", True): 0.03125,
}
PRESETS = {"desk": desk_preset, "paper": paper_preset}

