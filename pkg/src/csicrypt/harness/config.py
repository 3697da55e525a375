"""Experiment configuration loaded from YAML."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import yaml

from ..errors import InvalidArgumentError
from ..timing import MAX_GAMMA
from .attacks import AttackStrategy
from .world import ReferenceWorld

ROLES = ("clean", "eve", "bob_s", "bob_s_wrong_key", "bob_c")
PSI_SOURCES = ("random", "optimized", "file", "passthrough")
SWEEP_AXES = ("distance_m", "packet_rate", "gamma", "experts", "antennas")
STUDIES = ("sensing", "optimization")


@dataclass(frozen=True)
class PsiSource:
    """Where the encryption family comes from.

    Attributes:
        kind: ``random`` (seeded draws), ``optimized`` (seeded draws refined by
            the optimizer on the comm reference link), ``file`` (saved
            matrices) or ``passthrough`` (no encryption).
        seed: Seed of the first random draw; member i uses ``seed + i``.
        family: Family size for random/optimized sources.
        paths: Matrix files for the ``file`` source.
        weights: Objective weights for the ``optimized`` source.
        eps_c, eps_sd: QoS floors for the ``optimized`` source.
    """

    kind: str = "random"
    seed: int = 1000
    family: int = 4
    paths: Tuple[str, ...] = ()
    weights: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    eps_c: float = 0.0
    eps_sd: float = 0.0
    max_iters: int = 60
    max_block_condition: Optional[float] = 3.0

    def __post_init__(self):
        if self.kind not in PSI_SOURCES:
            raise InvalidArgumentError(f"psi source must be one of {PSI_SOURCES}")
        if self.family < 1:
            raise InvalidArgumentError("psi family must be >= 1")
        if self.kind == "file":
            if not self.paths:
                raise InvalidArgumentError("file psi source needs paths")
            missing = [p for p in self.paths if not Path(p).is_file()]
            if missing:
                raise InvalidArgumentError(f"psi files not found: {missing}")


@dataclass(frozen=True)
class CommSettings:
    """The comm reference link: a weak dynamic path and a fixed payload SNR."""

    modulations: Tuple[str, ...] = ("QAM32", "QAM64")
    payload_snr_db: float = 25.0
    payload_len: int = 100
    reflectivity: float = 0.005
    block_len: int = 32
    seeds: Tuple[int, ...] = (0, 1, 2)


@dataclass(frozen=True)
class OptimizationStudy:
    """Random-versus-optimized comparison of the three objective terms."""

    count: int = 500
    weights: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    max_iters: int = 60
    max_block_condition: Optional[float] = 3.0
    scale_samples: int = 20
    alpha: float = 0.01
    seed: int = 50_000


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a scenario, an encryption source, roles and sweep axes.

    ``scenario`` holds :class:`ReferenceWorld` overrides (``scenario_file``
    may point at a YAML file with the same keys). Sweep axes left empty use
    the scenario's own value. The ``distance_m`` axis moves Eve.
    """

    scenario: Dict[str, Any] = field(default_factory=dict)
    psi: PsiSource = PsiSource()
    gamma: float = 0.0
    roles: Tuple[str, ...] = ("clean", "eve", "bob_s", "bob_s_wrong_key")
    attacks: Tuple[AttackStrategy, ...] = ()
    attack_trials: int = 200
    sweep: Dict[str, Tuple[float, ...]] = field(default_factory=dict)
    studies: Tuple[str, ...] = ("sensing",)
    classifier: Dict[str, Any] = field(default_factory=dict)
    submodel: Dict[str, Any] = field(default_factory=dict)
    training: Dict[str, Any] = field(default_factory=dict)
    comm: CommSettings = CommSettings()
    optimization: OptimizationStudy = OptimizationStudy()
    out_dir: str = "results"
    seed: int = 0
    name: str = "experiment"

    def __post_init__(self):
        bad = [r for r in self.roles if r not in ROLES]
        if bad:
            raise InvalidArgumentError(f"unknown roles {bad}; choose from {ROLES}")
        bad = [s for s in self.studies if s not in STUDIES]
        if bad:
            raise InvalidArgumentError(f"unknown studies {bad}; choose from {STUDIES}")
        for axis, values in self.sweep.items():
            if axis not in SWEEP_AXES:
                raise InvalidArgumentError(f"unknown sweep axis {axis!r}")
            if len(values) == 0:
                raise InvalidArgumentError(f"sweep axis {axis!r} is empty")
        for v in self.sweep.get("packet_rate", ()):
            if not 0 < v:
                raise InvalidArgumentError("packet rates must be positive")
        for v in self.sweep.get("gamma", ()) + (self.gamma,):
            if not 0 <= v <= MAX_GAMMA:
                raise InvalidArgumentError(f"gamma must lie in [0, {MAX_GAMMA}]")
        if self.attack_trials < 1:
            raise InvalidArgumentError("attack_trials must be >= 1")
        self.world()  # validates scenario keys

    def world(self) -> ReferenceWorld:
        known = {f.name for f in fields(ReferenceWorld)}
        unknown = set(self.scenario) - known
        if unknown:
            raise InvalidArgumentError(f"unknown scenario keys {sorted(unknown)}")
        w = ReferenceWorld().with_updates(**self.scenario)
        return w.with_updates(gamma=self.gamma, seed=self.seed, psi_seed=self.psi.seed,
                              psi_family=self.psi.family)

    def with_overrides(self, seed: Optional[int] = None, out_dir: Optional[str] = None
                       ) -> "ExperimentConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if out_dir is not None:
            kw["out_dir"] = str(out_dir)
        return dataclasses.replace(self, **kw)


def _tuple(v) -> tuple:
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def _build(cls, raw: Optional[Dict[str, Any]], tuples=()) -> Any:
    raw = dict(raw or {})
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise InvalidArgumentError(f"unknown {cls.__name__} keys {sorted(unknown)}")
    for k in tuples:
        if k in raw:
            raw[k] = _tuple(raw[k])
    return cls(**raw)


def _axis_values(spec) -> Tuple[float, ...]:
    """A list, or ``{start, stop, step}`` with an inclusive stop."""
    if isinstance(spec, dict):
        start, stop, step = (float(spec[k]) for k in ("start", "stop", "step"))
        if step <= 0 or stop < start:
            raise InvalidArgumentError("sweep range needs step > 0 and stop >= start")
        n = int(round((stop - start) / step)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(v) for v in _tuple(spec))


def config_from_dict(raw: Dict[str, Any], base_dir: Union[str, Path] = ".") -> ExperimentConfig:
    """Build a config from parsed YAML; relative paths resolve against ``base_dir``."""
    raw = dict(raw or {})
    base = Path(base_dir)
    scenario = dict(raw.pop("scenario", {}) or {})
    scen_file = raw.pop("scenario_file", None)
    if scen_file is not None:
        path = base / scen_file
        if not path.is_file():
            raise InvalidArgumentError(f"scenario file not found: {path}")
        scenario = {**(yaml.safe_load(path.read_text()) or {}), **scenario}
    psi_raw = dict(raw.pop("psi", {}) or {})
    if "paths" in psi_raw:
        psi_raw["paths"] = tuple(str(base / p) for p in _tuple(psi_raw["paths"]))
    sweep = {k: _axis_values(v) for k, v in (raw.pop("sweep", {}) or {}).items()}
    attacks = tuple(AttackStrategy.parse(a) for a in raw.pop("attacks", []) or [])
    kw = dict(
        scenario=scenario,
        psi=_build(PsiSource, psi_raw, ("weights",)),
        sweep=sweep,
        attacks=attacks,
        comm=_build(CommSettings, raw.pop("comm", None), ("modulations", "seeds")),
        optimization=_build(OptimizationStudy, raw.pop("optimization", None), ("weights",)),
    )
    for k in ("roles", "studies"):
        if k in raw:
            kw[k] = _tuple(raw.pop(k))
    if "out" in raw:
        raw["out_dir"] = raw.pop("out")
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - names
    if unknown:
        raise InvalidArgumentError(f"unknown config keys {sorted(unknown)}")
    kw.update(raw)
    return ExperimentConfig(**kw)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"config not found: {path}")
    return config_from_dict(yaml.safe_load(path.read_text()) or {}, path.parent)


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Plain-data view used in the run manifest."""
    out = dataclasses.asdict(cfg)
    out["attacks"] = [a.label for a in cfg.attacks]
    return _plain(out)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "value") and not isinstance(v, (int, float, str)):
        return v.value
    return v
