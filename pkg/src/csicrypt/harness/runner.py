"""Configuration-driven experiment runner.

A run evaluates every point of the cartesian sweep, writes one long-format row
per (point, role, variant, metric) and records seeds, versions and failures in
a manifest. Output files contain no timestamps, so identical configs produce
byte-identical results.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy
import yaml

from .. import __version__
from ..channel import GESTURES, GestureGeometry, generate_csi, synthesize_gesture_paths
from ..comm import Modulation, Role, run_link, sigma_for_payload_snr
from ..crypto import (EncryptedCsiSeries, EncryptionMatrix, KeyPhi, hash_key, passthrough_psi,
                      sample_psi, uniform_psi)
from ..errors import CsiCryptError
from ..metrics import to_db
from ..optimize import (ObjectiveWeights, OptimizerParams, QosBounds, ScenarioBundle,
                        optimize_psi, scalarized_objective)
from ..sensing import (ClassifierConfig, ClassifierR, FeatureConfig, SubmodelConfig,
                       SubmodelDataset, SubmodelF, SubmodelTrainConfig, extract_features,
                       infer_batch, surrogate_batch, train_classifier, train_submodel)
from ..timing import regular_schedule
from .attacks import AttackStrategy, run_attack
from .config import ExperimentConfig, config_to_dict
from .world import (ReferenceWorld, SampleSet, build_samples, derive_seed, eve_observations,
                    eve_positions, psi_for, sample_plan)

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("point", "distance_m", "packet_rate", "gamma", "experts", "antennas",
                  "role", "variant", "metric", "value", "n", "status")
OPT_COLUMNS = ("index", "kind", "comm_bob", "sdnr_bob", "sdnr_eve", "objective", "iterations")
BASE_RATE = 1000.0


def fmt(v) -> str:
    """Stable text form for CSV cells."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


# ---------------------------------------------------------------- sweep points

@dataclass(frozen=True)
class SweepPoint:
    index: int
    distance_m: Optional[float] = None
    packet_rate: Optional[float] = None
    gamma: Optional[float] = None
    experts: Optional[int] = None
    antennas: Optional[int] = None

    def coords(self, world: ReferenceWorld, sub: SubmodelConfig) -> Dict[str, Any]:
        return {
            "distance_m": world.eve_distance_m,
            "packet_rate": 1.0 / world.base_interval_s,
            "gamma": world.gamma,
            "experts": sub.num_experts,
            "antennas": self.antennas if self.antennas is not None else "",
        }


def sweep_points(cfg: ExperimentConfig) -> List[SweepPoint]:
    axes = [a for a in ("distance_m", "packet_rate", "gamma", "experts", "antennas")
            if a in cfg.sweep]
    grids = [cfg.sweep[a] for a in axes]
    points = []
    for i, combo in enumerate(itertools.product(*grids)):
        kw = dict(zip(axes, combo))
        for k in ("experts", "antennas"):
            if k in kw:
                kw[k] = int(kw[k])
        points.append(SweepPoint(i, **kw))
    return points


def scaled_features(rate: float) -> FeatureConfig:
    """STFT settings holding the window duration fixed at a given packet rate."""
    base = FeatureConfig()
    r = rate / BASE_RATE
    window = max(16, int(round(base.window * r)))
    hop = max(1, int(round(base.hop * r)))
    return replace(base, window=window, hop=hop, nfft=2 * window)


def point_world(cfg: ExperimentConfig, point: SweepPoint) -> ReferenceWorld:
    w = cfg.world()
    kw: Dict[str, Any] = {}
    if point.distance_m is not None:
        kw["eve_distance_m"] = float(point.distance_m)
    if point.gamma is not None:
        kw["gamma"] = float(point.gamma)
    if point.packet_rate is not None:
        # fixed gesture duration, so M follows the rate
        kw["num_packets"] = int(round(point.packet_rate * w.duration_s))
        kw["base_interval_s"] = 1.0 / float(point.packet_rate)
    return w.with_updates(**kw) if kw else w


# ---------------------------------------------------------------- comm reference link

@dataclass
class CommReference:
    """Weak-dynamic reference link used for BER and for optimizing Psi."""

    scenario: Any
    csi: Any
    sigma: float
    bundle: ScenarioBundle


def comm_reference(world: ReferenceWorld, cfg: ExperimentConfig) -> CommReference:
    c = cfg.comm
    m = world.num_packets
    sched = regular_schedule(m, world.base_interval_s)
    geo = GestureGeometry(reflectivity=c.reflectivity)
    dyn = synthesize_gesture_paths(GESTURES[0], world.duration_s, world.gesture_range_m,
                                   derive_seed(world.seed, 0xC0), geo)
    scen = world.layout().scenario(dyn)
    bob = generate_csi(scen.with_noise(0.0), m, sched, derive_seed(world.seed, 0xC1))
    sigma = sigma_for_payload_snr(bob, c.payload_snr_db)
    bob_n = generate_csi(scen.with_noise(sigma), m, sched, derive_seed(world.seed, 0xC1))
    eve = generate_csi(world.eve_layout().scenario(dyn).with_noise(sigma), m, sched,
                       derive_seed(world.seed, 0xC2))
    bundle = ScenarioBundle.from_csi(bob_n, eve_oracle=eve, sigma=sigma, block_len=c.block_len)
    return CommReference(scen, bob, sigma, bundle)


def term_scales(bundle: ScenarioBundle, weights: ObjectiveWeights, count: int, seed: int,
                shape: Tuple[int, int]) -> Tuple[float, float, float]:
    """Median of each raw term over random Psi draws; keeps the three terms comparable."""
    vals = [scalarized_objective(sample_psi(shape[0], shape[1], seed + s), bundle, weights,
                                 "none") for s in range(count)]
    out = []
    for name in ("comm_bob", "sdnr_bob", "sdnr_eve"):
        med = float(np.median([getattr(v, name) for v in vals]))
        out.append(med if med > 0 else 1.0)
    return tuple(out)


def psi_family(cfg: ExperimentConfig, world: ReferenceWorld,
               comm: Optional[CommReference] = None) -> Tuple[List[EncryptionMatrix], List[str]]:
    """The encryption family for a world, with stable ids."""
    src = cfg.psi
    q, m = world.num_antennas, world.num_packets
    if src.kind == "passthrough":
        return [passthrough_psi(q, m)], ["passthrough"]
    if src.kind == "file":
        mats = [EncryptionMatrix.load(p) for p in src.paths]
        return mats, [Path(p).name for p in src.paths]
    mats = [sample_psi(q, m, src.seed + i) for i in range(src.family)]
    ids = [f"random:{src.seed + i}" for i in range(src.family)]
    if src.kind == "optimized":
        comm = comm_reference(world, cfg) if comm is None else comm
        w = ObjectiveWeights(*src.weights)
        bundle = comm.bundle.with_scales(term_scales(comm.bundle, w, 20, src.seed + 10_000,
                                                     (q, m)))
        params = OptimizerParams(max_iters=src.max_iters,
                                 max_block_condition=src.max_block_condition)
        mats = [optimize_psi(p, bundle, w, QosBounds(src.eps_c, src.eps_sd), params).psi
                for p in mats]
        ids = [f"optimized:{src.seed + i}" for i in range(src.family)]
    return mats, ids


# ---------------------------------------------------------------- models

def _key(obj) -> str:
    return hashlib.sha256(repr(obj).encode()).hexdigest()[:16]


class ModelCache:
    """Trains each classifier / sub-model once per distinct training setup."""

    def __init__(self, classifier_path: Optional[str] = None,
                 submodel_path: Optional[str] = None):
        self._classifiers: Dict[str, ClassifierR] = {}
        self._submodels: Dict[str, SubmodelF] = {}
        self._train_sets: Dict[str, SampleSet] = {}
        self.classifier_path = classifier_path
        self.submodel_path = submodel_path
        self.train_runs: Dict[str, Any] = {}

    def train_set(self, world: ReferenceWorld, psis: Sequence[EncryptionMatrix],
                  psi_ids: Sequence[str]) -> SampleSet:
        k = _key((world, tuple(psi_ids)))
        if k not in self._train_sets:
            self._train_sets[k] = build_samples(world, "train", with_eve=False,
                                                with_metrics=False, psis=psis)
        return self._train_sets[k]

    def classifier(self, world: ReferenceWorld, ccfg: ClassifierConfig,
                   psis, psi_ids) -> ClassifierR:
        if self.classifier_path:
            k = "file:" + self.classifier_path
            if k not in self._classifiers:
                self._classifiers[k] = ClassifierR.load(self.classifier_path, ccfg.features)
            return self._classifiers[k]
        # the clean classifier never depends on timing jitter or on Eve
        rw = world.with_updates(gamma=0.0, eve_distance_m=world.rx_distance_m,
                                eve_bearing_deg=world.rx_bearing_deg)
        k = _key((rw, ccfg))
        if k not in self._classifiers:
            tr = self.train_set(rw, psis, psi_ids)
            spec = spectrograms(tr.plain, tr.schedules, ccfg.features)
            self._classifiers[k] = train_classifier(spec, tr.labels, ccfg)
        return self._classifiers[k]

    def submodel(self, world: ReferenceWorld, classifier: ClassifierR, scfg: SubmodelConfig,
                 tcfg: SubmodelTrainConfig, psis, psi_ids) -> SubmodelF:
        if self.submodel_path:
            k = "file:" + self.submodel_path
            if k not in self._submodels:
                self._submodels[k] = SubmodelF.load(self.submodel_path)
            return self._submodels[k]
        fw = world.with_updates(eve_distance_m=world.rx_distance_m,
                                eve_bearing_deg=world.rx_bearing_deg)
        k = _key((fw, tuple(psi_ids), scfg, tcfg, classifier.param_digest()))
        if k not in self._submodels:
            tr = self.train_set(fw, psis, psi_ids)
            model = SubmodelF(world.num_packets, scfg)
            data = SubmodelDataset(tr.encrypted, tr.keys, tr.labels, tr.schedules, tr.target)
            self.train_runs[k] = train_submodel(model, classifier, data, tcfg)
            self._submodels[k] = model
        return self._submodels[k]


def spectrograms(series: np.ndarray, schedules, fcfg: FeatureConfig) -> np.ndarray:
    return np.array([extract_features(x, s, fcfg).spectrogram
                     for x, s in zip(series, schedules)])


def model_configs(cfg: ExperimentConfig, world: ReferenceWorld, point: SweepPoint
                  ) -> Tuple[ClassifierConfig, SubmodelConfig, SubmodelTrainConfig]:
    fcfg = scaled_features(1.0 / world.base_interval_s)
    ccfg = replace(ClassifierConfig(epochs=20, seed=cfg.seed, features=fcfg), **cfg.classifier)
    scfg = replace(SubmodelConfig(seed=cfg.seed), **cfg.submodel)
    if point.experts is not None:
        scfg = replace(scfg, num_experts=point.experts)
    tcfg = replace(SubmodelTrainConfig(seed=cfg.seed), **cfg.training)
    return ccfg, scfg, tcfg


# ---------------------------------------------------------------- evaluation

Row = Dict[str, Any]


def _accuracy(pred, labels) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(labels)))


def _mean_db(values) -> float:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    return to_db(float(np.mean(v))) if v.size else float("nan")


def wrong_keys(keys: Sequence[KeyPhi], psi_index: np.ndarray, family: Sequence[KeyPhi],
               shift: int) -> List[KeyPhi]:
    """Each sample's key replaced by another family member's key."""
    return [family[(int(p) + shift) % len(family)] for p in psi_index]


def evaluate_point(cfg: ExperimentConfig, point: SweepPoint, cache: ModelCache) -> List[Row]:
    world = point_world(cfg, point)
    ccfg, scfg, tcfg = model_configs(cfg, world, point)
    coords = point.coords(world, scfg)
    rows: List[Row] = []

    def emit(role, variant, metric, value, n):
        rows.append({"point": point.index, **coords, "role": role, "variant": variant,
                     "metric": metric, "value": value, "n": n, "status": "ok"})

    comm = comm_reference(world, cfg) if ("bob_c" in cfg.roles or cfg.psi.kind == "optimized") \
        else None
    psis, psi_ids = psi_family(cfg, world, comm)
    needs_r = any(r in cfg.roles for r in ("clean", "eve", "bob_s", "bob_s_wrong_key")) \
        or bool(cfg.attacks)
    if needs_r:
        classifier = cache.classifier(world, ccfg, psis, psi_ids)
        fcfg = ccfg.features
        te = build_samples(world, "test", psis=psis,
                           with_eve="eve" in cfg.roles,
                           with_metrics=True)
        n = len(te)
        emit("scenario", "", "sensing_snr_db", _mean_db(te.sensing_snr), n)
        if "clean" in cfg.roles:
            pred = infer_batch(classifier, spectrograms(te.plain, te.schedules, fcfg))
            emit("clean", "", "accuracy", _accuracy(pred, te.labels), n)
        if "eve" in cfg.roles:
            eve_series = [EncryptedCsiSeries(x, s) for x, s in zip(te.eve_encrypted, te.schedules)]
            score = run_attack(AttackStrategy.naive(), [[s] for s in eve_series], classifier,
                               te.labels, fcfg)
            emit("eve", "naive", "accuracy", score.accuracy, n)
            emit("eve", "naive", "sdnr_db", _mean_db(te.sdnr_eve), n)
        if "bob_s" in cfg.roles or "bob_s_wrong_key" in cfg.roles:
            model = cache.submodel(world, classifier, scfg, tcfg, psis, psi_ids)
            emit("bob_s", "", "sdnr_db", _mean_db(te.sdnr_bob), n)
            if "bob_s" in cfg.roles:
                h = surrogate_batch(model, te.encrypted, te.keys)
                pred = infer_batch(classifier, spectrograms(h, te.schedules, fcfg))
                emit("bob_s", "", "accuracy", _accuracy(pred, te.labels), n)
            if "bob_s_wrong_key" in cfg.roles:
                family_keys = [hash_key(p) for p in psis]
                if len(family_keys) > 1:
                    accs = []
                    for shift in range(1, len(family_keys)):
                        keys = wrong_keys(te.keys, te.psi_index, family_keys, shift)
                        h = surrogate_batch(model, te.encrypted, keys)
                        pred = infer_batch(classifier, spectrograms(h, te.schedules, fcfg))
                        accs.append(_accuracy(pred, te.labels))
                    emit("bob_s_wrong_key", "", "accuracy", float(np.mean(accs)),
                         n * len(accs))
        if cfg.attacks:
            _attack_rows(cfg, world, point, classifier, psis, emit)
    if "bob_c" in cfg.roles:
        _comm_rows(cfg, world, comm, psis, emit)
    return rows


def _attack_rows(cfg, world, point, classifier, psis, emit) -> None:
    plan = sample_plan(world, "test")[:cfg.attack_trials]
    labels = np.array([c for c, _ in plan])
    wavelength = world.layout().wavelength
    for strategy in cfg.attacks:
        if point.antennas is not None:
            strategy = strategy.with_count(point.antennas)
        positions = eve_positions(world, strategy.count,
                                  strategy.spacing_wavelengths * wavelength)
        trials = []
        for c, k in plan:
            sched = world.schedule(derive_seed(derive_seed(world.seed, c, k), 1))
            coeffs = psis[psi_for(world, c, k) % len(psis)].coeffs
            obs = eve_observations(world, c, k, positions, coeffs, sched)
            trials.append([EncryptedCsiSeries(o, sched) for o in obs])
        score = run_attack(strategy, trials, classifier, labels)
        emit("attack", strategy.label, "accuracy", score.accuracy, len(plan))


def _comm_rows(cfg, world, comm: CommReference, psis, emit) -> None:
    c = cfg.comm
    m = world.num_packets
    psi = psis[0]
    plain = uniform_psi(world.num_antennas, m)
    for mod_name in c.modulations:
        mod = Modulation[mod_name]
        for seed in c.seeds:
            s = derive_seed(world.seed, 0xB0B, seed)
            common = dict(scenario=comm.scenario, mod=mod, num_packets=m,
                          payload_len=c.payload_len, sigma=comm.sigma, seed=s,
                          base_interval_s=world.base_interval_s, csi=comm.csi)
            base = run_link(psi=plain, role=Role.BobKeyed, **common)
            keyed = run_link(psi=psi, role=Role.BobKeyed, block_len=c.block_len, **common)
            keyless = run_link(psi=psi, role=Role.BobKeyless, block_len=c.block_len, **common)
            n = int(base.score.counts.get("total_bits", 0))
            for variant, rep in (("no_encryption", base), ("keyed", keyed),
                                 ("keyless", keyless)):
                emit("bob_c", f"{mod_name}/seed={seed}/{variant}", "ber", rep.ber, n)


# ---------------------------------------------------------------- optimization study

def optimization_rows(cfg: ExperimentConfig) -> List[Dict[str, Any]]:
    """Objective terms of ``count`` random draws and of the same draws optimized."""
    study = cfg.optimization
    world = cfg.world()
    comm = comm_reference(world, cfg)
    w = ObjectiveWeights(*study.weights)
    shape = (world.num_antennas, world.num_packets)
    bundle = comm.bundle.with_scales(term_scales(comm.bundle, w, study.scale_samples,
                                                 study.seed + 10_000_000, shape))
    params = OptimizerParams(max_iters=study.max_iters,
                             max_block_condition=study.max_block_condition)
    rows = []
    for i in range(study.count):
        init = sample_psi(shape[0], shape[1], study.seed + i)
        r = scalarized_objective(init, bundle, w, "none")
        rows.append({"index": i, "kind": "random", "comm_bob": r.comm_bob,
                     "sdnr_bob": r.sdnr_bob, "sdnr_eve": r.sdnr_eve, "objective": r.value,
                     "iterations": 0})
        tr = optimize_psi(init, bundle, w, QosBounds(), params)
        f = tr.final
        rows.append({"index": i, "kind": "optimized", "comm_bob": f.comm_bob,
                     "sdnr_bob": f.sdnr_bob, "sdnr_eve": f.sdnr_eve, "objective": f.value,
                     "iterations": tr.iterations})
    return rows


# ---------------------------------------------------------------- bundle

@dataclass
class ResultBundle:
    out_dir: Path
    rows: List[Row] = field(default_factory=list)
    optimization: List[Dict[str, Any]] = field(default_factory=list)
    errors: List[Dict[str, Any]] = field(default_factory=list)
    manifest: Dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


def csv_text(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def _write(path: Path, text: str) -> str:
    path.write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode()).hexdigest()


def versions() -> Dict[str, str]:
    return {"csicrypt": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "pyyaml": yaml.__version__}


def run_experiment(cfg: ExperimentConfig, cache: Optional[ModelCache] = None) -> ResultBundle:
    """Evaluate every sweep point and write ``results.csv`` plus ``manifest.json``.

    A point that raises is logged with its coordinates, contributes a single
    ``status=error`` row and does not affect other points.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = ModelCache() if cache is None else cache
    bundle = ResultBundle(out)
    points = sweep_points(cfg) if "sensing" in cfg.studies else []
    for point in points:
        try:
            bundle.rows += evaluate_point(cfg, point, cache)
        except (CsiCryptError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            where = {k: v for k, v in point.__dict__.items() if v is not None}
            log.error("sweep point %s failed: %s", where, exc)
            bundle.errors.append({"point": point.index, "coords": where,
                                  "error": f"{type(exc).__name__}: {exc}"})
            bundle.rows.append({"point": point.index, **{k: "" for k in RESULT_COLUMNS[1:6]},
                                **{k: v for k, v in where.items() if k != "index"},
                                "role": "", "variant": "", "metric": "", "value": "",
                                "n": 0, "status": "error"})
    digests = {}
    if points:
        digests["results.csv"] = _write(out / "results.csv",
                                        csv_text(bundle.rows, RESULT_COLUMNS))
    if "optimization" in cfg.studies:
        try:
            bundle.optimization = optimization_rows(cfg)
        except (CsiCryptError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.error("optimization study failed: %s", exc)
            bundle.errors.append({"point": "optimization", "coords": {},
                                  "error": f"{type(exc).__name__}: {exc}"})
        digests["optimization.csv"] = _write(out / "optimization.csv",
                                             csv_text(bundle.optimization, OPT_COLUMNS))
    bundle.manifest = {
        "name": cfg.name,
        "seed": cfg.seed,
        "config": config_to_dict(cfg),
        "points": [{k: v for k, v in p.__dict__.items() if v is not None} for p in points],
        "versions": versions(),
        "files": digests,
        "errors": bundle.errors,
    }
    _write(out / "manifest.json", json.dumps(bundle.manifest, indent=2, sort_keys=True,
                                             default=fmt) + "\n")
    return bundle
