"""Figure-named aggregate tables and an acceptance summary from result bundles."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import mannwhitneyu, spearmanr

from .runner import csv_text

log = logging.getLogger(__name__)

FIGURES = ("fig05_snr.csv", "fig06_correlation.csv", "fig10_sensing.csv", "fig11_comm.csv",
           "fig13_optimization.csv", "fig14_antennas.csv", "fig16_gamma.csv")

# acceptance thresholds
CLEAN_MIN, EVE_MAX, REDUCTION_MIN = 0.90, 0.25, 0.60
BOB_MIN, WRONG_KEY_DROP = 0.85, 0.20
GAMMA_DROP, GAMMA_NOISE, GAMMA_PLATEAU = 0.03, 0.03, 0.5
SPEARMAN_MIN = 0.8
BER_PENALTY_MAX, KEYLESS_FACTOR = 1e-4, 10.0
ANTENNA_TOL = 0.05


@dataclass
class LoadedBundle:
    name: str
    path: Path
    rows: List[Dict[str, str]]
    optimization: List[Dict[str, str]]
    manifest: Dict


@dataclass
class Report:
    tables: Dict[str, List[Dict]] = field(default_factory=dict)
    checks: List[Tuple[str, Optional[bool], str]] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def summary_text(self) -> str:
        lines = []
        for name, ok, detail in self.checks:
            verdict = "N/A " if ok is None else ("PASS" if ok else "FAIL")
            lines.append(f"{verdict} {name}: {detail}")
        for w in self.warnings:
            lines.append(f"WARNING {w}")
        return "\n".join(lines) + "\n"


def _read_csv(path: Path) -> List[Dict[str, str]]:
    if not path.is_file():
        return []
    with path.open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def load_bundle(path: Union[str, Path]) -> LoadedBundle:
    path = Path(path)
    man_path = path / "manifest.json"
    manifest = json.loads(man_path.read_text()) if man_path.is_file() else {}
    return LoadedBundle(manifest.get("name", path.name), path, _read_csv(path / "results.csv"),
                        _read_csv(path / "optimization.csv"), manifest)


def _f(x) -> float:
    try:
        return float(x)
    except (TypeError, ValueError):
        return float("nan")


def _lookup(rows, role, metric, variant=None) -> Dict[str, float]:
    """Point id -> value for one (role, metric[, variant])."""
    out = {}
    for r in rows:
        if r["status"] == "ok" and r["role"] == role and r["metric"] == metric and \
                (variant is None or r["variant"] == variant):
            out[r["point"]] = _f(r["value"])
    return out


def _coords(rows) -> Dict[str, Dict[str, str]]:
    out = {}
    for r in rows:
        if r["status"] == "ok":
            out.setdefault(r["point"], {k: r[k] for k in ("distance_m", "packet_rate", "gamma",
                                                          "experts", "antennas")})
    return out


def _psi_kind(b: LoadedBundle) -> str:
    return b.manifest.get("config", {}).get("psi", {}).get("kind", "")


def _sweep_axes(b: LoadedBundle) -> Dict[str, list]:
    return b.manifest.get("config", {}).get("sweep", {}) or {}


def _ordered_points(coords) -> List[str]:
    return sorted(coords, key=lambda p: int(p))


def build_report(bundles: Sequence[LoadedBundle]) -> Report:
    rep = Report()
    if not bundles or all(not b.rows and not b.optimization for b in bundles):
        rep.warnings.append("empty bundle: no result rows; all tables are empty")
    for b in bundles:
        bad = [r for r in b.rows if r["status"] != "ok"]
        if bad:
            rep.warnings.append(f"{b.name}: {len(bad)} sweep point(s) errored")
    _snr(rep, bundles)
    _correlation(rep, bundles)
    _sensing(rep, bundles)
    _comm(rep, bundles)
    _optimization(rep, bundles)
    _antennas(rep, bundles)
    _gamma(rep, bundles)
    for name in FIGURES:
        if not rep.tables.get(name):
            rep.warnings.append(f"{name}: no rows (missing experiment output)")
            rep.tables.setdefault(name, [])
    return rep


def _snr(rep, bundles):
    rows = []
    for b in bundles:
        co = _coords(b.rows)
        eta = _lookup(b.rows, "scenario", "sensing_snr_db")
        eve = _lookup(b.rows, "eve", "sdnr_db")
        bob = _lookup(b.rows, "bob_s", "sdnr_db")
        for p in _ordered_points(co):
            if p in eta:
                rows.append({"bundle": b.name, "point": p, **co[p], "sensing_snr_db": eta[p],
                             "eve_sdnr_db": eve.get(p, ""), "bob_sdnr_db": bob.get(p, "")})
    rep.tables["fig05_snr.csv"] = rows


def spearman_pairs(sdnr_db: Sequence[float], accuracy: Sequence[float]) -> float:
    """Rank correlation; NaN when either side is constant."""
    x, y = np.asarray(sdnr_db, float), np.asarray(accuracy, float)
    if x.size < 2 or np.all(x == x[0]) or np.all(y == y[0]):
        return float("nan")
    return float(spearmanr(x, y).statistic)


def _correlation(rep, bundles):
    rows = []
    for b in bundles:
        if len(_sweep_axes(b).get("distance_m", [])) < 2:
            continue
        co = _coords(b.rows)
        acc = _lookup(b.rows, "eve", "accuracy", "naive")
        sd = _lookup(b.rows, "eve", "sdnr_db", "naive")
        pts = [p for p in _ordered_points(co) if p in acc and p in sd]
        for p in pts:
            rows.append({"bundle": b.name, "psi": _psi_kind(b), "distance_m": co[p]["distance_m"],
                         "eve_sdnr_db": sd[p], "eve_accuracy": acc[p]})
        rho = spearman_pairs([sd[p] for p in pts], [acc[p] for p in pts])
        ok = None if math.isnan(rho) or len(pts) < 10 else rho > SPEARMAN_MIN
        rep.checks.append((f"C7 SDNR-accuracy rank correlation [{b.name}]", ok,
                           f"rho={rho:.3f} over {len(pts)} distances (need >{SPEARMAN_MIN}, "
                           f">=10 points)"))
    rep.tables["fig06_correlation.csv"] = rows


def _sensing(rep, bundles):
    rows = []
    for b in bundles:
        co = _coords(b.rows)
        clean = _lookup(b.rows, "clean", "accuracy")
        eve = _lookup(b.rows, "eve", "accuracy", "naive")
        bob = _lookup(b.rows, "bob_s", "accuracy")
        wrong = _lookup(b.rows, "bob_s_wrong_key", "accuracy")
        for p in _ordered_points(co):
            if p not in clean and p not in bob:
                continue
            rows.append({"bundle": b.name, "point": p, **co[p], "clean": clean.get(p, ""),
                         "eve": eve.get(p, ""), "bob_s": bob.get(p, ""),
                         "bob_s_wrong_key": wrong.get(p, "")})
            if len(co) == 1 and p in clean and p in eve:
                red = clean[p] - eve[p]
                ok = clean[p] >= CLEAN_MIN and eve[p] < EVE_MAX and red >= REDUCTION_MIN
                rep.checks.append((f"C4 eavesdropping collapse [{b.name}]", ok,
                                   f"clean={clean[p]:.3f} eve={eve[p]:.3f} reduction={red:.3f}"))
            if len(co) == 1 and p in bob and p in wrong:
                drop = bob[p] - wrong[p]
                ok = bob[p] >= BOB_MIN and drop >= WRONG_KEY_DROP
                rep.checks.append((f"C5 legitimate sensing retention [{b.name}]", ok,
                                   f"bob_s={bob[p]:.3f} wrong_key={wrong[p]:.3f} drop={drop:.3f}"))
    rep.tables["fig10_sensing.csv"] = rows


def _comm(rep, bundles):
    rows = []
    for b in bundles:
        grouped: Dict[Tuple[str, str, str], Dict[str, float]] = {}
        for r in b.rows:
            if r["status"] == "ok" and r["role"] == "bob_c":
                mod, seed, variant = r["variant"].split("/")
                grouped.setdefault((r["point"], mod, seed.split("=")[1]), {})[variant] = \
                    _f(r["value"])
        penalties, factors_ok = [], True
        for (p, mod, seed), v in sorted(grouped.items(), key=lambda kv: (int(kv[0][0]),
                                                                          kv[0][1],
                                                                          int(kv[0][2]))):
            rows.append({"bundle": b.name, "point": p, "modulation": mod, "seed": seed,
                         "no_encryption": v.get("no_encryption", ""), "keyed": v.get("keyed", ""),
                         "keyless": v.get("keyless", "")})
            if {"no_encryption", "keyed", "keyless"} <= set(v):
                penalties.append(v["keyed"] - v["no_encryption"])
                factors_ok &= v["keyless"] >= KEYLESS_FACTOR * v["keyed"] and v["keyless"] > 0
        if penalties:
            worst = max(penalties)
            ok = worst < BER_PENALTY_MAX and factors_ok
            rep.checks.append((f"C9 communication protection [{b.name}]", ok,
                               f"max keyed-minus-plain BER={worst:.2e}, keyless>=10x keyed on "
                               f"every seed: {factors_ok}"))
    rep.tables["fig11_comm.csv"] = rows


TERMS = (("comm_bob", 1.0), ("sdnr_bob", 1.0), ("sdnr_eve", -1.0))


def optimization_table(opt_rows: Sequence[Dict], alpha: float = 0.01) -> List[Dict]:
    """Median of each term (sign-adjusted so larger is better) and a one-sided rank-sum test."""
    out = []
    for name, sign in TERMS:
        rnd = np.array([sign * _f(r[name]) for r in opt_rows if r["kind"] == "random"])
        opt = np.array([sign * _f(r[name]) for r in opt_rows if r["kind"] == "optimized"])
        if rnd.size == 0 or opt.size == 0:
            continue
        p = float(mannwhitneyu(opt, rnd, alternative="greater").pvalue)
        label = name if sign > 0 else f"neg_{name}"
        out.append({"term": label, "random_median": float(np.median(rnd)),
                    "optimized_median": float(np.median(opt)), "p_value": p,
                    "n_random": int(rnd.size), "n_optimized": int(opt.size),
                    "improved": bool(p < alpha and np.median(opt) > np.median(rnd))})
    return out


def _optimization(rep, bundles):
    rows = []
    for b in bundles:
        if not b.optimization:
            continue
        alpha = b.manifest.get("config", {}).get("optimization", {}).get("alpha", 0.01)
        table = optimization_table(b.optimization, alpha)
        rows += [{"bundle": b.name, **t} for t in table]
        ok = len(table) == 3 and all(t["improved"] for t in table)
        rep.checks.append((f"C8 optimization dominance [{b.name}]", ok,
                           "; ".join(f"{t['term']} p={t['p_value']:.1e}" for t in table)))
    rep.tables["fig13_optimization.csv"] = rows


def _antennas(rep, bundles):
    rows = []
    for b in bundles:
        per_point: Dict[str, Dict[str, float]] = {}
        for r in b.rows:
            if r["status"] == "ok" and r["role"] == "attack":
                per_point.setdefault(r["point"], {})[r["variant"]] = _f(r["value"])
                name, _, count = r["variant"].partition(":")
                rows.append({"bundle": b.name, "point": r["point"], "strategy": name,
                             "count": count or "1", "accuracy": _f(r["value"]),
                             "trials": r["n"]})
        for p, acc in sorted(per_point.items(), key=lambda kv: int(kv[0])):
            if "naive" in acc and "virtual_antennas:80" in acc:
                diff = acc["virtual_antennas:80"] - acc["naive"]
                rep.checks.append((f"C10 diversity futility [{b.name}]", abs(diff) <= ANTENNA_TOL,
                                   f"virtual80={acc['virtual_antennas:80']:.3f} "
                                   f"naive={acc['naive']:.3f} diff={diff:+.3f}"))
    rep.tables["fig14_antennas.csv"] = rows


def gamma_check(gammas: Sequence[float], eve_acc: Sequence[float]) -> Tuple[bool, str]:
    """Drop at the plateau versus gamma 0, and no rise beyond noise up to the plateau."""
    g = np.asarray(gammas, float)
    a = np.asarray(eve_acc, float)
    order = np.argsort(g)
    g, a = g[order], a[order]
    if g.size == 0 or g[0] != 0 or not np.any(np.isclose(g, GAMMA_PLATEAU)):
        return False, "needs gamma 0 and 0.5 points"
    base = a[0]
    at_plateau = a[np.isclose(g, GAMMA_PLATEAU)][0]
    drop = base - at_plateau
    upto = a[g <= GAMMA_PLATEAU + 1e-12]
    monotone = bool(np.all(np.diff(upto) <= GAMMA_NOISE))
    ok = drop >= GAMMA_DROP and monotone
    return ok, f"eve(gamma=0)={base:.3f} eve(gamma=0.5)={at_plateau:.3f} drop={drop:.3f} " \
               f"non-increasing within noise: {monotone}"


def _gamma(rep, bundles):
    rows = []
    for b in bundles:
        if len(_sweep_axes(b).get("gamma", [])) < 2:
            continue
        co = _coords(b.rows)
        acc = _lookup(b.rows, "eve", "accuracy", "naive")
        pts = [p for p in _ordered_points(co) if p in acc]
        for p in pts:
            rows.append({"bundle": b.name, "gamma": co[p]["gamma"], "eve_accuracy": acc[p]})
        ok, detail = gamma_check([_f(co[p]["gamma"]) for p in pts], [acc[p] for p in pts])
        rep.checks.append((f"C6 temporal randomization increment [{b.name}]", ok, detail))
    rep.tables["fig16_gamma.csv"] = rows


def write_report(bundle_dirs: Sequence[Union[str, Path]], out_dir: Union[str, Path]) -> Report:
    """Load bundles, write every figure table and ``summary.txt`` into ``out_dir``."""
    bundles = [load_bundle(d) for d in bundle_dirs]
    rep = build_report(bundles)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in FIGURES:
        rows = rep.tables[name]
        cols = list(rows[0].keys()) if rows else ["bundle"]
        (out / name).write_text(csv_text(rows, cols), encoding="utf-8")
    (out / "summary.txt").write_text(rep.summary_text(), encoding="utf-8")
    for w in rep.warnings:
        log.warning(w)
    return rep
