"""Scenario config loading and CSI text export."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import yaml

from ..errors import InvalidArgumentError
from .gestures import GestureGeometry, GestureKind, synthesize_gesture_paths
from .layout import Layout
from .model import CsiTensor, PathComponent, Scenario

CSI_HEADER = ["q", "m", "t", "re_clean", "im_clean", "re_noisy", "im_noisy",
              "re_dyn", "im_dyn", "re_stat", "im_stat"]


@dataclass(frozen=True)
class ScenarioSpec:
    """A loaded scenario plus the run parameters stored next to it."""

    scenario: Scenario
    duration_s: float
    gesture: Optional[GestureKind]
    raw: Dict[str, Any]


def _complex(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, dict):
        return complex(value.get("mag", 1.0) * np.exp(1j * np.deg2rad(value.get("phase_deg", 0.0))))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise InvalidArgumentError(f"cannot read attenuation {value!r}")


def scenario_from_dict(cfg: Dict[str, Any], seed: int = 0) -> ScenarioSpec:
    """Build a scenario from a mapping.

    Recognised keys: ``carrier_freq_hz``, ``antennas``, ``paths``,
    ``noise_std``, ``gesture``, ``duration_s``. A ``layout`` mapping may replace
    the explicit ``paths`` list with the geometric room model.
    """
    duration = float(cfg.get("duration_s", 1.5))
    gesture = cfg.get("gesture")
    gkind = None
    dyn = ()
    if gesture:
        if isinstance(gesture, str):
            gesture = {"kind": gesture}
        gkind = GestureKind.from_name(gesture["kind"])
        geom = GestureGeometry(**{k: gesture[k] for k in
                                  ("bearing_deg", "frame_tilt_deg", "scale_m", "reflectivity")
                                  if k in gesture})
        dyn = synthesize_gesture_paths(gkind, duration, float(gesture.get("range_m", 0.5)),
                                       int(gesture.get("seed", seed)), geom)
    if "layout" in cfg:
        lay = dict(cfg["layout"])
        lay.setdefault("carrier_freq_hz", cfg.get("carrier_freq_hz", 2.4e9))
        lay.setdefault("num_tx", cfg.get("antennas", 8))
        lay.setdefault("noise_std", cfg.get("noise_std", 0.0))
        scen = Layout(**lay).scenario(dyn)
        return ScenarioSpec(scen, duration, gkind, dict(cfg))

    q_count = int(cfg["antennas"])
    per_antenna = [[] for _ in range(q_count)]
    for entry in cfg.get("paths", []):
        p = PathComponent(_complex(entry.get("attenuation", 1.0)),
                          float(entry.get("static_delay_s", 0.0)))
        ants = entry.get("antenna", "all")
        targets = range(q_count) if ants == "all" else [int(a) for a in np.atleast_1d(ants)]
        for q in targets:
            per_antenna[q].append(p)
    for q in range(q_count):
        per_antenna[q].extend(dyn)
    scen = Scenario(float(cfg["carrier_freq_hz"]), q_count, tuple(map(tuple, per_antenna)),
                    float(cfg.get("noise_std", 0.0)))
    return ScenarioSpec(scen, duration, gkind, dict(cfg))


def load_scenario(path: Union[str, Path], seed: int = 0) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise InvalidArgumentError(f"{path}: expected a mapping at top level")
    return scenario_from_dict(cfg.get("scenario", cfg), seed)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csi_csv(csi: CsiTensor, path: Union[str, Path]) -> None:
    """Write one row per (antenna, packet); floats use round-trip repr."""
    if csi.clean.ndim != 2:
        raise InvalidArgumentError("CSV export supports single-subcarrier tensors")
    t = csi.schedule.timestamps
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSI_HEADER)
        for q in range(csi.num_antennas):
            for m in range(csi.num_packets):
                c, n = csi.clean[q, m], csi.noisy[q, m]
                d, s = csi.dynamic_part[q, m], csi.static_part[q, m]
                w.writerow([q, m, _fmt(t[m]), _fmt(c.real), _fmt(c.imag), _fmt(n.real),
                            _fmt(n.imag), _fmt(d.real), _fmt(d.imag), _fmt(s.real),
                            _fmt(s.imag)])


def read_csi_csv(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    """Read an exported CSI table back into (Q, M) arrays."""
    rows = np.genfromtxt(path, delimiter=",", names=True)
    q_count = int(rows["q"].max()) + 1
    m_count = int(rows["m"].max()) + 1

    def grid(re, im):
        return (rows[re] + 1j * rows[im]).reshape(q_count, m_count)
    return {
        "t": rows["t"][:m_count],
        "clean": grid("re_clean", "im_clean"),
        "noisy": grid("re_noisy", "im_noisy"),
        "dynamic": grid("re_dyn", "im_dyn"),
        "static": grid("re_stat", "im_stat"),
    }
