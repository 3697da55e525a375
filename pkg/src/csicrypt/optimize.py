"""Multi-objective design of the encryption matrix.

The scalarized objective is ``w1*C_bob + w2*SD_bob - w3*SD_eve`` where
``C_bob`` is Bob's per-packet communication SNR, ``SD_bob`` his expected
post-decryption SDNR and ``SD_eve`` the SDNR of the raw mix at Eve. Gradients
are taken in reverse mode with the complex convention
``g = dJ/dRe + 1j * dJ/dIm``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .channel.model import CsiTensor
from .crypto import EncryptionMatrix, block_partition, mix, project_power, total_power
from .errors import DivergedError, InvalidArgumentError

TRACE_HEADER = ["iter", "objective", "viol_power", "viol_eps_c", "viol_eps_sd", "step_norm"]
# Tikhonov floor on each block Gram matrix; keeps the objective finite when a
# block collapses to rank deficiency.
GRAM_RIDGE = 1e-9


@dataclass(frozen=True)
class ObjectiveWeights:
    w1: float
    w2: float
    w3: float

    def __post_init__(self):
        ws = (self.w1, self.w2, self.w3)
        if any(w < 0 or w > 1 for w in ws) or abs(sum(ws) - 1.0) > 1e-9:
            raise InvalidArgumentError(f"weights {ws} are not on the simplex")

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.w1, self.w2, self.w3)


@dataclass(frozen=True)
class QosBounds:
    eps_c: float = 0.0
    eps_sd: float = 0.0

    def __post_init__(self):
        if self.eps_c < 0 or self.eps_sd < 0:
            raise InvalidArgumentError("QoS floors must be >= 0")


@dataclass(frozen=True)
class ScenarioBundle:
    """Channel statistics the transmitter optimizes against.

    All arrays are (Q, M) complex. Eve's arrays are normally the average of the
    CSI fed back by registered receivers.

    Attributes:
        term_scales: Divisors applied to (C_bob, SD_bob, SD_eve) before weighting;
            (1, 1, 1) gives the plain weighted sum.
    """

    bob_clean: np.ndarray
    bob_static: np.ndarray
    bob_dynamic: np.ndarray
    eve_clean: np.ndarray
    eve_static: np.ndarray
    eve_dynamic: np.ndarray
    sigma: float
    block_len: int
    term_scales: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgumentError("bundle sigma must be positive")
        shapes = {np.shape(getattr(self, n)) for n in
                  ("bob_clean", "bob_static", "bob_dynamic", "eve_clean", "eve_static",
                   "eve_dynamic")}
        if len(shapes) != 1:
            raise InvalidArgumentError("bundle arrays must share one shape")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.bob_clean.shape

    @classmethod
    def from_csi(cls, bob: CsiTensor, feedback: Sequence[CsiTensor] = (),
                 eve_oracle: Optional[CsiTensor] = None, block_len: Optional[int] = None,
                 sigma: Optional[float] = None) -> "ScenarioBundle":
        """Build from Bob's CSI and either feedback CSI or an oracle Eve channel."""
        if eve_oracle is not None:
            eves = [eve_oracle]
        elif feedback:
            eves = list(feedback)
        else:
            raise InvalidArgumentError("need feedback CSI or an oracle Eve channel")
        avg = lambda name: np.mean([getattr(e, name) for e in eves], axis=0)
        q_count = bob.num_antennas
        return cls(bob.clean, bob.static_part, bob.dynamic_part, avg("clean"),
                   avg("static_part"), avg("dynamic_part"),
                   float(bob.noise_std if sigma is None else sigma),
                   4 * q_count if block_len is None else int(block_len))

    def with_scales(self, scales: Tuple[float, float, float]) -> "ScenarioBundle":
        return replace(self, term_scales=tuple(float(s) for s in scales))


# ---------------------------------------------------------------- term models

def _abs2(x):
    return x.real ** 2 + x.imag ** 2


def comm_term(d: np.ndarray, b: ScenarioBundle, grad: bool = True):
    """Bob's mean ``|sum_q d h|^2 / sigma^2``."""
    m_count = d.shape[1]
    x = mix(b.bob_clean, d)
    val = float(np.sum(_abs2(x)) / (m_count * b.sigma ** 2))
    if not grad:
        return val, None
    gx = 2.0 * x / (m_count * b.sigma ** 2)
    return val, gx[None, :] * np.conj(b.bob_clean)


def eve_term(d: np.ndarray, b: ScenarioBundle, grad: bool = True):
    """Eve's SDNR on the raw mix, averaged with weight 1/(QM)."""
    q_count, m_count = d.shape
    c = 1.0 / (q_count * m_count)
    x = mix(b.eve_clean, d)
    xd = mix(b.eve_dynamic, d)
    num = _abs2(xd)
    den = _abs2(x[None, :] - b.eve_clean) + _abs2(b.eve_static) + b.sigma ** 2
    val = float(c * np.sum(num[None, :] / den))
    if not grad:
        return val, None
    g_xd = 2.0 * xd * np.sum(c / den, axis=0)
    g_x = np.sum((-c * num[None, :] / den ** 2) * 2.0 * (x[None, :] - b.eve_clean), axis=0)
    return val, g_x[None, :] * np.conj(b.eve_clean) + g_xd[None, :] * np.conj(b.eve_dynamic)


def _bob_blocks(d: np.ndarray, b: ScenarioBundle):
    q_count, m_count = d.shape
    blocks, tail = block_partition(m_count, b.block_len, q_count)
    groups: Dict[int, List[Tuple[int, int, int]]] = {}
    for i, (lo, hi) in enumerate(blocks):
        hi_eval = m_count if (tail and i == len(blocks) - 1) else hi
        groups.setdefault((hi - lo, hi_eval - lo), []).append((lo, hi, hi_eval))
    return groups


def bob_term(d: np.ndarray, b: ScenarioBundle, grad: bool = True):
    """Bob's expected SDNR after block least-squares recovery.

    Within a block the recovered channel is ``P D^H y`` with ``P = (D^H D)^-1``;
    the noise it carries adds ``sigma^2 P_qq`` to the distortion.
    """
    q_count, m_count = d.shape
    c = 1.0 / (q_count * m_count)
    s2 = b.sigma ** 2
    total = 0.0
    g = np.zeros_like(d) if grad else None
    eye = np.eye(q_count)
    for (ls_len, ev_len), members in _bob_blocks(d, b).items():
        los = np.array([m[0] for m in members])
        ls_idx = los[:, None] + np.arange(ls_len)[None, :]  # (nb, L)
        ev_idx = los[:, None] + np.arange(ev_len)[None, :]  # (nb, Le)
        D = np.transpose(d[:, ls_idx], (1, 2, 0))  # (nb, L, Q)
        h_ls = np.transpose(b.bob_clean[:, ls_idx], (1, 2, 0))
        hd_ls = np.transpose(b.bob_dynamic[:, ls_idx], (1, 2, 0))
        y = np.sum(D * h_ls, axis=2)  # (nb, L)
        yd = np.sum(D * hd_ls, axis=2)
        H = np.transpose(b.bob_clean[:, ev_idx], (1, 0, 2))  # (nb, Q, Le)
        HS2 = _abs2(np.transpose(b.bob_static[:, ev_idx], (1, 0, 2)))
        DH = np.conj(np.transpose(D, (0, 2, 1)))  # (nb, Q, L)
        G = DH @ D + GRAM_RIDGE * eye
        P = np.linalg.inv(G)
        v = np.einsum("bql,bl->bq", DH, y)
        vd = np.einsum("bql,bl->bq", DH, yd)
        ht = np.einsum("bqk,bk->bq", P, v)
        htd = np.einsum("bqk,bk->bq", P, vd)
        pdiag = np.real(np.einsum("bqq->bq", P))
        num = _abs2(htd)[:, :, None]
        resid = ht[:, :, None] - H
        den = _abs2(resid) + s2 * pdiag[:, :, None] + HS2 + s2
        total += float(c * np.sum(num / den))
        if not grad:
            continue
        a = c / den
        bb = -c * num / den ** 2
        g_htd = 2.0 * htd * np.sum(a, axis=2)
        g_ht = np.sum(bb * 2.0 * resid, axis=2)
        t = s2 * np.sum(bb, axis=2)
        g_P = g_ht[:, :, None] * np.conj(v)[:, None, :] + g_htd[:, :, None] * np.conj(vd)[:, None, :]
        g_P[:, np.arange(q_count), np.arange(q_count)] += t
        PH = np.conj(np.transpose(P, (0, 2, 1)))
        g_v = np.einsum("bqk,bk->bq", PH, g_ht)
        g_vd = np.einsum("bqk,bk->bq", PH, g_htd)
        g_G = -PH @ g_P @ PH
        g_D = D @ (g_G + np.conj(np.transpose(g_G, (0, 2, 1))))
        g_D += y[:, :, None] * np.conj(g_v)[:, None, :] + yd[:, :, None] * np.conj(g_vd)[:, None, :]
        g_y = np.einsum("blq,bq->bl", D, g_v)
        g_yd = np.einsum("blq,bq->bl", D, g_vd)
        g_D += g_y[:, :, None] * np.conj(h_ls) + g_yd[:, :, None] * np.conj(hd_ls)
        for k, lo in enumerate(los):
            g[:, lo:lo + ls_len] += g_D[k].T
    return total, g


@dataclass(frozen=True)
class ObjectiveValue:
    """Objective value, its three raw components and the gradient."""

    value: float
    comm_bob: float
    sdnr_bob: float
    sdnr_eve: float
    gradient: Optional[np.ndarray]


def _coeffs(psi) -> np.ndarray:
    return psi.coeffs if isinstance(psi, EncryptionMatrix) else np.asarray(psi, complex)


def scalarized_objective(psi: Union[EncryptionMatrix, np.ndarray], bundle: ScenarioBundle,
                         weights: ObjectiveWeights, gradient: str = "analytic",
                         fd_step: float = 1e-6) -> ObjectiveValue:
    """Weighted objective and its gradient in the 2*Q*M real parameters.

    Args:
        psi: Matrix or raw (Q, M) coefficients (unprojected values allowed).
        bundle: Channel statistics.
        weights: Simplex weights.
        gradient: ``"analytic"``, ``"fd"`` (central differences) or ``"none"``.
        fd_step: Step for the finite-difference fallback.
    """
    d = _coeffs(psi)
    if d.shape != bundle.shape:
        raise InvalidArgumentError(f"Psi shape {d.shape} does not match bundle {bundle.shape}")
    if not isinstance(weights, ObjectiveWeights):
        raise InvalidArgumentError("weights must be ObjectiveWeights")
    w = weights.as_tuple()
    s = bundle.term_scales
    want = gradient == "analytic"
    comps = []
    grads = []
    for term, wi, si in zip((comm_term, bob_term, eve_term), w, s):
        # skipped terms still report their value, without gradient work
        val, g = term(d, bundle, grad=want and wi != 0)
        comps.append(val)
        grads.append(g)
    sign = (1.0, 1.0, -1.0)
    value = float(sum(sg * wi * v / si for sg, wi, v, si in zip(sign, w, comps, s)))
    grad = None
    if want:
        grad = np.zeros_like(d)
        for sg, wi, g, si in zip(sign, w, grads, s):
            if wi != 0:
                grad += (sg * wi / si) * g
    elif gradient == "fd":
        grad = finite_difference_gradient(
            lambda x: scalarized_objective(x, bundle, weights, "none").value, d, fd_step)
    elif gradient != "none":
        raise InvalidArgumentError(f"unknown gradient mode {gradient!r}")
    return ObjectiveValue(value, comps[0], comps[1], comps[2], grad)


def finite_difference_gradient(fn, d: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central differences on every real and imaginary coordinate."""
    d = np.array(d, dtype=complex)
    g = np.zeros_like(d)
    for idx in np.ndindex(d.shape):
        for unit in (1.0, 1j):
            dp = d.copy()
            dm = d.copy()
            dp[idx] += unit * step
            dm[idx] -= unit * step
            deriv = (fn(dp) - fn(dm)) / (2 * step)
            g[idx] += deriv * unit
    return g


# ---------------------------------------------------------------- optimizer

@dataclass(frozen=True)
class OptimizerParams:
    """Optimizer settings.

    ``max_block_condition`` (optional) rejects steps that make any decryption
    block worse conditioned than this, or than the starting Psi if that is
    already above it. The scalarized objective alone tolerates a few nearly
    singular blocks, which ruin keyed channel recovery in those blocks.
    """

    max_iters: int = 2000
    step: float = 1e-2
    penalty_weight: float = 10.0
    tol: float = 1e-6
    patience: int = 5
    max_backtracks: int = 30
    max_block_condition: Optional[float] = None


def max_block_condition(d: np.ndarray, block_len: int) -> float:
    """Largest 2-norm condition number over the least-squares decryption blocks."""
    q_count, m_count = d.shape
    blocks, _ = block_partition(m_count, block_len, q_count)
    worst = 0.0
    by_len: Dict[int, List[int]] = {}
    for lo, hi in blocks:
        by_len.setdefault(hi - lo, []).append(lo)
    for n, los in by_len.items():
        idx = np.array(los)[:, None] + np.arange(n)[None, :]
        sv = np.linalg.svd(np.transpose(d[:, idx], (1, 2, 0)), compute_uv=False)
        with np.errstate(divide="ignore"):
            worst = max(worst, float(np.max(np.where(sv[:, -1] > 0, sv[:, 0] / sv[:, -1], np.inf))))
    return worst


@dataclass
class OptimizationTrace:
    """Iteration log of one optimization run.

    ``records`` rows follow TRACE_HEADER. ``burn_in`` is the first iteration
    from which the QoS floors held; recorded objectives never decrease after it.
    """

    records: List[Tuple[int, float, float, float, float, float]]
    psi: EncryptionMatrix
    converged: bool
    iterations: int
    feasible: bool
    burn_in: int
    report: str = ""
    final: Optional[ObjectiveValue] = None

    def objectives(self) -> np.ndarray:
        return np.array([r[1] for r in self.records])

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for r in self.records:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])


def _violations(ov: ObjectiveValue, d: np.ndarray, budget: float, bounds: QosBounds):
    return (max(0.0, total_power(d) - budget), max(0.0, bounds.eps_c - ov.comm_bob),
            max(0.0, bounds.eps_sd - ov.sdnr_bob))


def max_comm_snr(bundle: ScenarioBundle, budget: float) -> float:
    """Upper bound on Bob's comm SNR: all power matched to the best packet."""
    m_count = bundle.shape[1]
    best = float(np.max(np.sum(_abs2(bundle.bob_clean), axis=0)))
    return budget * best / (m_count * bundle.sigma ** 2)


def optimize_psi(init: EncryptionMatrix, bundle: ScenarioBundle, weights: ObjectiveWeights,
                 bounds: QosBounds = QosBounds(), params: OptimizerParams = OptimizerParams()
                 ) -> OptimizationTrace:
    """Augmented-Lagrangian projected ascent with a monotone-accept rule.

    Each iteration takes a normalized ascent step on the Lagrangian, projects
    onto the power ball and backtracks until the step is acceptable. While the
    QoS floors are violated a step is acceptable when the Lagrangian merit
    improves; once they hold, only steps that keep them and do not lower the
    objective are taken. Multipliers follow the usual first-order update and
    the penalty doubles when violation stalls.
    """
    budget = init.power_budget
    d = np.array(init.coeffs)
    ov = scalarized_objective(d, bundle, weights)
    if not np.isfinite(ov.value) or not np.all(np.isfinite(ov.gradient)):
        raise DivergedError("objective is not finite at the initial point")

    if bounds.eps_c > max_comm_snr(bundle, budget):
        return OptimizationTrace([(0, ov.value, *_violations(ov, d, budget, bounds), 0.0)],
                                 init, False, 0, False, -1,
                                 "infeasible: eps_c exceeds the full-power comm SNR bound", ov)

    cond_cap = params.max_block_condition
    if cond_cap is not None:
        # never tighter than the starting point, so the initial Psi stays admissible
        cond_cap = max(cond_cap, max_block_condition(d, bundle.block_len))
    rho = params.penalty_weight
    lam = np.zeros(2)
    eps = np.array([bounds.eps_c, bounds.eps_sd])
    qos_tol = lambda e: params.tol * max(1.0, e)

    def qos_values(o):
        return np.array([o.comm_bob, o.sdnr_bob])

    def qos_ok(o):
        g = qos_values(o)
        return bool(np.all(eps - g <= np.array([qos_tol(e) for e in eps])))

    def merit(o):
        g = qos_values(o)
        shift = np.maximum(0.0, lam - rho * (g - eps))
        return o.value - float(np.sum(shift ** 2 - lam ** 2)) / (2 * rho)

    def merit_grad(o, dd):
        g = qos_values(o)
        shift = np.maximum(0.0, lam - rho * (g - eps))
        out = o.gradient.copy()
        if shift[0] > 0:
            out += shift[0] * comm_term(dd, bundle)[1] / 1.0
        if shift[1] > 0:
            out += shift[1] * bob_term(dd, bundle)[1]
        return out

    records = [(0, ov.value, *_violations(ov, d, budget, bounds), 0.0)]
    burn_in = 0 if qos_ok(ov) else -1
    alpha = params.step
    converged = False
    quiet = 0
    best_viol = np.inf
    stall = 0
    it = 0
    for it in range(1, params.max_iters + 1):
        grad = merit_grad(ov, d)
        gnorm = np.linalg.norm(grad)
        if gnorm == 0:
            converged = True
            break
        scale = np.linalg.norm(d) if np.linalg.norm(d) > 0 else np.sqrt(budget)
        direction = grad / gnorm * scale
        feasible_now = burn_in >= 0
        accepted = None
        for _ in range(params.max_backtracks):
            trial = project_power(d + alpha * direction, budget)
            tov = scalarized_objective(trial, bundle, weights)
            if not np.isfinite(tov.value) or (
                    cond_cap is not None and max_block_condition(trial, bundle.block_len) > cond_cap):
                alpha *= 0.5
                continue
            if feasible_now:
                ok = tov.value >= ov.value and qos_ok(tov)
            else:
                ok = merit(tov) > merit(ov)
            if ok:
                accepted = (trial, tov)
                break
            alpha *= 0.5
        if accepted is None:
            converged = True
            break
        trial, tov = accepted
        step_norm = float(np.linalg.norm(trial - d))
        rel = abs(tov.value - ov.value) / max(1.0, abs(ov.value))
        d, ov = trial, tov
        alpha = min(alpha * 1.5, 1.0)
        g = qos_values(ov)
        lam = np.maximum(0.0, lam - rho * (g - eps))
        viol = float(np.sum(np.maximum(0.0, eps - g)))
        if burn_in < 0:
            if qos_ok(ov):
                burn_in = it
            elif viol < best_viol * 0.99:
                best_viol, stall = viol, 0
            else:
                stall += 1
                if stall >= 10:
                    rho *= 2.0
                    stall = 0
        records.append((it, ov.value, *_violations(ov, d, budget, bounds), step_norm))
        quiet = quiet + 1 if rel < params.tol else 0
        if quiet >= params.patience:
            converged = True
            break
    feasible = qos_ok(ov)
    report = "" if feasible else "infeasible: QoS floors not met within tolerance"
    psi = EncryptionMatrix(d, budget)
    return OptimizationTrace(records, psi, converged, it, feasible, burn_in, report, ov)


@dataclass(frozen=True)
class ParetoPoint:
    weights: ObjectiveWeights
    objectives: Tuple[float, float, float]  # (C_bob, SD_bob, SD_eve)
    psi: EncryptionMatrix
    grid_index: int


@dataclass
class ParetoResult:
    points: List[ParetoPoint]
    pruned: List[ParetoPoint]
    errors: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def pruned_count(self) -> int:
        return len(self.pruned)


def _dominates(a: Tuple[float, float, float], b: Tuple[float, float, float]) -> bool:
    # maximize C and SD_bob, minimize SD_eve
    av = (a[0], a[1], -a[2])
    bv = (b[0], b[1], -b[2])
    return all(x >= y for x, y in zip(av, bv)) and any(x > y for x, y in zip(av, bv))


def pareto_sweep(weight_grid: Sequence[ObjectiveWeights], bundle: ScenarioBundle,
                 init: EncryptionMatrix, bounds: QosBounds = QosBounds(),
                 params: OptimizerParams = OptimizerParams()) -> ParetoResult:
    """One optimization per weight vector, then dominance pruning.

    Points are returned sorted by w3. Failures are recorded with their grid
    index rather than aborting the sweep.
    """
    if not weight_grid:
        raise InvalidArgumentError("weight grid is empty")
    found: List[ParetoPoint] = []
    errors = []
    for i, w in enumerate(weight_grid):
        try:
            tr = optimize_psi(init, bundle, w, bounds, params)
        except Exception as exc:  # noqa: BLE001 - recorded per grid point
            errors.append((i, f"{type(exc).__name__}: {exc}"))
            continue
        f = tr.final
        found.append(ParetoPoint(w, (f.comm_bob, f.sdnr_bob, f.sdnr_eve), tr.psi, i))
    keep, pruned = [], []
    for p in found:
        if any(_dominates(o.objectives, p.objectives) for o in found if o is not p):
            pruned.append(p)
        else:
            keep.append(p)
    keep.sort(key=lambda p: (p.weights.w3, p.grid_index))
    return ParetoResult(keep, pruned, errors)
