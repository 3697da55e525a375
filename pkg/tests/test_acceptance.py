"""Acceptance checks, one per criterion, each printing a PASS/FAIL line.

The trend criteria (4 to 11) run the shipped experiment configs end to end and
take roughly 25 minutes on one CPU core.
"""
import time

import numpy as np
import pytest

from csicrypt.crypto import decrypt_block_ls, hash_key, mix, sample_psi
from csicrypt.harness.config import load_config
from csicrypt.harness.report import build_report, load_bundle, write_report
from csicrypt.harness.runner import run_experiment
from csicrypt.metrics import (bob_sdnr, comm_snr, envelope_similarity, eve_sdnr, sdnr,
                              sensing_snr)
from csicrypt.optimize import (ObjectiveWeights, finite_difference_gradient, max_block_condition,
                               scalarized_objective)
from csicrypt.sensing import grad_check

from oracles import (block_ls_qr, comm_snr_loop, cosine_envelope_loop, mix_loop, random_csi,
                     sdnr_loop, sensing_snr_loop)

VERDICTS = []


def verdict(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} C{number}: {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- experiment runs

_RUNS = {}


@pytest.fixture(scope="module")
def run_config(repo_root, tmp_path_factory):
    """Run a shipped config once; returns (bundle dir, seconds, ResultBundle)."""

    def go(name, tag=""):
        key = name + tag
        if key not in _RUNS:
            out = tmp_path_factory.mktemp(key)
            cfg = load_config(repo_root / "configs" / f"{name}.yaml").with_overrides(out_dir=out)
            start = time.perf_counter()
            bundle = run_experiment(cfg)
            _RUNS[key] = (out, time.perf_counter() - start, bundle)
        return _RUNS[key]

    return go


def checks_of(*dirs):
    rep = build_report([load_bundle(d) for d in dirs])
    return {name.split(" [")[0].split(" ")[0]: (ok, detail) for name, ok, detail in rep.checks}


# ---------------------------------------------------------------- 1 to 3, 12

def test_c01_round_trip_decryption():
    rng = np.random.default_rng(1)
    q, m, ell = 8, 1500, 30
    start = time.perf_counter()
    worst, conds = 0.0, []
    for i in range(100):
        psi = sample_psi(q, m, 10_000 + i)
        conds.append(max_block_condition(psi.coeffs, ell))
        h = np.repeat(rng.standard_normal((q, m // ell)) + 1j * rng.standard_normal((q, m // ell)),
                      ell, axis=1)
        rec = decrypt_block_ls(mix(h, psi.coeffs), psi, ell)
        worst = max(worst, np.linalg.norm(rec.values - h) / np.linalg.norm(h))
    took = time.perf_counter() - start
    verdict(1, worst < 1e-9 and took < 10.0,
            f"max relative error {worst:.2e} over 100 matrices (max block condition "
            f"{max(conds):.1f}) in {took:.2f} s")


def test_c02_metric_oracles():
    rng = np.random.default_rng(2)
    worst = {}

    def note(name, got, want):
        err = abs(got - want) / max(abs(want), 1e-300)
        worst[name] = max(worst.get(name, 0.0), err)

    for i in range(1000):
        q = int(rng.integers(2, 5))
        m = int(rng.integers(3 * q, 40))
        ell = int(rng.integers(q, 13))
        csi = random_csi(rng, q, m)
        psi = sample_psi(q, m, i)
        x = mix_loop(csi.noisy, psi.coeffs)
        xd = mix_loop(csi.dynamic_part, psi.coeffs)
        worst["mix"] = max(worst.get("mix", 0.0),
                           np.max(np.abs(mix(csi.noisy, psi.coeffs) - x)) / np.max(np.abs(x)))
        note("degeneration", sdnr(csi.clean, csi, csi.dynamic_part).value_linear,
             sensing_snr(csi))
        note("sensing_snr", sensing_snr(csi),
             sensing_snr_loop(csi.dynamic_part, csi.static_part, csi.noise_std))
        note("eve_sdnr", eve_sdnr(csi, psi).value_linear,
             sdnr_loop(x, xd, csi.clean, csi.static_part, csi.dynamic_part, csi.noise_std))
        rec = block_ls_qr(x, psi.coeffs, ell)
        rec_d = block_ls_qr(xd, psi.coeffs, ell)
        note("bob_sdnr", bob_sdnr(csi, psi, ell).value_linear,
             sdnr_loop(rec, rec_d, csi.clean, csi.static_part, csi.dynamic_part,
                       csi.noise_std))
        note("comm_snr", comm_snr(x, csi.noise_std).linear, comm_snr_loop(x, csi.noise_std))
        note("similarity", envelope_similarity(x, xd), cosine_envelope_loop(x, xd))
    top = max(worst.values())
    verdict(2, top < 1e-12, "worst relative error over 1000 instances: "
            + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


def test_c03_gradient_fidelity():
    from test_optimize import make_bundle
    from test_sensing import (DT, FEATS, M, SMALL_F, toy_corpus)
    from csicrypt.sensing import (ClassifierConfig, SubmodelDataset, SubmodelF,
                                  extract_features, train_classifier)
    from csicrypt.timing import regular_schedule

    b = make_bundle(5).with_scales((2.0, 0.5, 0.7))
    d = sample_psi(3, 24, 9).coeffs
    w = ObjectiveWeights(1 / 3, 1 / 3, 1 / 3)
    ana = scalarized_objective(d, b, w).gradient
    fd = finite_difference_gradient(lambda x: scalarized_objective(x, b, w, "none").value, d,
                                    1e-6)
    opt_err = float(np.max(np.abs(ana - fd) / np.maximum(np.maximum(np.abs(ana), np.abs(fd)),
                                                         1e-7)))
    opt_probes = 2 * d.size

    series, labels, keys, plain, _ = toy_corpus()
    sched = regular_schedule(M, DT)
    maps = np.stack([extract_features(x, sched, FEATS).spectrogram for x in plain])
    r = train_classifier(maps, labels, ClassifierConfig(channels=(2, 4), hidden=8, epochs=80,
                                                        lr=1e-2, features=FEATS))
    data = SubmodelDataset(series, keys, labels, [sched] * len(labels),
                           targets=plain - plain.mean(axis=1, keepdims=True))
    nets = [grad_check(r, 100, seed=1),
            grad_check(SubmodelF(M, SMALL_F), 100, seed=2),
            grad_check(SubmodelF(M, SMALL_F), 100, classifier=r, data=data, seed=3)]
    nn_err = max(n.max_rel_error for n in nets)
    ok = opt_err < 1e-4 and opt_probes >= 100 and nn_err < 1e-4 and all(n.probes >= 100
                                                                        for n in nets)
    verdict(3, ok, f"optimizer {opt_err:.1e} over {opt_probes} probes; neural stack "
            f"{nn_err:.1e} over {sum(n.probes for n in nets)} probes")


def test_c12_key_economy():
    psi = sample_psi(8, 1500, 0)
    key = hash_key(psi)
    key_bytes = key.bits.size / 8
    size = len(psi.serialize())
    share = key_bytes / size
    # a half-precision layout is the most compact a receiver could ship instead
    half = 8 * 1500 * 2 * 2
    verdict(12, key.bits.size == 2048 and share < 0.0054 and key_bytes / half < 0.0054,
            f"{key.bits.size}-bit key is {100 * share:.3f}% of the {size}-byte binary64 matrix "
            f"and {100 * key_bytes / half:.3f}% of a {half}-byte half-precision one")


# ---------------------------------------------------------------- trend reproductions

@pytest.mark.slow
def test_c04_eavesdropping_collapse(run_config):
    out, secs, _ = run_config("reference")
    ok, detail = checks_of(out)["C4"]
    verdict(4, ok and secs < 1800, f"{detail}; run {secs / 60:.1f} min")


@pytest.mark.slow
def test_c05_legitimate_sensing(run_config):
    out, _, _ = run_config("reference")
    ok, detail = checks_of(out)["C5"]
    verdict(5, ok, detail)


@pytest.mark.slow
def test_c06_temporal_randomization(run_config):
    out, _, bundle = run_config("gamma")
    ok, detail = checks_of(out)["C6"]
    verdict(6, ok and bundle.ok, detail)


@pytest.mark.slow
def test_c07_sdnr_accuracy_correlation(run_config):
    plain, _, _ = run_config("correlation_passthrough")
    scrambled, _, _ = run_config("correlation_random")
    ok, detail = checks_of(plain)["C7"]
    _, info = checks_of(scrambled)["C7"]
    verdict(7, ok, f"unencrypted {detail}; random matrix (Eve at chance) {info}")


@pytest.mark.slow
def test_c08_optimization_dominance(run_config):
    out, secs, _ = run_config("optimization")
    ok, detail = checks_of(out)["C8"]
    verdict(8, ok and secs < 7200, f"{detail}; run {secs:.0f} s")


@pytest.mark.slow
def test_c09_communication_protection(run_config):
    out, _, _ = run_config("comm")
    ok, detail = checks_of(out)["C9"]
    verdict(9, ok, detail)


@pytest.mark.slow
def test_c10_diversity_futility(run_config):
    out, _, _ = run_config("reference")
    ok, detail = checks_of(out)["C10"]
    verdict(10, ok, detail)


@pytest.mark.slow
def test_c11_determinism(run_config, tmp_path):
    first, _, _ = run_config("reference")
    second, _, _ = run_config("reference", "_rerun")
    write_report([first], tmp_path / "r1")
    write_report([second], tmp_path / "r2")
    pairs = [(first / "results.csv", second / "results.csv")]
    pairs += [(p, tmp_path / "r2" / p.name) for p in sorted((tmp_path / "r1").glob("*.csv"))]
    same = [a.read_bytes() == b.read_bytes() for a, b in pairs]
    verdict(11, all(same), f"{sum(same)}/{len(pairs)} CSV files byte-identical on re-run")
