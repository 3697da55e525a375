import copy
import json

import numpy as np
import pytest
import yaml

from csicrypt.cli import EXIT_OK, EXIT_POINT_ERRORS, EXIT_USAGE, main
from csicrypt.crypto import sample_psi
from csicrypt.errors import InvalidArgumentError
from csicrypt.harness.attacks import AttackKind, AttackStrategy, combine_unkeyed
from csicrypt.harness.config import config_from_dict, load_config
from csicrypt.harness.report import gamma_check, spearman_pairs, write_report
from csicrypt.harness.runner import run_experiment, sweep_points

TINY = {
    "name": "tiny", "seed": 0,
    "scenario": {"samples_per_class": 4, "num_packets": 400},
    "psi": {"kind": "random", "seed": 1000, "family": 2},
    "roles": ["clean", "eve", "bob_s", "bob_s_wrong_key"],
    "attacks": ["naive"], "attack_trials": 4,
    "classifier": {"epochs": 2, "channels": [2, 4], "hidden": 8},
    "submodel": {"num_experts": 2, "embed_dim": 16, "gate_segments": 4, "gate_width": 8,
                 "gate_dense": [8], "encoder_channels": [2, 3, 3, 4],
                 "decoder_channels": [3, 3, 2, 2, 2], "subspace_rank": 2},
    "training": {"epochs": 1, "batch_size": 8},
}


def tiny(tmp_path, name="out", **changes):
    raw = copy.deepcopy(TINY)
    raw.update(changes)
    raw["out"] = str(tmp_path / name)
    return raw


def write_yaml(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


class TestConfig:
    def test_repo_configs_load(self, repo_root):
        for path in sorted((repo_root / "configs").glob("*.yaml")):
            assert load_config(path).name == path.stem

    @pytest.mark.parametrize("change", [
        {"colour": "red"},
        {"roles": ["mallory"]},
        {"sweep": {"altitude": [1, 2]}},
        {"sweep": {"gamma": []}},
        {"gamma": 0.95},
        {"sweep": {"packet_rate": [0]}},
        {"scenario": {"walls": 3}},
        {"psi": {"kind": "file", "paths": ["missing.psi"]}},
        {"psi": {"kind": "quantum"}},
        {"attacks": ["telepathy"]},
        {"attack_trials": 0},
        {"studies": ["vibes"]},
    ])
    def test_invalid_configs_rejected(self, change, tmp_path):
        with pytest.raises(InvalidArgumentError):
            config_from_dict(tiny(tmp_path, **change), tmp_path)

    def test_range_axis_inclusive(self, tmp_path):
        cfg = config_from_dict(tiny(tmp_path, sweep={"distance_m": {"start": 1, "stop": 2,
                                                                    "step": 0.25}}))
        assert cfg.sweep["distance_m"] == (1.0, 1.25, 1.5, 1.75, 2.0)

    def test_sweep_is_cartesian(self, tmp_path):
        cfg = config_from_dict(tiny(tmp_path, sweep={"gamma": [0, 0.5], "experts": [2, 3, 4]}))
        pts = sweep_points(cfg)
        assert len(pts) == 6
        assert [p.index for p in pts] == list(range(6))

    def test_file_psi_resolves_relative_paths(self, tmp_path):
        sample_psi(8, 400, 0).save(tmp_path / "a.psi")
        cfg = config_from_dict(tiny(tmp_path, psi={"kind": "file", "paths": ["a.psi"]}),
                               tmp_path)
        assert cfg.psi.paths == (str(tmp_path / "a.psi"),)

    def test_cli_overrides(self, tmp_path):
        cfg = config_from_dict(tiny(tmp_path)).with_overrides(seed=7, out_dir="elsewhere")
        assert cfg.seed == 7 and cfg.out_dir == "elsewhere"


class TestAttacks:
    def test_parse(self):
        assert AttackStrategy.parse("naive") == AttackStrategy.naive()
        assert AttackStrategy.parse("virtual_antennas:80").count == 80
        assert AttackStrategy.parse("multi_antenna:4").kind is AttackKind.MultiAntennaNoKey

    @pytest.mark.parametrize("text", ["virtual_antennas:81", "multi_antenna:0", "naive:2",
                                      "sonar"])
    def test_rejected(self, text):
        with pytest.raises(InvalidArgumentError):
            AttackStrategy.parse(text)

    def test_label_round_trip(self):
        for s in (AttackStrategy.naive(), AttackStrategy.virtual(5)):
            assert AttackStrategy.parse(s.label) == s

    def test_naive_ignores_count_override(self):
        assert AttackStrategy.naive().with_count(8).count == 1


def test_spearman_and_gamma_helpers():
    assert spearman_pairs([1, 2, 3, 4], [0.1, 0.2, 0.3, 0.4]) == pytest.approx(1.0)
    ok, _ = gamma_check([0.0, 0.5], [0.5, 0.3])
    assert ok
    ok, _ = gamma_check([0.0, 0.5], [0.5, 0.49])
    assert not ok


class TestRunner:
    def test_writes_bundle(self, tmp_path):
        b = run_experiment(config_from_dict(tiny(tmp_path)))
        assert b.ok
        text = (tmp_path / "out" / "results.csv").read_text()
        roles = {line.split(",")[6] for line in text.splitlines()[1:]}
        assert {"clean", "eve", "bob_s", "bob_s_wrong_key", "attack"} <= roles
        man = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert man["errors"] == [] and "results.csv" in man["files"]

    def test_rerun_is_byte_identical(self, tmp_path):
        run_experiment(config_from_dict(tiny(tmp_path, "a")))
        run_experiment(config_from_dict(tiny(tmp_path, "b")))
        assert (tmp_path / "a" / "results.csv").read_bytes() == \
            (tmp_path / "b" / "results.csv").read_bytes()

    def test_failed_point_is_contained(self, tmp_path):
        # 5 packets per second leaves too few packets for one STFT window
        cfg = config_from_dict(tiny(tmp_path, sweep={"packet_rate": [1000, 5]}))
        b = run_experiment(cfg)
        assert not b.ok
        assert [e["point"] for e in b.errors] == [1]
        lines = (tmp_path / "out" / "results.csv").read_text().splitlines()[1:]
        status = {(ln.split(",")[0], ln.split(",")[-1]) for ln in lines}
        assert ("0", "ok") in status and ("1", "error") in status
        assert sum(ln.endswith(",error") for ln in lines) == 1


class TestCli:
    def test_evaluate_exit_codes(self, tmp_path, capsys):
        good = write_yaml(tmp_path, tiny(tmp_path, "g"), "good.yaml")
        assert main(["evaluate", "--config", str(good)]) == EXIT_OK
        bad = write_yaml(tmp_path, tiny(tmp_path, "b", sweep={"packet_rate": [1000, 5]}),
                         "bad.yaml")
        assert main(["evaluate", "--config", str(bad)]) == EXIT_POINT_ERRORS
        assert "error at" in capsys.readouterr().err

    def test_usage_error_exit(self, tmp_path):
        cfg = write_yaml(tmp_path, tiny(tmp_path, gamma=2.0))
        assert main(["evaluate", "--config", str(cfg)]) == EXIT_USAGE

    def test_global_flags_either_side(self, tmp_path):
        cfg = write_yaml(tmp_path, tiny(tmp_path))
        out = tmp_path / "flag_out"
        assert main(["--seed", "3", "attack", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        man = json.loads((out / "manifest.json").read_text())
        assert man["seed"] == 3

    def test_simulate_writes_dataset(self, tmp_path):
        cfg = write_yaml(tmp_path, tiny(tmp_path, "sim"))
        assert main(["simulate", "--config", str(cfg)]) == EXIT_OK
        lines = (tmp_path / "sim" / "dataset.csv").read_text().splitlines()
        assert lines[0] == "csi_file,psi_id,key_hex,label"
        assert len(lines) == 1 + 8 * 1  # one held-out instance per class
        assert len(list((tmp_path / "sim" / "psi").glob("*.psi"))) == 2

    def test_train_then_evaluate_with_checkpoints(self, tmp_path):
        cfg = write_yaml(tmp_path, tiny(tmp_path, "m"))
        assert main(["train-submodel", "--config", str(cfg)]) == EXIT_OK
        m = tmp_path / "m"
        assert main(["evaluate", "--config", str(cfg), "--out", str(tmp_path / "e"),
                     "--classifier", str(m / "classifier.mcnn"),
                     "--submodel", str(m / "submodel.mcnn")]) == EXIT_OK
        assert main(["train-classifier", "--config", str(cfg), "--out",
                     str(tmp_path / "c")]) == EXIT_OK
        assert (tmp_path / "c" / "classifier_history.csv").is_file()

    def test_optimize_saves_family(self, tmp_path):
        raw = tiny(tmp_path, "o", psi={"kind": "optimized", "family": 1, "max_iters": 3})
        raw["comm"] = {"seeds": [0], "payload_len": 10}
        cfg = write_yaml(tmp_path, raw)
        assert main(["optimize", "--config", str(cfg)]) == EXIT_OK
        assert (tmp_path / "o" / "psi_family.csv").read_text().startswith("psi_id,file,key_hex")

    def test_report_writes_summary(self, tmp_path, capsys):
        cfg = write_yaml(tmp_path, tiny(tmp_path, "r"))
        main(["evaluate", "--config", str(cfg)])
        assert main(["report", str(tmp_path / "r"), "--out", str(tmp_path / "rep")]) == EXIT_OK
        assert (tmp_path / "rep" / "summary.txt").is_file()

    def test_report_of_bundle_without_rows_warns(self, tmp_path):
        run_experiment(config_from_dict(tiny(tmp_path, "none", studies=[])))
        rep = write_report([tmp_path / "none"], tmp_path / "rep")
        assert any("empty bundle" in w for w in rep.warnings)

    def test_missing_config(self, tmp_path):
        assert main(["evaluate", "--config", str(tmp_path / "nope.yaml")]) == EXIT_USAGE


class TestCombine:
    def test_single_observation_unchanged(self, rng):
        from csicrypt.crypto import EncryptedCsiSeries
        from csicrypt.timing import regular_schedule

        obs = EncryptedCsiSeries(rng.standard_normal(20) + 0j, regular_schedule(20, 1e-3))
        assert combine_unkeyed([obs]) is obs

    def test_rank_one_recovers_first_antenna(self, rng):
        from csicrypt.crypto import EncryptedCsiSeries
        from csicrypt.timing import regular_schedule

        sched = regular_schedule(30, 1e-3)
        base = rng.standard_normal(30) + 1j * rng.standard_normal(30)
        gains = (1.0, 0.5j, -2.0)
        out = combine_unkeyed([EncryptedCsiSeries(g * base, sched) for g in gains])
        assert np.allclose(out.values, base)

    def test_empty_and_ragged(self, rng):
        from csicrypt.crypto import EncryptedCsiSeries
        from csicrypt.timing import regular_schedule

        with pytest.raises(InvalidArgumentError):
            combine_unkeyed([])
        a = EncryptedCsiSeries(np.ones(5), regular_schedule(5, 1e-3))
        b = EncryptedCsiSeries(np.ones(6), regular_schedule(6, 1e-3))
        with pytest.raises(InvalidArgumentError):
            combine_unkeyed([a, b])


def test_passthrough_eve_matches_clean(tmp_path):
    b = run_experiment(config_from_dict(tiny(tmp_path, psi={"kind": "passthrough"},
                                             roles=["clean", "eve"])))
    acc = {(r["role"], r["metric"]): r["value"] for r in b.rows}
    assert acc[("eve", "accuracy")] == acc[("clean", "accuracy")]
