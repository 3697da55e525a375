import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csicrypt.channel import (GESTURES, CsiTensor, GestureKind, Layout, PathComponent, PathKind,
                              Scenario, add_noise, generate_csi, load_scenario, read_csi_csv,
                              synthesize_gesture_paths, write_csi_csv)
from csicrypt.channel.gestures import ConstantVelocityDelay
from csicrypt.errors import InvalidArgumentError
from csicrypt.timing import MAX_GAMMA, randomize_schedule, regular_schedule


def one_path(q=1, noise=0.0):
    p = PathComponent(1.0 + 0j, 0.0)
    return Scenario(2.4e9, q, tuple((p,) for _ in range(q)), noise)


class TestPaths:
    def test_gain_above_one_rejected(self):
        with pytest.raises(InvalidArgumentError):
            PathComponent(1.5 + 0j, 0.0)

    def test_negative_delay_rejected(self):
        with pytest.raises(InvalidArgumentError):
            PathComponent(0.5 + 0j, -1e-9)

    def test_dynamic_needs_function(self):
        with pytest.raises(InvalidArgumentError):
            PathComponent(0.5 + 0j, 0.0, PathKind.DYNAMIC)
        with pytest.raises(InvalidArgumentError):
            PathComponent(0.5 + 0j, 0.0, PathKind.STATIC, lambda t: t)

    def test_antenna_without_static_path(self):
        dyn = PathComponent(0.1 + 0j, 0.0, PathKind.DYNAMIC, ConstantVelocityDelay(1.0))
        with pytest.raises(InvalidArgumentError):
            Scenario(2.4e9, 1, ((dyn,),), 0.0)


class TestGenerate:
    def test_single_unit_path_is_all_ones(self):
        csi = generate_csi(one_path(2), 50, regular_schedule(50, 1e-3), 0)
        assert np.array_equal(csi.clean, np.ones((2, 50)))
        assert np.array_equal(csi.noisy, csi.clean)

    def test_clean_is_static_plus_dynamic(self):
        lay = Layout()
        paths = synthesize_gesture_paths(GestureKind.Clap, 0.5, 0.5, 3)
        csi = generate_csi(lay.scenario(paths), 500, regular_schedule(500, 1e-3), 0)
        assert np.array_equal(csi.clean, csi.static_part + csi.dynamic_part)
        assert np.any(csi.dynamic_part != 0)

    def test_constant_velocity_doppler(self):
        v = 1.0
        path = PathComponent(0.5 + 0j, 0.0, PathKind.DYNAMIC, ConstantVelocityDelay(v))
        scen = Scenario(2.4e9, 1, ((PathComponent(0.1 + 0j, 0.0), path),), 0.0)
        csi = generate_csi(scen, 400, regular_schedule(400, 1e-4), 0)
        phase = np.unwrap(np.angle(csi.dynamic_part[0]))
        freq = -np.polyfit(np.arange(400) * 1e-4, phase, 1)[0] / (2 * np.pi)
        wavelength = 299_792_458.0 / 2.4e9
        # the delay function carries the round trip, so the shift is 2v/lambda
        assert abs(freq - 2 * v / wavelength) < 1e-6 * freq

    def test_schedule_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            generate_csi(one_path(), 10, regular_schedule(9, 1e-3), 0)

    def test_noise_energy_matches_sigma(self):
        csi = add_noise(generate_csi(one_path(1), 200_000, regular_schedule(200_000, 1e-3), 0),
                        0.3, 7)
        energy = np.mean(np.abs(csi.noisy - csi.clean) ** 2)
        assert abs(energy / 0.09 - 1) < 0.02

    def test_noise_is_seeded(self):
        base = generate_csi(one_path(2), 30, regular_schedule(30, 1e-3), 0)
        a = add_noise(base, 0.1, 5)
        b = add_noise(base, 0.1, 5)
        assert np.array_equal(a.noisy, b.noisy)

    def test_subcarrier_axis(self):
        scen = Scenario(2.4e9, 2, one_path(2).paths_per_antenna, 0.0, num_subcarriers=4)
        csi = generate_csi(scen, 10, regular_schedule(10, 1e-3), 0)
        assert csi.clean.shape == (2, 10, 4)

    def test_tensor_is_read_only(self):
        csi = generate_csi(one_path(), 5, regular_schedule(5, 1e-3), 0)
        with pytest.raises(ValueError):
            csi.clean[0, 0] = 2.0


class TestGestures:
    def test_classes_are_distinct(self):
        lay = Layout()
        sched = regular_schedule(1500, 1e-3)
        series = []
        for g in GESTURES:
            paths = synthesize_gesture_paths(g, 1.5, 0.5, 1)
            series.append(generate_csi(lay.scenario(paths), 1500, sched, 0).dynamic_part[0])
        for i in range(len(series)):
            for j in range(i + 1, len(series)):
                assert not np.allclose(series[i], series[j])

    def test_repeatable(self):
        a = synthesize_gesture_paths(GestureKind.Circle, 1.5, 0.5, 9)
        b = synthesize_gesture_paths(GestureKind.Circle, 1.5, 0.5, 9)
        t = np.linspace(0, 1.5, 100)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.dynamic_delay(t), pb.dynamic_delay(t))

    def test_from_name(self):
        assert GestureKind.from_name("PP") is GestureKind.PushPull
        with pytest.raises(InvalidArgumentError):
            GestureKind.from_name("wave")


class TestIo:
    def test_csv_round_trip(self, tmp_path):
        lay = Layout(num_tx=2, noise_std=0.01)
        paths = synthesize_gesture_paths(GestureKind.Tap, 0.05, 0.5, 2)
        csi = generate_csi(lay.scenario(paths), 50, regular_schedule(50, 1e-3), 3)
        write_csi_csv(csi, tmp_path / "c.csv")
        back = read_csi_csv(tmp_path / "c.csv")
        assert np.array_equal(back["noisy"], csi.noisy)
        assert np.array_equal(back["dynamic"], csi.dynamic_part)

    def test_scenario_yaml(self, tmp_path):
        (tmp_path / "s.yaml").write_text(
            "carrier_freq_hz: 2.4e9\nantennas: 2\nnoise_std: 0.0\n"
            "paths:\n  - {attenuation: 1.0, static_delay_s: 0.0}\n")
        spec = load_scenario(tmp_path / "s.yaml")
        csi = generate_csi(spec.scenario, 4, regular_schedule(4, 1e-3), 0)
        assert np.array_equal(csi.clean, np.ones((2, 4)))


class TestTiming:
    def test_gamma_zero_is_regular(self):
        s = randomize_schedule(20, 1e-3, 0.0, 1)
        assert s.is_regular
        assert np.allclose(s.timestamps, np.arange(20) * 1e-3)

    def test_gamma_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            randomize_schedule(10, 1e-3, MAX_GAMMA + 0.01, 0)
        with pytest.raises(InvalidArgumentError):
            randomize_schedule(10, 1e-3, -0.1, 0)

    def test_as_regular(self):
        s = randomize_schedule(20, 2e-3, 0.4, 1)
        assert s.as_regular().is_regular
        assert s.as_regular().base_interval_s == 2e-3


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 400), st.floats(0.0, MAX_GAMMA), st.integers(0, 2 ** 31))
def test_schedule_bounded_and_increasing(m, gamma, seed):
    s = randomize_schedule(m, 1e-3, gamma, seed)
    assert np.all(np.abs(s.betas) <= gamma)
    assert np.all(np.diff(s.timestamps) > 0)
    assert len(s) == m
