import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csicrypt.channel.model import CsiTensor, add_noise
from csicrypt.crypto import EncryptionMatrix, mix, sample_psi
from csicrypt.errors import InvalidArgumentError, UndefinedSimilarityError
from csicrypt.metrics import (SATURATED_DB, bob_sdnr, comm_snr, envelope_similarity, eve_sdnr,
                              score_bits, score_task, sdnr, sensing_snr, to_db)
from csicrypt.timing import regular_schedule

from oracles import (block_ls_normal_equations, comm_snr_loop, cosine_envelope_loop, mix_loop,
                     random_csi, sdnr_loop, sensing_snr_loop)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_eve_sdnr_matches_loop(rng):
    csi = random_csi(rng, 3, 20)
    psi = sample_psi(3, 20, 1)
    x = mix_loop(csi.noisy, psi.coeffs)
    xd = mix_loop(csi.dynamic_part, psi.coeffs)
    want = sdnr_loop(x, xd, csi.clean, csi.static_part, csi.dynamic_part, csi.noise_std)
    assert rel(eve_sdnr(csi, psi).value_linear, want) < 1e-12


def test_bob_sdnr_matches_loop(rng):
    csi = random_csi(rng, 3, 24)
    psi = sample_psi(3, 24, 2)
    rec = block_ls_normal_equations(mix_loop(csi.noisy, psi.coeffs), psi.coeffs, 12)
    rec_d = block_ls_normal_equations(mix_loop(csi.dynamic_part, psi.coeffs), psi.coeffs, 12)
    want = sdnr_loop(rec, rec_d, csi.clean, csi.static_part, csi.dynamic_part, csi.noise_std)
    # normal equations lose a few digits against the SVD solver
    assert rel(bob_sdnr(csi, psi).value_linear, want) < 1e-9


def test_degenerates_to_sensing_snr(rng):
    csi = random_csi(rng, 4, 30)
    got = sdnr(csi.clean, csi, csi.dynamic_part).value_linear
    assert rel(got, sensing_snr(csi)) < 1e-12
    assert sdnr(csi.clean, csi, csi.dynamic_part).per_term_breakdown["distortion_energy"] == 0.0


def test_sensing_snr_matches_loop(rng):
    csi = random_csi(rng, 2, 15)
    want = sensing_snr_loop(csi.dynamic_part, csi.static_part, csi.noise_std)
    assert rel(sensing_snr(csi), want) < 1e-12


def test_sdnr_shape_errors(rng):
    csi = random_csi(rng, 2, 10)
    with pytest.raises(InvalidArgumentError):
        sdnr(np.ones(9, complex), csi, np.ones(9, complex))
    with pytest.raises(InvalidArgumentError):
        sdnr(np.ones(10, complex), csi, np.ones(9, complex))


def test_zero_denominator_saturates():
    z = np.zeros((1, 3), complex)
    one = np.ones((1, 3), complex)
    csi = CsiTensor(one, z, one, one, regular_schedule(3, 1e-3), 0.0)
    rep = sdnr(one[0], csi, one[0])
    assert rep.value_db == SATURATED_DB
    assert to_db(0.0) == -SATURATED_DB


class TestCommSnr:
    def test_all_ones_is_zero_db(self):
        assert abs(comm_snr(np.ones(10, complex), 1.0).db) < 1e-12

    def test_doubling_adds_six_db(self, rng):
        x = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        d = comm_snr(2 * x, 0.3).db - comm_snr(x, 0.3).db
        assert abs(d - 20 * np.log10(2)) < 1e-12

    def test_matches_loop(self, rng):
        x = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        assert rel(comm_snr(x, 0.7).linear, comm_snr_loop(x, 0.7)) < 1e-12

    def test_sigma_must_be_positive(self):
        with pytest.raises(InvalidArgumentError):
            comm_snr(np.ones(3, complex), 0.0)


class TestSimilarity:
    def test_identity_and_scale(self, rng):
        a = rng.standard_normal(50) + 1j * rng.standard_normal(50)
        assert abs(envelope_similarity(a, a) - 1) < 1e-12
        assert abs(envelope_similarity(a, 2 * a) - 1) < 1e-12

    def test_matches_loop(self, rng):
        a = rng.standard_normal(40) + 1j * rng.standard_normal(40)
        b = rng.standard_normal(40) + 1j * rng.standard_normal(40)
        assert abs(envelope_similarity(a, b) - cosine_envelope_loop(a, b)) < 1e-12

    def test_zero_vector(self):
        with pytest.raises(UndefinedSimilarityError):
            envelope_similarity(np.zeros(3), np.ones(3))


class TestScores:
    def test_identical_bits(self):
        b = np.random.default_rng(0).integers(0, 2, 100)
        assert score_bits(b, b).ber == 0.0

    def test_three_errors(self):
        t = np.zeros(1000, dtype=np.uint8)
        r = t.copy()
        r[[1, 50, 999]] = 1
        s = score_bits(t, r)
        assert s.ber == 0.003
        assert s.counts == {"error_bits": 3, "total_bits": 1000}

    def test_all_wrong_labels(self):
        assert score_task([1, 2, 3], [0, 0, 0]).accuracy == 0.0

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            score_task([1, 2], [1])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.0, 2 * np.pi))
def test_sdnr_global_phase_invariance(seed, angle):
    rng = np.random.default_rng(seed)
    csi = random_csi(rng, 3, 16)
    psi = sample_psi(3, 16, seed % 1000)
    x = mix(csi.noisy, psi.coeffs)
    xd = mix(csi.dynamic_part, psi.coeffs)
    base = sdnr(x, csi, xd).value_linear
    g = np.exp(1j * angle)
    rot = CsiTensor(csi.clean * g, csi.static_part * g, csi.dynamic_part * g, csi.noisy * g,
                    csi.schedule, csi.noise_std)
    turned = sdnr(x * g, rot, xd * g).value_linear
    assert abs(turned - base) <= 1e-10 * base


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.01, 1.0), st.floats(1.0, 5.0))
def test_more_noise_never_helps(seed, sigma, factor):
    rng = np.random.default_rng(seed)
    csi = add_noise(random_csi(rng, 3, 16), sigma, 0)
    psi = sample_psi(3, 16, seed % 1000)
    x = mix(csi.noisy, psi.coeffs)
    xd = mix(csi.dynamic_part, psi.coeffs)
    assert sensing_snr(csi, sigma * factor) <= sensing_snr(csi, sigma)
    assert sdnr(x, csi, xd, sigma * factor).value_linear <= sdnr(x, csi, xd, sigma).value_linear


def test_strong_scrambling_lowers_eve_sdnr():
    from csicrypt.harness.world import ReferenceWorld, gesture_channels

    world = ReferenceWorld(num_packets=400, samples_per_class=4)
    csi, _ = gesture_channels(world, 0, 1)
    # what a receiver sees without encryption: the all-ones beamformed channel
    ones = np.ones((8, 400))
    plain = CsiTensor(mix(csi.clean, ones)[None], mix(csi.static_part, ones)[None],
                      mix(csi.dynamic_part, ones)[None], mix(csi.noisy, ones)[None],
                      csi.schedule, csi.noise_std)
    drop = to_db(sensing_snr(plain)) - eve_sdnr(csi, sample_psi(8, 400, 3)).value_db
    assert drop > 6.0


@pytest.mark.parametrize("label", range(8))
def test_distinct_matrices_order_like_similarity(label):
    from csicrypt.harness.world import ReferenceWorld, gesture_channels

    world = ReferenceWorld(num_packets=400, samples_per_class=4)
    csi, _ = gesture_channels(world, label, 1)
    plain = mix(csi.noisy, np.ones((8, 400)))
    scramble = sample_psi(8, 400, 5).coeffs
    psis = []
    for t in (0.0, 0.2, 0.4, 0.6):
        c = (1 - t) + t * scramble
        psis.append(EncryptionMatrix(c * np.sqrt(c.size / np.sum(np.abs(c) ** 2)) * (1 - 1e-12)))
    vals = [eve_sdnr(csi, p).value_db for p in psis]
    sims = [envelope_similarity(mix(csi.noisy, p.coeffs), plain) for p in psis]
    assert len(set(np.round(vals, 9))) == 4
    assert list(np.argsort(vals)) == list(np.argsort(sims))
