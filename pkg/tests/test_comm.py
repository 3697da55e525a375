import numpy as np
import pytest

from csicrypt.channel import PathComponent, Scenario, generate_csi
from csicrypt.comm import (Modulation, PacketSignal, Role, demodulate, equalize_and_demod,
                           estimate_csi_from_lts, modulate, run_link, sigma_for_payload_snr,
                           transmit_packet)
from csicrypt.crypto import passthrough_psi, sample_psi, uniform_psi
from csicrypt.errors import EqualizationError, InvalidArgumentError
from csicrypt.timing import regular_schedule

from oracles import qam64_point


def unit_channel(q=2, m=4):
    p = PathComponent(1.0 + 0j, 0.0)
    scen = Scenario(2.4e9, q, tuple((p,) for _ in range(q)), 0.0)
    return generate_csi(scen, m, regular_schedule(m, 1e-3), 0)


@pytest.mark.parametrize("mod", list(Modulation))
def test_constellation_size_and_energy(mod):
    pts = mod.constellation
    assert pts.size == 2 ** mod.bits_per_symbol
    assert len(set(np.round(pts, 12))) == pts.size
    assert abs(np.mean(np.abs(pts) ** 2) - 1.0) < 1e-12


@pytest.mark.parametrize("mod", list(Modulation))
def test_noiseless_round_trip(mod, rng):
    bits = rng.integers(0, 2, 600 * mod.bits_per_symbol).astype(np.uint8)
    assert np.array_equal(demodulate(modulate(bits, mod), mod), bits)


def test_qam64_labels_match_gray_oracle():
    pts = Modulation.QAM64.constellation
    scale = np.sqrt(42.0)
    for label in range(64):
        assert abs(pts[label] * scale - qam64_point(label)) < 1e-12


def test_qam64_neighbours_differ_by_one_bit():
    pts = Modulation.QAM64.constellation
    dmin = Modulation.QAM64.min_distance
    for a in range(64):
        for b in range(64):
            if abs(abs(pts[a] - pts[b]) - dmin) < 1e-9:
                assert bin(a ^ b).count("1") == 1


def test_qam32_mostly_gray():
    pts = Modulation.QAM32.constellation
    dmin = Modulation.QAM32.min_distance
    flips = [bin(a ^ b).count("1") for a in range(32) for b in range(a + 1, 32)
             if abs(abs(pts[a] - pts[b]) - dmin) < 1e-9]
    # a cross constellation cannot be perfectly Gray; most neighbours still are
    assert np.mean(np.array(flips) == 1) > 0.8


def test_bit_count_must_divide():
    with pytest.raises(InvalidArgumentError):
        modulate(np.zeros(7, dtype=np.uint8), Modulation.QAM32)


class TestPacket:
    def test_passthrough_noiseless_payload_exact(self):
        csi = unit_channel(1, 3)
        x = modulate(np.arange(12) % 2, Modulation.QAM64)
        rx = transmit_packet(PacketSignal(x, 1), csi, passthrough_psi(1, 3), 0.0, 0)
        assert np.array_equal(rx.y_payload, x)
        assert rx.y_lts == 1.0

    def test_scrambled_lts_mismatch(self):
        csi = unit_channel(4, 8)
        psi = sample_psi(4, 8, 2)
        x = np.ones(4, dtype=complex)
        rx = transmit_packet(PacketSignal(x, 3), csi, psi, 0.0, 0)
        assert abs(rx.y_lts - rx.y_payload[0]) > 1e-3

    def test_payload_noise_energy(self):
        csi = unit_channel(1, 1)
        x = np.zeros(200_000, dtype=complex) + 1
        rx = transmit_packet(PacketSignal(x, 0), csi, passthrough_psi(1, 1), 0.2, 1)
        energy = np.mean(np.abs(rx.y_payload - 1) ** 2)
        assert abs(energy / 0.04 - 1) < 0.02

    def test_index_out_of_range(self):
        with pytest.raises(InvalidArgumentError):
            transmit_packet(PacketSignal(np.ones(2), 5), unit_channel(1, 3),
                            passthrough_psi(1, 3), 0.0, 0)

    def test_empty_payload(self):
        with pytest.raises(InvalidArgumentError):
            PacketSignal(np.array([]), 0)


def test_estimate_divides():
    assert estimate_csi_from_lts(2 + 4j, 2) == 1 + 2j
    with pytest.raises(InvalidArgumentError):
        estimate_csi_from_lts(1.0, 0)


def test_zero_estimate_raises():
    with pytest.raises(EqualizationError):
        equalize_and_demod(np.ones(3), 0, Modulation.BPSK)


@pytest.fixture(scope="module")
def link():
    from csicrypt.harness.world import ReferenceWorld, gesture_channels

    world = ReferenceWorld(num_packets=256, reflectivity=0.005, noise_std=0.0)
    csi, _ = gesture_channels(world, 0, 3)
    return world.layout().scenario(()), csi


class TestLink:
    def test_unencrypted_link_is_clean_at_high_snr(self, link):
        scen, csi = link
        sigma = sigma_for_payload_snr(csi, 40.0)
        rep = run_link(scen, uniform_psi(8, 256), Role.BobKeyed, Modulation.QAM32, 256, 50,
                       sigma, 0, csi=csi)
        assert rep.ber == 0.0
        assert abs(rep.snr_db - 40.0) < 1e-9

    def test_keyless_collapses_keyed_survives(self, link):
        scen, csi = link
        sigma = sigma_for_payload_snr(csi, 30.0)
        psi = sample_psi(8, 256, 4)
        keyed = run_link(scen, psi, Role.BobKeyed, Modulation.QAM32, 256, 50, sigma, 1,
                         block_len=32, csi=csi)
        keyless = run_link(scen, psi, Role.BobKeyless, Modulation.QAM32, 256, 50, sigma, 1,
                           csi=csi)
        assert keyless.ber > 0.3
        assert keyed.ber < 0.01

    def test_psi_length_checked(self, link):
        scen, csi = link
        with pytest.raises(InvalidArgumentError):
            run_link(scen, sample_psi(8, 100, 0), Role.Eve, Modulation.BPSK, 256, 10, 0.1, 0)

    def test_report_row(self, link):
        scen, csi = link
        rep = run_link(scen, uniform_psi(8, 256), Role.Eve, Modulation.BPSK, 256, 10,
                       0.01, 0, csi=csi, psi_id="ones")
        assert rep.row()[:4] == ["Eve", "BPSK", "ones", 0]
