import math

import numpy as np
import pytest

from raytrace.channel import (
    Interferer,
    Link,
    assemble_H,
    beamforming_gain,
    rotation_matrix,
    rx_power_dbm,
    sinr_db,
    snr_db,
    steering_vector,
    svd_beamforming,
)
from raytrace.exceptions import LinkOutageError
from raytrace.qd import Mpc, MpcKind
from raytrace.schemas import ArrayConfig, LinkBudget

F_C = 60e9
SINGLE = ArrayConfig()
UE = ArrayConfig(rows=4, cols=4)
AP = ArrayConfig(rows=8, cols=8)


def mpc(gain_db=-60.0, phase=0.0, aod=(0.0, 0.0), aoa=(math.pi, 0.0)):
    return Mpc(delay_s=1e-8, gain_db=gain_db, aod=aod, aoa=aoa, phase=phase, kind=MpcKind.MAIN, parent=0)


def random_mpcs(n, seed=0):
    rng = np.random.default_rng(seed)
    return [
        mpc(gain_db=rng.uniform(-110, -60), phase=rng.uniform(0, 2 * math.pi),
            aod=(rng.uniform(-math.pi, math.pi), rng.uniform(-0.5, 0.5)),
            aoa=(rng.uniform(-math.pi, math.pi), rng.uniform(-0.5, 0.5)))
        for _ in range(n)
    ]


# ----- Вектор управления -----
def test_single_element():
    assert np.allclose(steering_vector(SINGLE, (0.3, 0.2)), [1.0])


def test_broadside_is_in_phase():
    assert np.allclose(steering_vector(UE, (0.0, 0.0)), np.ones(16))


def test_endfire_half_wavelength_phase():
    a = steering_vector(ArrayConfig(rows=1, cols=2), (math.pi / 2, 0.0))
    assert abs(np.angle(a[1] / a[0])) == pytest.approx(math.pi, abs=1e-9)


def test_steering_vector_has_unit_modulus():
    assert np.allclose(np.abs(steering_vector(AP, (1.1, -0.3))), 1.0)


def test_yaw_turns_boresight():
    turned = ArrayConfig(rows=2, cols=2, yaw=math.pi / 2)
    assert np.allclose(rotation_matrix(turned) @ (1, 0, 0), (0, 1, 0))
    assert np.allclose(steering_vector(turned, (math.pi / 2, 0.0)), np.ones(4))


# ----- Матрица канала -----
def test_scalar_channel():
    H = assemble_H([mpc(gain_db=-60.0)], SINGLE, SINGLE, F_C)
    assert H.shape == (1, 1)
    assert H[0, 0] == pytest.approx(1e-3)


def test_empty_channel_is_zero():
    H = assemble_H([], AP, UE, F_C)
    assert H.shape == (16, 64)
    assert not H.any()


def test_single_path_is_rank_one():
    H = assemble_H([mpc(gain_db=-70.0, aod=(0.4, 0.1), aoa=(2.0, -0.2))], AP, UE, F_C)
    singular = np.linalg.svd(H, compute_uv=False)
    assert singular[0] == pytest.approx(math.sqrt(1e-7) * math.sqrt(16 * 64), rel=1e-9)
    assert singular[1] < 1e-12 * singular[0]


def test_channel_is_linear_in_amplitude():
    base = assemble_H([mpc(gain_db=-70.0)], AP, UE, F_C)
    louder = assemble_H([mpc(gain_db=-70.0 + 20 * math.log10(2))], AP, UE, F_C)
    assert np.allclose(louder, 2 * base)


def test_channel_ignores_mpc_order():
    mpcs = random_mpcs(20)
    H1 = assemble_H(mpcs, AP, UE, F_C)
    H2 = assemble_H(list(reversed(mpcs)), AP, UE, F_C)
    assert np.allclose(H1, H2, rtol=0, atol=1e-12 * np.abs(H1).max())


# ----- SVD -----
def test_svd_reaches_largest_singular_value():
    H = assemble_H(random_mpcs(10, seed=1), AP, UE, F_C)
    w_tx, w_rx = svd_beamforming(H)
    assert beamforming_gain(H, w_tx, w_rx) == pytest.approx(np.linalg.norm(H, 2) ** 2, rel=1e-9)
    assert np.linalg.norm(w_tx) == pytest.approx(1.0)
    assert np.linalg.norm(w_rx) == pytest.approx(1.0)


def test_svd_identity():
    w_tx, w_rx = svd_beamforming(np.eye(4))
    assert beamforming_gain(np.eye(4), w_tx, w_rx) == pytest.approx(1.0)


def test_svd_random_matrix():
    rng = np.random.default_rng(4)
    H = rng.normal(size=(4, 16)) + 1j * rng.normal(size=(4, 16))
    w_tx, w_rx = svd_beamforming(H)
    assert beamforming_gain(H, w_tx, w_rx) == pytest.approx(np.linalg.svd(H, compute_uv=False)[0] ** 2)


def test_svd_is_optimal():
    rng = np.random.default_rng(5)
    H = assemble_H(random_mpcs(8, seed=5), AP, UE, F_C)
    best = beamforming_gain(H, *svd_beamforming(H))
    for _ in range(200):
        u = rng.normal(size=64) + 1j * rng.normal(size=64)
        v = rng.normal(size=16) + 1j * rng.normal(size=16)
        assert beamforming_gain(H, u / np.linalg.norm(u), v / np.linalg.norm(v)) <= best * (1 + 1e-9)


def test_zero_channel_is_an_outage():
    with pytest.raises(LinkOutageError):
        svd_beamforming(np.zeros((16, 64), dtype=complex))


# ----- Бюджет линии -----
def test_noise_floor():
    assert LinkBudget().noise_floor_dbm == pytest.approx(-78.98, abs=0.01)


def _link(p_tx_dbm=20.0, seed=0):
    H = assemble_H(random_mpcs(6, seed=seed), AP, UE, F_C)
    w_tx, w_rx = svd_beamforming(H)
    return Link(p_tx_dbm, H, w_tx, w_rx)


def test_snr_is_power_over_noise():
    link = _link()
    budget = LinkBudget()
    assert snr_db(link, budget) == pytest.approx(rx_power_dbm(link) - budget.noise_floor_dbm)


def test_sinr_without_interferers_is_snr():
    link = _link()
    assert sinr_db(link, [], LinkBudget()) == snr_db(link, LinkBudget())


def test_equal_interferer_gives_zero_db():
    link = _link(p_tx_dbm=100.0)
    interferer = Interferer(100.0, link.H, link.w_tx)
    assert sinr_db(link, [interferer], LinkBudget()) == pytest.approx(0.0, abs=1e-3)


def test_silent_interferer():
    link = _link()
    assert sinr_db(link, [Interferer(30.0, link.H, None)], LinkBudget()) == snr_db(link, LinkBudget())


def test_interference_never_helps():
    link = _link(seed=2)
    other = assemble_H(random_mpcs(6, seed=3), AP, UE, F_C)
    interferer = Interferer(30.0, other, svd_beamforming(other)[0])
    assert sinr_db(link, [interferer], LinkBudget()) <= snr_db(link, LinkBudget())


def _random_channel(rng, shape=(4, 16)):
    scale = 10.0 ** (rng.uniform(-60.0, -40.0) / 20.0)
    return scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / math.sqrt(2.0)


def test_sinr_stays_below_snr_on_random_instances():
    rng = np.random.default_rng(7)
    budget = LinkBudget()
    for _ in range(1000):
        H = _random_channel(rng)
        link = Link(rng.uniform(0.0, 30.0), H, *svd_beamforming(H))
        other = _random_channel(rng)
        interferer = Interferer(rng.uniform(0.0, 30.0), other, svd_beamforming(other)[0])
        snr = snr_db(link, budget)
        assert sinr_db(link, [interferer], budget) <= snr
        assert sinr_db(link, [Interferer(interferer.p_tx_dbm, other, None)], budget) == snr


def test_sinr_of_silent_link_is_minus_infinity():
    link = Link(20.0, np.zeros((16, 64), dtype=complex), np.ones(64) / 8, np.ones(16) / 4)
    assert sinr_db(link, [], LinkBudget()) == -math.inf
    assert rx_power_dbm(link) == -math.inf


def test_budget_defaults_follow_settings(settings):
    settings.MMWRT = {**settings.MMWRT, "DEFAULT_BANDWIDTH_HZ": 100e6, "DEFAULT_NOISE_FIGURE_DB": 6.0}
    budget = LinkBudget()
    assert budget.bandwidth_hz == 100e6
    assert budget.noise_floor_dbm == pytest.approx(-174.0 + 80.0 + 6.0)
