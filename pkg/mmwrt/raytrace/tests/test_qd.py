import math

import numpy as np
import pytest

from raytrace.exceptions import ConfigError
from raytrace.qd import (
    DB_PER_NEPER,
    MpcKind,
    cluster_statistics,
    expand_rays,
    generate_cluster,
    main_cursor,
    multi_bounce,
    pinned,
    resample_policy,
    rician_mean,
    sample_rician,
)
from raytrace.raytracer import synthetic_ray, trace_pair
from raytrace.scenes import WALL
from raytrace.schemas import QdMaterialParams


@pytest.fixture
def wall(materials):
    return materials.get(WALL)


def rng(seed=0):
    return np.random.default_rng(seed)


# ----- Rician -----
def test_rician_without_spread_is_exact():
    assert sample_rician(7.5, 0.0, rng()) == 7.5


def test_rician_negative_sigma():
    with pytest.raises(ConfigError):
        sample_rician(1.0, -0.1, rng())


def test_rayleigh_mean():
    samples = sample_rician(0.0, 1.0, rng(3), size=200_000)
    assert samples.mean() == pytest.approx(math.sqrt(math.pi / 2), rel=0.01)
    assert rician_mean(0.0, 1.0) == pytest.approx(math.sqrt(math.pi / 2))


# ----- Состав кластера -----
def test_cluster_size_for_second_order(wall):
    cluster = generate_cluster(synthetic_ray(order=2), wall, rng())
    assert len(cluster) == 2 * (3 + 5) + 1
    assert cluster[0].kind is MpcKind.MAIN
    assert sum(m.kind is MpcKind.PRE for m in cluster) == 6
    assert sum(m.kind is MpcKind.POST for m in cluster) == 10


def test_multi_bounce_size():
    params = QdMaterialParams(n_pre=2, n_post=2)
    assert len(multi_bounce(synthetic_ray(order=3), [params] * 3, rng())) == 13


def test_zero_diffuse_counts_give_main_cursor_only():
    params = QdMaterialParams(n_pre=0, n_post=0)
    cluster = generate_cluster(synthetic_ray(order=1), params, rng())
    assert cluster == [main_cursor(synthetic_ray(order=1))]


def test_direct_ray_has_no_cluster(wall):
    with pytest.raises(ConfigError):
        generate_cluster(synthetic_ray(order=0), wall, rng())


def test_missing_reflector_material(wall):
    with pytest.raises(ConfigError):
        multi_bounce(synthetic_ray(order=2), [wall, None], rng())


def test_delays_straddle_main_cursor(wall):
    parent = synthetic_ray()
    cluster = generate_cluster(parent, wall, rng(5))
    for mpc in cluster:
        if mpc.kind is MpcKind.PRE:
            assert 0.0 < mpc.delay_s < parent.delay_s
        elif mpc.kind is MpcKind.POST:
            assert mpc.delay_s > parent.delay_s
        assert mpc.parent == parent.ray_id
        assert 0.0 <= mpc.phase < 2 * math.pi
        assert -math.pi < mpc.aod[0] <= math.pi


def test_pinned_decay_is_exact(wall):
    params = pinned(wall)
    parent = synthetic_ray()
    for mpc in generate_cluster(parent, params, rng(11)):
        if mpc.kind is MpcKind.POST:
            expected = parent.gain_db - params.s_k - DB_PER_NEPER * (mpc.delay_s - parent.delay_s) / params.s_gamma_post
            assert mpc.gain_db == pytest.approx(expected, abs=1e-9)


def test_early_pre_cursors_stay_positive_and_distinct(wall):
    # при tau_0 = 10 ns двадцать пре-курсоров с шагом ~2 ns не помещаются до tau = 0
    params = pinned(wall).model_copy(update={"n_pre": 20, "n_post": 0, "lambda_pre": 5e8})
    parent = synthetic_ray(delay_s=10e-9)
    pre = [m for m in generate_cluster(parent, params, rng(7)) if m.kind is MpcKind.PRE]
    delays = [m.delay_s for m in pre]
    assert len(pre) == 20
    assert all(0.0 < d < parent.delay_s for d in delays)
    assert len(set(delays)) == 20
    for mpc in pre:
        expected = parent.gain_db - params.s_k - DB_PER_NEPER * (parent.delay_s - mpc.delay_s) / params.s_gamma_pre
        assert mpc.gain_db == pytest.approx(expected, abs=1e-9)


def test_each_reflector_uses_its_own_decay(wall):
    fast = pinned(wall).model_copy(update={"s_gamma_post": 2e-9, "n_pre": 0})
    slow = pinned(wall).model_copy(update={"s_gamma_post": 8e-9, "n_pre": 0})
    parent = synthetic_ray(order=2)
    cluster = multi_bounce(parent, [fast, slow], rng(2))
    first, second = cluster[1:6], cluster[6:11]
    for batch, params in ((first, fast), (second, slow)):
        offsets = np.array([m.delay_s for m in batch]) - parent.delay_s
        gains = np.array([m.gain_db for m in batch]) - parent.gain_db
        slope = np.polyfit(offsets, gains, 1)[0]
        assert slope == pytest.approx(-DB_PER_NEPER / params.s_gamma_post, rel=1e-6)


def test_reversed_swaps_angles(wall):
    mpc = generate_cluster(synthetic_ray(), wall, rng())[0]
    back = mpc.reversed()
    assert (back.aod, back.aoa) == (mpc.aoa, mpc.aod)
    assert back.gain_db == mpc.gain_db


# ----- Перерозыгрыш по шагам -----
def test_same_timestep_is_reproducible(wall):
    parent = synthetic_ray()
    policy = resample_policy(3)
    first = generate_cluster(parent, wall, policy.stream(1, "ap->ue", parent.ray_id).generator())
    second = generate_cluster(parent, wall, policy.stream(1, "ap->ue", parent.ray_id).generator())
    assert first == second


@pytest.mark.slow
def test_adjacent_timesteps_are_independent(wall):
    parent = synthetic_ray()
    gains = []
    for timestep in (0, 1):
        policy = resample_policy(timestep)
        gains.append([
            generate_cluster(parent, wall, policy.stream(1, f"pair{i}", parent.ray_id).generator())[-1].gain_db
            for i in range(20_000)
        ])
    assert abs(np.corrcoef(gains[0], gains[1])[0, 1]) < 0.03


def test_disabled_policy_keeps_main_cursors(box, materials, baseline_cfg):
    rays, _ = trace_pair((3.3, 4.1, 1.7), (6.2, 13.7, 1.2), box, materials, baseline_cfg(R=1))
    policy = resample_policy(0, enabled=False)
    mpcs = expand_rays(rays, box, materials, policy, seed=0, pair_key="ap->ue")
    assert mpcs == [main_cursor(ray) for ray in rays]


def test_enabled_policy_expands_reflected_rays(box, materials, baseline_cfg):
    rays, _ = trace_pair((3.3, 4.1, 1.7), (6.2, 13.7, 1.2), box, materials, baseline_cfg(R=1))
    mpcs = expand_rays(rays, box, materials, resample_policy(0), seed=0, pair_key="ap->ue")
    reflected = sum(1 for ray in rays if ray.reflection_order == 1)
    assert len(mpcs) == len(rays) + reflected * (3 + 5)


# ----- Статистика кластеров -----
@pytest.mark.slow
def test_cluster_statistics_match_model(wall):
    checks = cluster_statistics(pinned(wall), 20_000, rng(17))
    failed = [(c.name, c.empirical, c.analytic) for c in checks if not c.passed]
    assert not failed


def test_cluster_statistics_need_post_cursors():
    with pytest.raises(ConfigError):
        cluster_statistics(QdMaterialParams(n_post=0), 1000, rng())
