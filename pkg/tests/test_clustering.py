import numpy as np
import pytest

from mmnoma.channel import SystemConfig, dft_codebook, synthesize_beam_users
from mmnoma.clustering import cluster_users, measure_beam_strength, plan_from_channels, select_beams
from mmnoma.errors import InfeasibleScenarioError, InvalidInputError


def test_strength_of_codebook_column():
    cb = dft_codebook(8, 8)
    s = measure_beam_strength(cb, cb.column(3))
    assert np.argmax(s) == 2 and s[2] == pytest.approx(1.0)
    assert np.all(measure_beam_strength(cb, np.zeros(8)) == 0)


def test_strength_matches_loop(rng):
    cb = dft_codebook(4, 8)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    loop = [abs(sum(np.conj(cb.F[n, k]) * h[n] for n in range(4))) ** 2 for k in range(8)]
    np.testing.assert_allclose(measure_beam_strength(cb, h), loop, atol=1e-12)
    with pytest.raises(InvalidInputError):
        measure_beam_strength(cb, np.ones(5))


def test_select_beams_families():
    assert select_beams(16, 4, 1) == [1, 5, 9, 13]
    assert select_beams(16, 4, 2) == [2, 6, 10, 14]
    assert select_beams(4, 4) == [1, 2, 3, 4]
    with pytest.raises(InvalidInputError):
        select_beams(16, 3)


def _users_on(cb, beam, scales):
    return [s * cb.column(beam) for s in scales]


def test_identity_placement():
    cb = dft_codebook(8, 8)
    h = np.array(_users_on(cb, 1, [2.0, 1.0]) + _users_on(cb, 5, [3.0, 0.5]))
    plan = cluster_users(cb, h, [1, 5])
    assert plan.users.tolist() == [[0, 1], [2, 3]]
    np.testing.assert_allclose(np.abs(plan.hbar[:, :, 0]), [[2, 1], [0, 0]], atol=1e-12)


def test_pair_with_largest_gap():
    cb = dft_codebook(8, 8)
    # strengths 9, 4, 1 on beam 1
    h = np.array(_users_on(cb, 1, [3.0, 2.0, 1.0]) + _users_on(cb, 5, [1.0, 2.0]))
    plan = cluster_users(cb, h, [1, 5])
    assert set(plan.users[0].tolist()) == {0, 2}
    assert plan.users[0, 0] == 0  # strong first
    assert plan.users[1].tolist() == [4, 3]


def test_tie_goes_to_lowest_beam():
    cb = dft_codebook(8, 8)
    tied = (cb.column(1) + cb.column(5)) / np.sqrt(2)
    h = np.array([tied, 0.5 * cb.column(1), 2 * cb.column(5), cb.column(5)])
    s = measure_beam_strength(cb, h)
    assert s[0, 0] == pytest.approx(s[0, 4])
    plan = cluster_users(cb, h, [1, 5], strengths=np.round(s, 12))
    assert 0 in plan.users[0]


def test_empty_beam_is_rejected():
    cb = dft_codebook(8, 8)
    h = np.array(_users_on(cb, 1, [1.0, 2.0, 3.0]) + _users_on(cb, 5, [1.0]))
    with pytest.raises(InfeasibleScenarioError):
        cluster_users(cb, h, [1, 5])


def test_plan_invariants_on_random_drops():
    cfg = SystemConfig(n_antennas=16, codebook_size=16, n_rf=4)
    cb = dft_codebook(16, 16)
    beams = select_beams(16, 4)
    for d in range(20):
        ch = synthesize_beam_users(cfg, beams, [1, d])
        try:
            plan = cluster_users(cb, ch.h, beams)
        except InfeasibleScenarioError:
            continue
        assert len(set(plan.users.ravel().tolist())) == 8
        n = np.linalg.norm(plan.hbar, axis=2)
        assert np.all(n[:, 0] >= n[:, 1])
        np.testing.assert_allclose(plan.hbar, ch.h[plan.users] @ plan.W.T)


def test_plan_from_channels_orders_pairs():
    cb = dft_codebook(4, 4)
    W = cb.F.conj().T[:1]
    plan = plan_from_channels(W, np.array([[0.5 * cb.column(1), cb.column(1)]]))
    assert plan.users.tolist() == [[1, 0]]
    assert abs(plan.hbar[0, 0, 0]) == pytest.approx(1.0)
