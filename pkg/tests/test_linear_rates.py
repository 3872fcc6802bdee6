import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import forward_image_count
from torusdisc import linear_rates as lr
from torusdisc.errors import CapacityError
from torusdisc.linear_rates import (
    MatrixSequence, build_M, build_M_tilde, compose_discretized, decay_experiment, hat_apply,
    mean_rate_mc, preimage_search, random_sl_sequence, rate_brute_force,
)

DIAG2 = [[2.0, 0.0], [0.0, 0.5]]
DIAG3 = [[3.0, 0.0], [0.0, 1 / 3]]
ANOSOV = [[2.0, 1.0], [1.0, 1.0]]


def seq(*mats, w=None):
    return MatrixSequence(np.array(mats, dtype=float), w)


def test_hat_apply_examples():
    assert hat_apply(np.eye(2), None, (5, -3)) == (5, -3)
    assert hat_apply(DIAG2, None, (1, 1)) == (2, 0)
    assert hat_apply(ANOSOV, None, (3, -7)) == (-1, -4)
    assert hat_apply([[1.0]], [0.5], (0,)) == (0,)
    with pytest.raises(ValueError):
        hat_apply(np.eye(2), None, (1, 2, 3))


def test_compose_examples():
    assert compose_discretized(seq(np.eye(2), np.eye(2)), (4, 9)) == (4, 9)
    assert compose_discretized(seq(DIAG2, [[0.5, 0], [0, 2.0]]), (1, 1)) == (1, 0)
    s = random_sl_sequence(2, 4, 5.0, 1)
    assert compose_discretized(s, (0, 0)) == (0, 0)


def test_array_compose_matches_scalar():
    s = random_sl_sequence(2, 3, 5.0, 2)
    pts = np.random.default_rng(0).integers(-300, 300, (500, 2))
    arr = lr.compose_discretized_array(s, pts)
    for p, q in zip(pts, arr):
        assert compose_discretized(s, p) == tuple(q)


def test_sequence_validation():
    with pytest.raises(ValueError):
        seq([[2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        seq(np.eye(2), w=[[0.6, 0.0]])
    with pytest.raises(ValueError):
        MatrixSequence(np.zeros((0, 2, 2)))


def test_sequence_json_round_trip():
    s = random_sl_sequence(2, 3, 5.0, 9)
    back = MatrixSequence.from_dict(json.loads(json.dumps(s.to_dict())))
    assert np.array_equal(back.matrices, s.matrices)
    assert back.shears == s.shears


def test_identity_rate_exact(backend):
    est = rate_brute_force(seq(np.eye(2), np.eye(2)), 30, backend=backend)
    assert est.value == 1.0 and est.convergence_gap == 0.0


@pytest.mark.parametrize("A,expected", [(DIAG2, 0.5), (DIAG3, 1 / 3)])
def test_diagonal_rates(A, expected, backend):
    R = 100
    est = rate_brute_force(seq(A), R, backend=backend)
    assert abs(est.value - expected) <= 0.02
    # independent lattice count: image is mZ x Z
    m = round(A[0][0])
    assert est.count == len(range(-R, R + 1, 1)[::1][(R % m)::m]) * (2 * R + 1)


def test_unimodular_integer_rate_is_one(backend):
    s = seq(ANOSOV, [[1.0, -1.0], [0.0, 1.0]], [[1.0, 0.0], [-3.0, 1.0]])
    assert rate_brute_force(s, 50, backend=backend).value == 1.0


@pytest.mark.parametrize("seed", range(4))
def test_backward_matches_forward_and_set_oracle(seed):
    s = random_sl_sequence(2, 3, 4.0, seed)
    R = 12
    back = rate_brute_force(s, R)
    fwd = rate_brute_force(s, R, strategy="forward")
    assert back.count == fwd.count
    Rp = lr.enumeration_radius(s, R)
    assert back.count == forward_image_count(s.matrices.tolist(), R, Rp)


def test_affine_backward_matches_forward():
    rng = np.random.default_rng(3)
    base = random_sl_sequence(2, 2, 4.0, 3)
    s = MatrixSequence(base.matrices, rng.uniform(-0.5, 0.5, (2, 2)))
    assert rate_brute_force(s, 15).count == rate_brute_force(s, 15, strategy="forward").count


def test_radius_precondition():
    with pytest.raises(ValueError):
        rate_brute_force(seq(np.eye(2)), 5)


def test_capacity():
    with pytest.raises(CapacityError):
        rate_brute_force(seq(np.eye(3)), 2000)


def test_workers_do_not_change_counts():
    s = random_sl_sequence(2, 2, 5.0, 4)
    assert rate_brute_force(s, 80).count == rate_brute_force(s, 80, workers=3).count


def test_three_dimensional_rate():
    s = random_sl_sequence(3, 2, 4.0, 1)
    back = rate_brute_force(s, 10)
    assert back.count == rate_brute_force(s, 10, strategy="forward").count
    assert 0 < back.value <= 1


def test_build_M_blocks():
    A1 = np.array(ANOSOV)
    assert np.array_equal(build_M_tilde(seq(A1)).basis, A1)
    t = build_M_tilde(seq(np.eye(2), np.eye(2))).basis
    assert np.array_equal(t, [[1, 0, -1, 0], [0, 1, 0, -1], [0, 0, 1, 0], [0, 0, 0, 1]])
    m = build_M(seq(A1, np.eye(2)))
    assert m.dim == 6
    assert np.array_equal(m.basis[4:, 4:], np.eye(2))
    assert np.array_equal(m.basis[2:4, 4:], -np.eye(2))


@pytest.mark.parametrize("seed", range(5))
def test_cached_inverse(seed):
    s = random_sl_sequence(2, 4, 5.0, seed)
    for lat in (build_M(s), build_M_tilde(s)):
        assert np.abs(lat.basis @ lat.inverse - np.eye(lat.dim)).max() < 1e-9
        assert abs(np.linalg.det(lat.basis) - 1) < 1e-6


def test_lattice_rejects_bad_inverse():
    with pytest.raises(ValueError):
        lr.LatticeBasis(np.eye(2), 2 * np.eye(2))


def test_mean_rate_identity(backend):
    assert mean_rate_mc(seq(np.eye(2)), 10**4, 0, backend=backend).value == 1.0


def test_mean_rate_diag():
    est = mean_rate_mc(seq(DIAG2), 10**5, 1)
    sigma = math.sqrt(0.25 / 10**5)
    assert abs(est.value - 0.5) <= 3 * sigma
    assert est.meta["rng"] == lr.RNG_NAME


def test_mean_rate_is_deterministic():
    s = random_sl_sequence(2, 2, 5.0, 6)
    assert mean_rate_mc(s, 20000, 3) == mean_rate_mc(s, 20000, 3)


def test_mean_rate_preconditions():
    with pytest.raises(ValueError):
        mean_rate_mc(seq(np.eye(2)), 100, 0)
    with pytest.raises(ValueError):
        mean_rate_mc(seq(np.eye(2), w=[[0.1, 0.0]]), 10**4, 0)
    huge = [[1e7, 0.0], [0.0, 1e-7]]
    with pytest.raises(CapacityError):
        mean_rate_mc(seq(huge), 10**4, 0)


def test_preimage_examples():
    assert preimage_search(seq(np.eye(2)), (0, 0), 4) == [(0, 0)]
    assert preimage_search(seq([[0.5, 0.0], [0.0, 2.0]]), (0, 0), 5) == [(1, 0), (0, 0)]
    assert preimage_search(seq(ANOSOV), (3, 2), 10) == [(1, 1)]


def test_preimage_matches_exhaustive_search():
    s = random_sl_sequence(2, 3, 4.0, 12)
    R = 25
    grid = [(a, b) for a in range(-R, R + 1) for b in range(-R, R + 1)]
    images = {}
    for x in grid:
        images.setdefault(compose_discretized(s, x), []).append(x)
    target, pre = max(images.items(), key=lambda kv: len(kv[1]))
    found = preimage_search(s, target, R)
    assert sorted(found) == sorted(pre)
    norms = [max(map(abs, x)) for x in found]
    assert norms == sorted(norms, reverse=True)
    assert all(compose_discretized(s, x) == target for x in found)


def test_random_sequence_exact_determinant():
    s = random_sl_sequence(2, 6, 5.0, 21)
    assert s == random_sl_sequence(2, 6, 5.0, 21)
    for m, shears in zip(s.matrices, s.shears):
        exact = lr.exact_shear_product(2, shears)
        det = exact[0][0] * exact[1][1] - exact[0][1] * exact[1][0]
        assert det == Fraction(1)
        assert np.allclose(np.array(exact, dtype=float), m, atol=1e-12)
        assert lr.inf_norm(m) <= 5 and lr.inf_norm(np.linalg.inv(m)) <= 5


def test_random_sequence_three_dims():
    s = random_sl_sequence(3, 2, 6.0, 0)
    for shears in s.shears:
        assert len(shears) == 9
        assert all(a[:2] != b[:2] for a, b in zip(shears, shears[1:]))


def test_random_sequence_rejection_failure():
    with pytest.raises(ValueError):
        random_sl_sequence(2, 1, 1.0, 0, max_draws=50)
    with pytest.raises(ValueError):
        random_sl_sequence(2, 1, 0.5, 0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_rates_non_increasing_in_k(seed):
    s = random_sl_sequence(2, 4, 5.0, seed)
    ests = [rate_brute_force(s.prefix(k), 150) for k in range(1, 5)]
    for a, b in zip(ests, ests[1:]):
        assert b.value <= a.value + 2 * max(a.convergence_gap, b.convergence_gap)


def test_decay_identity_and_columns():
    rows = decay_experiment(2, 3, 5.0, 2, 7, R=20)
    assert len(rows) == 6
    assert list(rows[0]) == list(lr.DECAY_COLUMNS)
    text = lr.rows_to_csv(rows, lr.DECAY_COLUMNS)
    assert text == lr.rows_to_csv(decay_experiment(2, 3, 5.0, 2, 7, R=20), lr.DECAY_COLUMNS)


def test_decay_trials_mostly_decrease():
    rows = decay_experiment(2, 10, 5.0, 10, 2024, R=100)
    first = {r["trial"]: r["tau_estimate"] for r in rows if r["k"] == 1}
    last = {r["trial"]: r["tau_estimate"] for r in rows if r["k"] == 10}
    assert sum(last[t] < first[t] for t in first) >= 8
