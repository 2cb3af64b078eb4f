import itertools

import numpy as np
import pytest

from mixdisc.criterion import (
    PopulationSpec,
    criterion,
    criterion_cell,
    criterion_cells,
    mask_subset,
    population_adequate_set,
    population_irrelevant_set,
    q_operator,
    subset_mask,
)
from mixdisc.errors import SingularSubmatrix
from mixdisc.estimators import estimate_empirical, estimate_smoothed

from conftest import random_dataset
from oracles import brute_q, brute_xi, brute_xi_cell, reference_population, random_population, random_spd


def one_cell(mu_lm, V, p_lm):
    mu_lm = np.asarray(mu_lm, float)[:, None, :]
    return PopulationSpec(np.array([1.0]), np.asarray(p_lm, float)[:, None], mu_lm, np.asarray(V, float)[None])


def test_q_operator_full_set_is_inverse(rng):
    V = random_spd(rng, 4)
    Q = q_operator(V, range(1, 5))
    np.testing.assert_allclose(Q, np.linalg.inv(V), atol=1e-12)
    np.testing.assert_allclose(V @ Q, np.eye(4), atol=1e-12)


def test_q_operator_identity_and_hand_values():
    np.testing.assert_array_equal(q_operator(np.eye(3), [1, 3]), np.diag([1.0, 0.0, 1.0]))
    np.testing.assert_allclose(q_operator(np.array([[2.0, 1.0], [1.0, 2.0]]), [1]), [[0.5, 0.0], [0.0, 0.0]])


@pytest.mark.parametrize("seed", range(10))
def test_q_operator_matches_selector_formula_and_is_projector(seed):
    rng = np.random.default_rng(seed)
    p = rng.integers(2, 6)
    V = random_spd(rng, p)
    for r in range(1, p + 1):
        for K in itertools.combinations(range(1, p + 1), r):
            Q = q_operator(V, K)
            np.testing.assert_allclose(Q, brute_q(V, K), atol=1e-10)
            P = V @ Q
            assert np.linalg.norm(P @ P - P) <= 1e-9 * np.linalg.norm(P)


def test_q_operator_singular_block():
    V = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularSubmatrix) as exc:
        q_operator(V, [1, 2], cell=4)
    assert exc.value.subset == (1, 2) and exc.value.cell == 4
    assert "m=4" in str(exc.value)
    q_operator(V, [1, 3])


def test_single_group_gives_zero():
    spec = one_cell([[1.0, 2.0, 3.0]], np.eye(3) * 2, [1.0])
    for K in ([1], [2, 3], [1, 2, 3]):
        assert criterion_cell(spec, 1, K) == 0.0
        assert criterion(spec, K) == 0.0


def test_full_set_gives_zero(rng):
    spec, _ = random_population(rng, 4, 3, 2)
    assert abs(criterion(spec, [1, 2, 3, 4])) < 1e-14


@pytest.mark.parametrize("scale, expected", [(1.0, 0.5), (0.5, 0.125)])
def test_two_group_closed_form(scale, expected):
    # groups at +/- scale * (1, 0), V = I, equal weights; dropping coordinate 1 loses everything
    delta = np.array([1.0, 0.0]) * scale
    spec = one_cell([delta, -delta], np.eye(2), [0.5, 0.5])
    value = criterion_cell(spec, 1, [2])
    assert value == pytest.approx(expected, abs=1e-15)
    assert value == pytest.approx(brute_xi_cell(np.array([0.5, 0.5]), np.array([delta, -delta]), np.eye(2), [2]))
    assert criterion_cell(spec, 1, [1]) == 0.0


@pytest.mark.parametrize("seed", range(15))
def test_matches_brute_force_on_random_specs(seed):
    rng = np.random.default_rng(seed)
    spec, _ = random_population(rng, rng.integers(2, 5), rng.integers(1, 4), rng.integers(1, 3))
    for r in range(1, spec.p + 1):
        for K in itertools.combinations(range(1, spec.p + 1), r):
            ref = brute_xi(spec.p_m, spec.p_lm, spec.mu_lm, spec.V_m, K)
            assert criterion(spec, K) == pytest.approx(ref, rel=1e-9, abs=1e-13)


def test_reference_design_population():
    spec = reference_population()
    np.testing.assert_allclose(spec.V_m[0], 0.5 * (np.eye(5) + np.ones((5, 5))) + np.outer(*[[0.25, 0, 0.5, 0, 0.75]] * 2) / 4)
    xi = [criterion(spec, set(range(1, 6)) - {i}) for i in range(1, 6)]
    assert abs(xi[0]) < 1e-14
    assert all(v > 1e-4 for v in xi[1:])
    assert population_adequate_set(spec) == (2, 3, 4, 5)
    # V^-1 delta has a zero first coordinate
    delta = np.array([0.25, 0, 0.5, 0, 0.75])
    v = np.linalg.solve(spec.V_m[0], delta)
    assert abs(v[0]) < 1e-12 and np.all(np.abs(v[1:]) > 1e-3)


def test_population_set_examples():
    assert population_adequate_set(one_cell([[1.0, 2.0], [1.0, 2.0]], np.eye(2), [0.5, 0.5])) == ()
    delta = np.array([1.0, 0.0])
    spec = PopulationSpec.from_location_model([1.0], [[0.5], [0.5]], np.array([[delta / 2], [-delta / 2]]), np.eye(2))
    assert population_adequate_set(spec) == (1,)
    assert population_irrelevant_set(spec) == (1,)


@pytest.mark.parametrize("seed", range(20))
def test_population_set_matches_construction(seed):
    rng = np.random.default_rng(100 + seed)
    spec, support = random_population(rng, rng.integers(2, 5), rng.integers(2, 4), rng.integers(1, 3))
    assert population_adequate_set(spec) == support


def test_estimated_nonnegative_and_permutation_equivariant(rng):
    ds = random_dataset(rng, 200, 4, 2, 3)
    perm = rng.permutation(4)
    from mixdisc.data import Dataset

    permuted = Dataset(ds.X[:, perm], ds.Y, ds.z, q=ds.q)
    inverse = {int(perm[j]) + 1: j + 1 for j in range(4)}  # old index -> new index
    for est, est_p in ((estimate_empirical(ds), estimate_empirical(permuted)), (estimate_smoothed(ds, 0.3), estimate_smoothed(permuted, 0.3))):
        for r in range(1, 5):
            for K in itertools.combinations(range(1, 5), r):
                a = criterion(est, K)
                b = criterion(est_p, [inverse[k] for k in K])
                assert a >= 0
                assert a == pytest.approx(b, abs=1e-12)


def test_empty_cells_contribute_nothing(rng):
    from mixdisc.data import Dataset

    X = rng.normal(size=(40, 2))
    Y = np.zeros((40, 2), int)
    Y[20:, 0] = 1
    ds = Dataset(X, Y, np.tile([1, 2], 20))
    est = estimate_empirical(ds)
    vals, failed = criterion_cells(est, [1])
    assert vals[2] == 0 and vals[3] == 0 and not failed.any()
    assert criterion(est, [1]) == pytest.approx(sum(est.p_m[m] ** 2 * criterion_cell(est, m + 1, [1]) for m in range(2)))


def test_singular_cell_is_named():
    from mixdisc.data import Dataset

    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.5], [3.0, 3.0], [0.5, 1.0], [2.5, 0.0]])
    Y = np.array([[0], [0], [0], [1], [1], [1]])
    X[3:, 1] = X[3:, 0]  # cell 2 lies on a line: its covariance is singular
    ds = Dataset(X, Y, np.array([1, 2, 1, 2, 1, 2]))
    est = estimate_empirical(ds)
    criterion(est, [1])
    with pytest.raises(SingularSubmatrix) as exc:
        criterion(est, [1, 2])
    assert exc.value.cell == 2


def test_subset_mask_round_trip():
    for K in [(1,), (2, 5), (1, 2, 3, 4)]:
        assert mask_subset(subset_mask(K)) == K
