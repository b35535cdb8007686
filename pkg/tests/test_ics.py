import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from conftest import random_affine
from icsdetect.exceptions import InputError
from icsdetect.ics import ICS, PAIRS, ics, ics_distance_sq, parse_pair, simultaneous_diagonalization
from icsdetect.linalg import mahalanobis_sq


def test_simultaneous_diagonalization_identities(rng):
    A = rng.standard_normal((5, 5))
    V1 = A @ A.T + np.eye(5)
    C = rng.standard_normal((5, 5))
    V2 = C @ C.T + 0.5 * np.eye(5)
    B, D = simultaneous_diagonalization(V1, V2)
    np.testing.assert_allclose(B @ V1 @ B.T, np.eye(5), atol=1e-10)
    np.testing.assert_allclose(B @ V2 @ B.T, np.diag(D), atol=1e-10)
    assert np.all(np.diff(D) <= 0)
    # eigenvalues of V1^-1 V2 by a different route
    ref = np.sort(np.linalg.eigvals(np.linalg.solve(V1, V2)).real)[::-1]
    np.testing.assert_allclose(D, ref, rtol=1e-9)


@pytest.mark.parametrize("pair", sorted(PAIRS))
def test_scores_are_standardized(pair, rng):
    X = rng.standard_normal((150, 4))
    res = ics(X, *parse_pair(pair))
    V1 = res.scatter1.scatter
    np.testing.assert_allclose(res.B @ V1 @ res.B.T, np.eye(4), atol=1e-9)
    np.testing.assert_allclose(res.Z, (X - res.center) @ res.B.T, atol=1e-12)


def test_sign_convention(rng):
    res = ics(rng.standard_normal((80, 3)))
    for j in range(3):
        z = res.Z[:, j]
        assert z[np.argmax(np.abs(z))] > 0


@pytest.mark.parametrize("pair", sorted(PAIRS))
def test_full_distance_is_first_scatter_mahalanobis(pair, rng):
    X = rng.standard_normal((120, 5))
    res = ics(X, *parse_pair(pair))
    md = mahalanobis_sq(X, res.center, res.scatter1.scatter)
    np.testing.assert_allclose(ics_distance_sq(res, 5), md, rtol=1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_scores_affine_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((100, 3))
    X[:5, 0] += 6.0
    A, b = random_affine(3, rng)
    r1 = ics(X)
    r2 = ics(X @ A.T + b)
    np.testing.assert_allclose(r1.D, r2.D, rtol=1e-8)
    np.testing.assert_allclose(r1.Z, r2.Z, atol=1e-7)


def test_first_component_points_at_shift():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((2000, 4))
    X[:40, 1] += 8.0
    res = ics(X)
    b = res.B[0] / np.linalg.norm(res.B[0])
    assert abs(b[1]) > 0.99


def test_rejects_wrong_robustness_order(rng):
    with pytest.raises(InputError):
        ics(rng.standard_normal((50, 3)), "COV", "MCD")
    with pytest.raises(InputError):
        parse_pair("cov-mcd")


def test_distance_k_validation(rng):
    res = ics(rng.standard_normal((30, 3)))
    with pytest.raises(InputError):
        ics_distance_sq(res, 0)
    with pytest.raises(InputError):
        ics_distance_sq(res, 4)


def test_transformer_api(rng):
    X = rng.standard_normal((60, 4))
    est = ICS(pair="mlt-cov", n_components=2).fit(X)
    assert est.transform(X).shape == (60, 2)
    np.testing.assert_allclose(est.transform(X), est.result_.Z[:, :2], atol=1e-12)
    params = clone(est).get_params()
    assert params == {"pair": "mlt-cov", "n_components": 2, "random_state": 0}
    with pytest.raises(InputError):
        est.transform(X[:, :3])
