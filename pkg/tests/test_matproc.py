import numpy as np
import pytest

from twoscale import matproc
from twoscale.errors import DegenerateWeights, NotHurwitz, NotSymmetric

from helpers import power_iteration_extremes, random_hurwitz, sigma_max_oracle


def test_lyapunov_scalar_case():
    p = matproc.solve_lyapunov(np.array([[-1.0]]), np.array([[1.0]]))
    np.testing.assert_allclose(p, [[0.5]], rtol=0, atol=1e-15)


def test_lyapunov_diagonal_decoupling():
    a = np.diag([-1.0, -2.0])
    p = matproc.solve_lyapunov(a, np.eye(2))
    np.testing.assert_allclose(p, np.diag([0.5, 0.25]), atol=1e-14)


def test_lyapunov_random_residual():
    rng = np.random.default_rng(42)
    a = random_hurwitz(6, rng)
    p = matproc.solve_lyapunov(a, np.eye(6))
    residual = np.linalg.norm(a.T @ p + p @ a + np.eye(6), 2)
    assert residual < 1e-10
    np.testing.assert_allclose(p, p.T, atol=1e-12)


def test_lyapunov_solution_positive_definite_quadratic_form():
    rng = np.random.default_rng(7)
    a = random_hurwitz(5, rng)
    p = matproc.solve_lyapunov(a, np.eye(5))
    for _ in range(100):
        x = rng.standard_normal(5)
        if np.linalg.norm(x) == 0:
            continue
        assert x @ p @ x > 0.0


def test_lyapunov_rejects_non_hurwitz():
    with pytest.raises(NotHurwitz):
        matproc.solve_lyapunov(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(2))


def test_lyapunov_rejects_bad_q():
    a = np.array([[-1.0]])
    with pytest.raises(ValueError):
        matproc.solve_lyapunov(a, np.array([[-1.0]]))
    with pytest.raises(NotSymmetric):
        matproc.solve_lyapunov(np.diag([-1.0, -2.0]), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_is_hurwitz_basics():
    assert matproc.is_hurwitz(np.array([[-1.0]]))
    assert not matproc.is_hurwitz(np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_is_hurwitz_companion_matrix():
    # companion matrix of z^2 + 3z + 2; roots via the polynomial oracle
    companion = np.array([[0.0, 1.0], [-2.0, -3.0]])
    roots = np.roots([1.0, 3.0, 2.0])
    assert np.all(roots.real < 0)
    assert matproc.is_hurwitz(companion)


def test_is_hurwitz_similarity_invariance():
    rng = np.random.default_rng(3)
    for trial in range(20):
        dim = int(rng.integers(2, 6))
        a = random_hurwitz(dim, rng) if trial % 2 == 0 else rng.standard_normal((dim, dim))
        # keep the similarity well conditioned
        s = np.eye(dim) + 0.3 * rng.standard_normal((dim, dim))
        if np.linalg.cond(s) > 50:
            continue
        sim = s @ a @ np.linalg.inv(s)
        margin = float(np.max(np.linalg.eigvals(a).real))
        if abs(margin) < 1e-6:
            continue
        assert matproc.is_hurwitz(a) == matproc.is_hurwitz(sim)


def test_spectral_bounds_identity_and_diag():
    s = matproc.spectral_bounds(np.eye(3))
    assert (s.gamma_min, s.gamma_max) == (1.0, 1.0)
    s = matproc.spectral_bounds(np.diag([0.5, 0.25]))
    assert (s.gamma_min, s.gamma_max) == (0.25, 0.5)


def test_spectral_bounds_matches_power_iteration():
    rng = np.random.default_rng(5)
    g = rng.standard_normal((5, 5))
    p = g @ g.T + 0.5 * np.eye(5)
    s = matproc.spectral_bounds(p)
    lam_min, lam_max = power_iteration_extremes(p)
    np.testing.assert_allclose(s.gamma_max, lam_max, rtol=1e-8)
    np.testing.assert_allclose(s.gamma_min, lam_min, rtol=1e-8)


def test_spectral_bounds_rejects_asymmetry():
    with pytest.raises(NotSymmetric):
        matproc.spectral_bounds(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_operator_norm_values():
    assert matproc.operator_norm(np.zeros((3, 4))) == 0.0
    assert matproc.operator_norm(np.diag([3.0, -4.0])) == pytest.approx(4.0, abs=1e-12)
    # closed form for a 2x2: sqrt of the largest eigenvalue of M'M
    expected = np.sqrt(15.0 + np.sqrt(221.0))
    got = matproc.operator_norm(np.array([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_allclose(got, expected, rtol=1e-12)


def test_operator_norm_matches_power_iteration():
    rng = np.random.default_rng(9)
    m = rng.standard_normal((4, 6))
    np.testing.assert_allclose(
        matproc.operator_norm(m), sigma_max_oracle(m), rtol=1e-8
    )


def test_build_block_p_equal_weights():
    p = matproc.build_block_P(np.array([[1.0]]), np.array([[1.0]]), 1.0, 1.0)
    np.testing.assert_allclose(p, np.diag([0.5, 0.5]))


def test_build_block_p_direct_substitution():
    p = matproc.build_block_P(np.array([[2.0]]), np.array([[4.0]]), 1.0, 3.0)
    np.testing.assert_allclose(p, np.diag([1.5, 1.0]))


def test_build_block_p_eigenvalue_envelope():
    rng = np.random.default_rng(11)
    for _ in range(10):
        gu = rng.standard_normal((3, 3))
        gv = rng.standard_normal((2, 2))
        p_u = gu @ gu.T + 0.2 * np.eye(3)
        p_v = gv @ gv.T + 0.2 * np.eye(2)
        xi_u = float(rng.uniform(0.1, 5.0))
        xi_v = float(rng.uniform(0.1, 5.0))
        p = matproc.build_block_P(p_u, p_v, xi_u, xi_v)
        eigs = np.linalg.eigvalsh(p)
        block_eigs = np.concatenate([np.linalg.eigvalsh(p_u), np.linalg.eigvalsh(p_v)])
        w_min = min(xi_u, xi_v) / (xi_u + xi_v)
        w_max = max(xi_u, xi_v) / (xi_u + xi_v)
        assert eigs.min() >= block_eigs.min() * w_min - 1e-12
        assert eigs.max() <= block_eigs.max() * w_max + 1e-12


def test_build_block_p_zero_weight_floor():
    p = matproc.build_block_P(np.eye(2), np.eye(2), 0.0, 1.0)
    assert np.min(np.linalg.eigvalsh(p)) > 0.0
    with pytest.raises(DegenerateWeights):
        matproc.build_block_P(np.eye(2), np.eye(2), 0.0, 0.0)
    with pytest.raises(DegenerateWeights):
        matproc.build_block_P(np.eye(2), np.eye(2), -1.0, 2.0)


def test_matrix_text_roundtrip_exact():
    rng = np.random.default_rng(13)
    m = rng.standard_normal((3, 5)) * np.exp(rng.uniform(-20, 20, size=(3, 5)))
    text = matproc.save_matrix_text(m)
    back = matproc.load_matrix_text(text)
    assert back.shape == m.shape
    assert np.all(back == m)


def test_matrix_text_header():
    text = matproc.save_matrix_text(np.array([1.0, 2.0, 3.0]))
    assert text.splitlines()[0] == "1 3"
