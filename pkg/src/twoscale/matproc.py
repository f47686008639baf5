"""Dense real matrix primitives: Lyapunov equations, spectra, and the block
energy matrix used by the two time-scale analysis."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeights, NotHurwitz, NotSymmetric, Singular

HURWITZ_TOL = 1e-10
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class SpectralSummary:
    """Extreme eigenvalues of a symmetric matrix."""

    gamma_min: float
    gamma_max: float

    def __post_init__(self):
        if not self.gamma_min <= self.gamma_max:
            raise ValueError("gamma_min must not exceed gamma_max")


def _as_square(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def is_hurwitz(a) -> bool:
    """True iff every eigenvalue of ``a`` has real part below -1e-10.

    Real parts within the tolerance of zero count as non-negative, so
    marginally stable matrices are rejected.
    """
    a = _as_square(a)
    return bool(np.max(np.linalg.eigvals(a).real) < -HURWITZ_TOL)


def operator_norm(m) -> float:
    """Largest singular value of ``m``."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def solve_lyapunov(a, q) -> np.ndarray:
    """Solve A'P + PA = -Q for symmetric positive definite P.

    Uses the Kronecker-sum formulation: the equation is linear in vec(P),
    so a dense LU solve on the n^2-dimensional system suffices at the
    matrix sizes this package targets.

    Raises NotHurwitz if ``a`` has an eigenvalue with non-negative real
    part, and Singular if the vectorized system is rank-deficient or no
    positive definite solution emerges.
    """
    a = _as_square(a)
    q = _as_square(q)
    n = a.shape[0]
    if q.shape[0] != n:
        raise ValueError("A and Q must have matching shapes")
    if operator_norm(q - q.T) > SYMMETRY_TOL * (1.0 + operator_norm(q)):
        raise NotSymmetric("Q must be symmetric")
    if np.min(np.linalg.eigvalsh((q + q.T) / 2.0)) <= 0.0:
        raise ValueError("Q must be positive definite")
    if not is_hurwitz(a):
        raise NotHurwitz("coefficient matrix has an eigenvalue with Re >= 0")

    eye = np.eye(n)
    kron_sum = np.kron(eye, a.T) + np.kron(a.T, eye)
    try:
        vec_p = np.linalg.solve(kron_sum, -q.flatten(order="F"))
    except np.linalg.LinAlgError as exc:
        raise Singular("vectorized Lyapunov system is rank-deficient") from exc
    p = vec_p.reshape((n, n), order="F")
    p = (p + p.T) / 2.0
    if np.min(np.linalg.eigvalsh(p)) <= 0.0:
        raise Singular("Lyapunov solution is not positive definite")
    residual = operator_norm(a.T @ p + p @ a + q)
    if residual > 1e-10 * (1.0 + operator_norm(q)):
        raise Singular(f"Lyapunov residual too large: {residual:.3e}")
    return p


def spectral_bounds(p) -> SpectralSummary:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    p = _as_square(p)
    if operator_norm(p - p.T) > SYMMETRY_TOL * (1.0 + operator_norm(p)):
        raise NotSymmetric("matrix asymmetry exceeds tolerance")
    eigs = np.linalg.eigvalsh((p + p.T) / 2.0)
    return SpectralSummary(gamma_min=float(eigs[0]), gamma_max=float(eigs[-1]))


def build_block_P(p_u, p_v, xi_u: float, xi_v: float) -> np.ndarray:
    """Block-diagonal energy matrix diag(w_u P_u, w_v P_v) with
    w_u = xi_v/(xi_u+xi_v) and w_v = xi_u/(xi_u+xi_v).

    A vanishing weight (a fully decoupled block) is floored at
    1e-12 times the other weight so the convex combination stays defined;
    the limit is still a valid energy matrix.
    """
    p_u = _as_square(p_u)
    p_v = _as_square(p_v)
    if xi_u < 0.0 or xi_v < 0.0 or xi_u + xi_v <= 0.0:
        raise DegenerateWeights(f"weights xi_u={xi_u}, xi_v={xi_v} do not define the block matrix")
    if xi_u == 0.0:
        xi_u = 1e-12 * xi_v
    if xi_v == 0.0:
        xi_v = 1e-12 * xi_u
    total = xi_u + xi_v
    du = p_u.shape[0]
    dv = p_v.shape[0]
    p = np.zeros((du + dv, du + dv))
    p[:du, :du] = (xi_v / total) * p_u
    p[du:, du:] = (xi_u / total) * p_v
    return p


def save_matrix_text(m) -> str:
    """Serialize a matrix (or vector, written as one row) to plain text.

    First line is "rows cols"; entries follow row-major with 17
    significant digits, one matrix row per line.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError("only 1-D or 2-D arrays serialize")
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    for row in m:
        lines.append(" ".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"


def load_matrix_text(text):
    """Parse the plain-text matrix format produced by save_matrix_text."""
    tokens = text.split()
    if len(tokens) < 2:
        raise ValueError("matrix text too short")
    rows, cols = int(tokens[0]), int(tokens[1])
    entries = [float(t) for t in tokens[2:]]
    if len(entries) != rows * cols:
        raise ValueError(f"expected {rows * cols} entries, found {len(entries)}")
    return np.array(entries, dtype=float).reshape(rows, cols)
