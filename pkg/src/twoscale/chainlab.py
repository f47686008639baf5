"""Finite Markov chains driving the coupled linear recursion: per-state
coefficient data, stationary analysis, mixing times, assumption
validation, and random instance generation."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import matproc
from .errors import (
    AssumptionViolation,
    GenerationFailed,
    NonMixing,
    NotErgodic,
    SingularAvv,
    SingularSystem,
)
from .rngs import make_rng

ROW_SUM_TOL = 1e-12
MAX_POWER_STEPS = 1 << 20  # ~1e6
COND_LIMIT = 1e12


@dataclass(frozen=True)
class MarkovLSAInstance:
    """A finite-state chain plus per-state update coefficients.

    Arrays are stacked along the leading state axis: a_uu[x] is the
    (dim_u, dim_u) block active when the chain sits in state x, and so on.
    Instances are immutable after construction.
    """

    transition: np.ndarray
    a_uu: np.ndarray
    a_uv: np.ndarray
    a_vu: np.ndarray
    a_vv: np.ndarray
    b_u: np.ndarray
    b_v: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=float)
        n = t.shape[0]
        if t.ndim != 2 or t.shape != (n, n):
            raise ValueError("transition must be a square matrix")
        if np.any(t < 0.0):
            raise ValueError("transition entries must be non-negative")
        if np.max(np.abs(t.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise ValueError("transition rows must sum to 1")
        du = self.a_uu.shape[1]
        dv = self.a_vv.shape[1]
        shapes = {
            "a_uu": (n, du, du),
            "a_uv": (n, du, dv),
            "a_vu": (n, dv, du),
            "a_vv": (n, dv, dv),
            "b_u": (n, du),
            "b_v": (n, dv),
        }
        for name, want in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != want:
                raise ValueError(f"{name} has shape {arr.shape}, expected {want}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
        if not np.all(np.isfinite(t)):
            raise ValueError("transition has non-finite entries")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def dim_u(self) -> int:
        return self.a_uu.shape[1]

    @property
    def dim_v(self) -> int:
        return self.a_vv.shape[1]

    @property
    def b_max(self) -> float:
        return float(
            max(
                np.linalg.norm(self.b_u, axis=1).max(),
                np.linalg.norm(self.b_v, axis=1).max(),
            )
        )


@dataclass(frozen=True)
class SteadyState:
    """Stationary distribution and the stationary averages of all blocks."""

    pi: np.ndarray
    abar_uu: np.ndarray
    abar_uv: np.ndarray
    abar_vu: np.ndarray
    abar_vv: np.ndarray
    bbar_u: np.ndarray
    bbar_v: np.ndarray
    bbar: np.ndarray
    btilde_bar: np.ndarray
    avv_inv_avu: np.ndarray

    @property
    def coupling_norm(self) -> float:
        return matproc.operator_norm(self.avv_inv_avu)

    @property
    def abar_full(self) -> np.ndarray:
        top = np.hstack([self.abar_uu, self.abar_uv])
        bottom = np.hstack([self.abar_vu, self.abar_vv])
        return np.vstack([top, bottom])

    @property
    def bbar_full(self) -> np.ndarray:
        return np.concatenate([self.bbar_u, self.bbar_v])


def _total_variation(p, q):
    return 0.5 * np.abs(p - q).sum(axis=-1)


def stationary_distribution(transition) -> np.ndarray:
    """Stationary law of an irreducible aperiodic chain.

    Ergodicity is checked empirically: repeated squaring of the kernel
    must drive every row to a common limit. Raises NotErgodic if the rows
    fail to agree within 1e-13 total variation after ~1e6 steps.
    """
    t = np.asarray(transition, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError("transition must be square")
    if np.any(t < 0.0) or np.max(np.abs(t.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
        raise ValueError("transition must be row-stochastic")

    m = t.copy()
    steps = 1
    converged = False
    while steps <= MAX_POWER_STEPS:
        pi_est = m.mean(axis=0)
        if _total_variation(m, pi_est).max() < 1e-13:
            converged = True
            break
        m = m @ m
        m /= m.sum(axis=1, keepdims=True)
        steps *= 2
    if not converged:
        raise NotErgodic("k-step kernel rows did not contract to a common law")

    # Refine via the balance equations for full precision.
    n = t.shape[0]
    system = t.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        pi = np.linalg.lstsq(
            np.vstack([t.T - np.eye(n), np.ones((1, n))]),
            np.concatenate([np.zeros(n), [1.0]]),
            rcond=None,
        )[0]
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if np.max(np.abs(pi @ t - pi)) > 1e-12:
        raise NotErgodic("refined stationary law fails the balance equations")
    return pi


def _kernel_power_tv(transition, pi, powers_cache, k):
    """max-over-rows TV distance between the k-step kernel and pi."""
    n = transition.shape[0]
    result = np.eye(n)
    bit = 0
    kk = k
    while kk:
        if bit >= len(powers_cache):
            nxt = powers_cache[-1] @ powers_cache[-1]
            nxt /= nxt.sum(axis=1, keepdims=True)
            powers_cache.append(nxt)
        if kk & 1:
            result = result @ powers_cache[bit]
        kk >>= 1
        bit += 1
    return float(_total_variation(result, pi).max())


def mixing_time(transition, delta: float) -> int:
    """Smallest k >= 1 with max-row TV(k-step kernel, pi) <= delta/2.

    TV distance to stationarity is non-increasing in k, so the search
    brackets by doubling and then bisects. Raises NonMixing when no
    k <= 1e6 qualifies.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    t = np.asarray(transition, dtype=float)
    pi = stationary_distribution(t)
    target = delta / 2.0
    cache = [t]

    if _kernel_power_tv(t, pi, cache, 1) <= target:
        return 1
    lo, hi = 1, 2
    while hi <= MAX_POWER_STEPS:
        if _kernel_power_tv(t, pi, cache, hi) <= target:
            break
        lo = hi
        hi *= 2
    else:
        raise NonMixing(f"no k <= 1e6 reaches TV {target:.3e}")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _kernel_power_tv(t, pi, cache, mid) <= target:
            hi = mid
        else:
            lo = mid
    if hi > 1_000_000:
        raise NonMixing(f"smallest qualifying k = {hi} exceeds 1e6")
    return hi


def steady_state_means(instance: MarkovLSAInstance) -> SteadyState:
    """Stationary averages of every per-state block, plus the reduced
    matrices Bbar = Abar_uu - Abar_uv Abar_vv^-1 Abar_vu and its fast
    companion (identically zero)."""
    pi = stationary_distribution(instance.transition)
    abar_uu = np.einsum("s,sij->ij", pi, instance.a_uu)
    abar_uv = np.einsum("s,sij->ij", pi, instance.a_uv)
    abar_vu = np.einsum("s,sij->ij", pi, instance.a_vu)
    abar_vv = np.einsum("s,sij->ij", pi, instance.a_vv)
    bbar_u = pi @ instance.b_u
    bbar_v = pi @ instance.b_v
    if np.linalg.cond(abar_vv) > COND_LIMIT:
        raise SingularAvv(f"condition number of the fast block exceeds {COND_LIMIT:.0e}")
    avv_inv_avu = np.linalg.solve(abar_vv, abar_vu)
    bbar = abar_uu - abar_uv @ avv_inv_avu
    btilde_bar = abar_vu - abar_vv @ avv_inv_avu
    return SteadyState(
        pi=pi,
        abar_uu=abar_uu,
        abar_uv=abar_uv,
        abar_vu=abar_vu,
        abar_vv=abar_vv,
        bbar_u=bbar_u,
        bbar_v=bbar_v,
        bbar=bbar,
        btilde_bar=btilde_bar,
        avv_inv_avu=avv_inv_avu,
    )


def center_offsets(instance: MarkovLSAInstance):
    """Shift per-state offsets so the recursion's fixed point moves to 0.

    Returns (centered instance, theta_star) where theta_star solves
    Abar theta = -bbar in the original (U, V) coordinates.
    """
    steady = steady_state_means(instance)
    abar = steady.abar_full
    if np.linalg.cond(abar) > COND_LIMIT:
        raise SingularSystem("stationary mean matrix is numerically singular")
    theta_star = np.linalg.solve(abar, -steady.bbar_full)
    du = instance.dim_u
    t_u, t_v = theta_star[:du], theta_star[du:]
    b_u = instance.b_u + instance.a_uu @ t_u + instance.a_uv @ t_v
    b_v = instance.b_v + instance.a_vu @ t_u + instance.a_vv @ t_v
    centered = MarkovLSAInstance(
        transition=instance.transition,
        a_uu=instance.a_uu,
        a_uv=instance.a_uv,
        a_vu=instance.a_vu,
        a_vv=instance.a_vv,
        b_u=b_u,
        b_v=b_v,
    )
    return centered, theta_star


def per_state_reduced_blocks(instance: MarkovLSAInstance, steady: SteadyState):
    """Per-state slow/fast reduced matrices built from the stationary
    coupling gain: B(x) = A_uu(x) - A_uv(x) G and Bt(x) = A_vu(x) - A_vv(x) G
    with G = Abar_vv^-1 Abar_vu."""
    g = steady.avv_inv_avu
    b = instance.a_uu - instance.a_uv @ g
    bt = instance.a_vu - instance.a_vv @ g
    return b, bt


def block_norm_maxima(instance: MarkovLSAInstance, steady: SteadyState) -> dict:
    b, bt = per_state_reduced_blocks(instance, steady)
    families = {
        "B": b,
        "Btilde": bt,
        "A_uu": instance.a_uu,
        "A_vu": instance.a_vu,
        "A_uv": instance.a_uv,
        "A_vv": instance.a_vv,
    }
    return {
        name: max(matproc.operator_norm(m) for m in stack)
        for name, stack in families.items()
    }


def eps_tilde(epsilon: float, alpha: float, beta: float, coupling_norm: float) -> float:
    return 2.0 * epsilon**alpha * (1.0 + coupling_norm + epsilon ** (beta - alpha))


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    ok: bool
    detail: str


@dataclass
class AssumptionReport:
    checks: list = field(default_factory=list)
    eps_tilde: float = math.nan
    tau: int | None = None
    steady: SteadyState | None = None

    def add(self, name, ok, detail):
        self.checks.append(AssumptionCheck(name, bool(ok), detail))

    @property
    def all_ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def lines(self):
        out = []
        for c in self.checks:
            out.append(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail}")
        return out


def validate_assumptions(
    instance: MarkovLSAInstance, epsilon: float, alpha: float, beta: float
) -> AssumptionReport:
    """Check every standing assumption for the given step-size regime.

    Failures are carried in the report rather than raised, so callers can
    inspect exactly which requirement broke.
    """
    if not 0.0 < beta < alpha:
        raise ValueError("need 0 < beta < alpha")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")

    report = AssumptionReport()
    try:
        steady = steady_state_means(instance)
    except (NotErgodic, SingularAvv) as exc:
        report.add("a1_limits", False, f"stationary averages unavailable: {exc}")
        return report
    report.steady = steady
    report.add("a1_limits", True, "stationary averages exist (ergodic chain)")

    b_scale = 1.0 + instance.b_max
    bbar_norm = float(np.linalg.norm(steady.bbar_full))
    report.add(
        "a1_centered",
        bbar_norm <= 1e-10 * b_scale,
        f"||bbar|| = {bbar_norm:.3e}",
    )

    norms = block_norm_maxima(instance, steady)
    worst = max(norms.values())
    detail = ", ".join(f"{k}={v:.6f}" for k, v in norms.items())
    report.add("a2_bounded", worst <= 1.0 + 1e-9, detail + f"; b_max={instance.b_max:.6f}")

    cond_ok = np.linalg.cond(steady.abar_vv) <= COND_LIMIT
    vv_hurwitz = matproc.is_hurwitz(steady.abar_vv)
    b_hurwitz = matproc.is_hurwitz(steady.bbar)
    report.add(
        "a3a_hurwitz",
        cond_ok and vv_hurwitz and b_hurwitz,
        f"fast block invertible={cond_ok}, fast Hurwitz={vv_hurwitz}, reduced slow Hurwitz={b_hurwitz}",
    )

    delta = eps_tilde(epsilon, alpha, beta, steady.coupling_norm)
    report.eps_tilde = delta
    if delta >= 1.0:
        report.add("a3b_mixing", False, f"delta = {delta:.3e} >= 1, mixing target undefined")
        report.add("a4_step_size", False, f"eps_tilde = {delta:.3e} alone exceeds 1/4")
        return report
    try:
        tau = mixing_time(instance.transition, delta)
    except (NonMixing, NotErgodic) as exc:
        report.add("a3b_mixing", False, str(exc))
        report.add("a4_step_size", False, "mixing time unavailable")
        return report
    report.tau = tau
    report.add("a3b_mixing", True, f"tau = {tau} at delta = {delta:.6e}")

    product = delta * tau
    report.add(
        "a4_step_size",
        product <= 0.25 + 1e-12,
        f"eps_tilde * tau = {product:.6e} (limit 0.25)",
    )
    return report


def _stable_square(dim, rng, shift):
    g = 0.3 * rng.standard_normal((dim, dim)) / math.sqrt(dim)
    reach = max(0.0, float(np.max(np.linalg.eigvals(g).real)))
    return g - (shift + reach) * np.eye(dim)


def random_instance(
    dim_u: int, dim_v: int, n_states: int, seed: int, margin: float
) -> MarkovLSAInstance:
    """Generate a centered instance satisfying every standing assumption.

    Deterministic in the seed. Per-state matrices are drawn around
    stable stationary means, rescaled so all block norms stay below 1,
    and rejected until the reduced slow matrix and the fast block both
    keep spectral margins of at least ``margin``.
    """
    if dim_u < 1 or dim_v < 1 or n_states < 1:
        raise ValueError("dimensions and state count must be >= 1")
    if margin <= 0.0:
        raise ValueError("margin must be positive")
    rng = make_rng(seed, stream=0)

    for _ in range(1000):
        raw = rng.uniform(0.1, 1.0, size=(n_states, n_states))
        transition = raw / raw.sum(axis=1, keepdims=True)
        try:
            pi = stationary_distribution(transition)
        except NotErgodic:
            continue

        abar_vv = _stable_square(dim_v, rng, shift=0.6)
        bbar_target = _stable_square(dim_u, rng, shift=0.6)
        abar_uv = 0.25 * rng.standard_normal((dim_u, dim_v)) / math.sqrt(dim_v)
        abar_vu = 0.25 * rng.standard_normal((dim_v, dim_u)) / math.sqrt(dim_u)
        abar_uu = bbar_target + abar_uv @ np.linalg.solve(abar_vv, abar_vu)

        def deviations(shape, amplitude=0.1):
            d = amplitude * rng.standard_normal((n_states,) + shape)
            return d - np.einsum("s,s...->...", pi, d)

        a_uu = abar_uu + deviations((dim_u, dim_u))
        a_uv = abar_uv + deviations((dim_u, dim_v))
        a_vu = abar_vu + deviations((dim_v, dim_u))
        a_vv = abar_vv + deviations((dim_v, dim_v))

        b_u = 0.5 * rng.standard_normal((n_states, dim_u))
        b_v = 0.5 * rng.standard_normal((n_states, dim_v))

        candidate = MarkovLSAInstance(
            transition=transition,
            a_uu=a_uu,
            a_uv=a_uv,
            a_vu=a_vu,
            a_vv=a_vv,
            b_u=b_u,
            b_v=b_v,
        )
        try:
            steady = steady_state_means(candidate)
        except SingularAvv:
            continue
        worst = max(block_norm_maxima(candidate, steady).values())
        scale = 0.999 / worst
        candidate = MarkovLSAInstance(
            transition=transition,
            a_uu=scale * a_uu,
            a_uv=scale * a_uv,
            a_vu=scale * a_vu,
            a_vv=scale * a_vv,
            b_u=b_u,
            b_v=b_v,
        )
        steady = steady_state_means(candidate)
        vv_margin = -float(np.max(np.linalg.eigvals(steady.abar_vv).real))
        b_margin = -float(np.max(np.linalg.eigvals(steady.bbar).real))
        if min(vv_margin, b_margin) < margin:
            continue

        candidate, _ = center_offsets(candidate)
        if candidate.b_max > 0.9:
            shrink = 0.9 / candidate.b_max
            candidate = MarkovLSAInstance(
                transition=candidate.transition,
                a_uu=candidate.a_uu,
                a_uv=candidate.a_uv,
                a_vu=candidate.a_vu,
                a_vv=candidate.a_vv,
                b_u=shrink * candidate.b_u,
                b_v=shrink * candidate.b_v,
            )
        return candidate
    raise GenerationFailed(
        f"no admissible instance after 1000 draws (margin={margin})"
    )


def require_valid(instance, epsilon, alpha, beta) -> AssumptionReport:
    """validate_assumptions, raising AssumptionViolation on any failure."""
    report = validate_assumptions(instance, epsilon, alpha, beta)
    if not report.all_ok:
        failures = "; ".join(c.name for c in report.checks if not c.ok)
        raise AssumptionViolation(f"failed checks: {failures}")
    return report


def save_instance_text(instance: MarkovLSAInstance) -> str:
    """Serialize an instance to the sectioned plain-text format."""
    parts = ["[chain]"]
    parts.append(f"n_states = {instance.n_states}")
    parts.append(f"dim_u = {instance.dim_u}")
    parts.append(f"dim_v = {instance.dim_v}")
    parts.append("transition")
    parts.append(matproc.save_matrix_text(instance.transition).rstrip("\n"))
    for s in range(instance.n_states):
        parts.append(f"[state {s}]")
        for name, arr in (
            ("A_uu", instance.a_uu[s]),
            ("A_uv", instance.a_uv[s]),
            ("A_vu", instance.a_vu[s]),
            ("A_vv", instance.a_vv[s]),
            ("b_u", instance.b_u[s]),
            ("b_v", instance.b_v[s]),
        ):
            parts.append(name)
            parts.append(matproc.save_matrix_text(arr).rstrip("\n"))
    return "\n".join(parts) + "\n"


def load_instance_text(text: str) -> MarkovLSAInstance:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    pos = 0

    def take():
        nonlocal pos
        ln = lines[pos]
        pos += 1
        return ln

    def read_matrix():
        nonlocal pos
        dims = take().split()
        rows, cols = int(dims[0]), int(dims[1])
        entries = []
        while len(entries) < rows * cols:
            entries.extend(float(t) for t in take().split())
        return np.array(entries).reshape(rows, cols)

    if take() != "[chain]":
        raise ValueError("instance file must start with [chain]")
    scalars = {}
    while "=" in lines[pos]:
        key, _, value = take().partition("=")
        scalars[key.strip()] = int(value)
    if take() != "transition":
        raise ValueError("expected the transition block")
    transition = read_matrix()

    n = scalars["n_states"]
    blocks = {k: [] for k in ("A_uu", "A_uv", "A_vu", "A_vv", "b_u", "b_v")}
    for s in range(n):
        if take() != f"[state {s}]":
            raise ValueError(f"expected section [state {s}]")
        for name in ("A_uu", "A_uv", "A_vu", "A_vv", "b_u", "b_v"):
            if take() != name:
                raise ValueError(f"expected block {name} in state {s}")
            blocks[name].append(read_matrix())

    return MarkovLSAInstance(
        transition=transition,
        a_uu=np.stack(blocks["A_uu"]),
        a_uv=np.stack(blocks["A_uv"]),
        a_vu=np.stack(blocks["A_vu"]),
        a_vv=np.stack(blocks["A_vv"]),
        b_u=np.stack([b[0] for b in blocks["b_u"]]),
        b_v=np.stack([b[0] for b in blocks["b_v"]]),
    )
