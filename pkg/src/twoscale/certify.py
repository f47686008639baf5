"""Finite-time certification: every constant of the one-step drift
inequality and the mean-square-error envelope, grid certification of the
eigenvalue lower bound, and Monte-Carlo checks of both."""

import math
from dataclasses import dataclass

import numpy as np

from . import chainlab, matproc, tsa
from .errors import (
    AssumptionViolation,
    ConditionViolated,
    NoValidKappa2,
    UnstableRegime,
)

KAPPA2_CAP = 1e12
KAPPA2_GUARD = 1e-5  # relative head-room so off-grid points stay certified


@dataclass(frozen=True)
class DriftConstants:
    """Every scalar entering the drift inequality and the MSE envelope,
    plus the matrices needed to evaluate the energy function."""

    delta: float
    eps_tilde: float
    tau: int
    b_max: float
    gamma_min: float
    gamma_max: float
    xi_u: float
    xi_v: float
    nu: float
    kappa1: float
    kappa2: float
    eta1_tilde: float
    eta2_tilde: float
    eta2: float
    c: float
    k1: float
    k2: float
    # provenance and evaluation helpers
    epsilon: float
    alpha: float
    beta: float
    coupling_norm: float
    theta0: np.ndarray
    u0: np.ndarray
    v0: np.ndarray
    p_u: np.ndarray
    p_v: np.ndarray
    p_block: np.ndarray
    step_condition_lhs: float
    step_condition_ok: bool

    @property
    def theta0_norm(self) -> float:
        return float(np.linalg.norm(self.theta0))


def lemma_delta(epsilon: float, alpha: float, beta: float, coupling_norm: float) -> float:
    """Uniform norm bound on the stacked update matrices:
    2 (1 + ||Avv^-1 Avu|| + eps^(beta-alpha))."""
    return 2.0 * (1.0 + coupling_norm + epsilon ** (beta - alpha))


def psi_min_eigenvalue(mu, xi1: float, xi2: float, nu: float):
    """Exact smallest eigenvalue of the 2x2 coupling matrix
    [[xi2, -xi1 xi2], [-xi1 xi2, xi1 (1/mu - nu)]] / (xi1 + xi2).

    Evaluated as det / lambda_max rather than via the textbook
    half-trace-minus-discriminant form: the latter cancels
    catastrophically once 1/mu dominates, while lambda_max >= the (1,1)
    entry > 0 keeps the quotient well conditioned for every mu > 0.
    """
    mu = np.asarray(mu, dtype=float)
    total = xi1 + xi2
    a = xi2 / total
    b = -xi1 * xi2 / total
    d = (xi1 / total) * (1.0 / mu - nu)
    half_trace = 0.5 * (a + d)
    half_gap = 0.5 * (a - d)
    lam_max = half_trace + np.sqrt(half_gap**2 + b**2)
    det = a * d - b**2
    return det / lam_max


def eigen_lower_bound(xi1: float, xi2: float, nu: float, mu_max: float, n_grid: int = 10_000):
    """Certify lambda_min(Psi(mu)) >= kappa1 - kappa2 * mu on (0, mu_max].

    kappa1 = xi2/(xi1+xi2) exactly; kappa2 is the smallest constant valid
    on a geometric grid of n_grid points, inflated by a small relative
    guard so off-grid evaluations stay covered.
    """
    if xi1 <= 0.0 or xi2 <= 0.0 or nu <= 0.0:
        raise ValueError("xi1, xi2, nu must all be positive")
    if mu_max <= 0.0:
        raise ValueError("mu_max must be positive")
    if n_grid < 10_000:
        raise ValueError("grid must have at least 1e4 points")
    kappa1 = xi2 / (xi1 + xi2)
    grid = np.geomspace(mu_max * 1e-10, mu_max, n_grid)
    lam_min = psi_min_eigenvalue(grid, xi1, xi2, nu)
    required = np.max((kappa1 - lam_min) / grid)
    kappa2 = max(0.0, float(required)) * (1.0 + KAPPA2_GUARD)
    if kappa2 > KAPPA2_CAP:
        raise NoValidKappa2(
            f"kappa2 = {kappa2:.3e} exceeds {KAPPA2_CAP:.0e}; shrink mu_max"
        )
    return kappa1, kappa2


def compute_constants(
    instance: chainlab.MarkovLSAInstance,
    epsilon: float,
    alpha: float,
    beta: float,
    theta0,
    *,
    context: tsa.LyapunovContext | None = None,
) -> DriftConstants:
    """Populate every drift/envelope constant for a validated instance at
    the step-size operating point (epsilon, alpha, beta).

    theta0 is the initial iterate in the (U, Z) coordinates. Raises
    AssumptionViolation when the mixing product exceeds 1/4 or the
    contraction constant c is non-positive.
    """
    if not 0.0 < beta < alpha:
        raise ValueError("need 0 < beta < alpha")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if context is None:
        context = tsa.prepare_context(instance)
    steady = context.steady
    du = instance.dim_u

    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (instance.dim_u + instance.dim_v,):
        raise ValueError("theta0 length must equal dim_u + dim_v")
    u0 = theta0[:du]
    v0 = theta0[du:] - steady.avv_inv_avu @ u0

    coupling = steady.coupling_norm
    delta = lemma_delta(epsilon, alpha, beta, coupling)
    eps_t = epsilon**alpha * delta
    if eps_t >= 1.0:
        raise AssumptionViolation(
            f"eps_tilde = {eps_t:.4e} >= 1: mixing target undefined and "
            "eps_tilde * tau cannot reach 1/4"
        )
    tau = chainlab.mixing_time(instance.transition, eps_t)
    if eps_t * tau > 0.25:
        raise AssumptionViolation(
            f"eps_tilde * tau = {eps_t * tau:.4e} exceeds 1/4 (tau={tau})"
        )

    su = matproc.spectral_bounds(context.p_u)
    sv = matproc.spectral_bounds(context.p_v)
    gamma_max = max(su.gamma_max, sv.gamma_max)
    gamma_min = min(su.gamma_min, sv.gamma_min)

    xi_u, xi_v = context.xi_u, context.xi_v
    nu = 2.0 * matproc.operator_norm(
        context.p_v @ steady.avv_inv_avu @ steady.abar_uv
    )
    if xi_u <= 0.0 or xi_v <= 0.0 or nu <= 0.0:
        raise AssumptionViolation(
            f"degenerate coupling (xi_u={xi_u:.3e}, xi_v={xi_v:.3e}, nu={nu:.3e}): "
            "the eigenvalue certificate needs strictly positive weights"
        )
    mu_operating = epsilon ** (alpha - beta)
    kappa1, kappa2 = eigen_lower_bound(xi_u, xi_v, nu, mu_max=mu_operating)

    b_max = instance.b_max
    eta1_tilde = 10.0 * gamma_max * (1.0 + 6.0 * delta) * (1.0 + b_max)
    eta2_tilde = eta1_tilde * (1.0 + b_max) ** 2
    eta2 = (3.0 + 2.0 * coupling) * (eta2_tilde + 4.0 * (1.0 + coupling)) + 6.0 + 4.0 * coupling

    contraction = kappa1 / 2.0 - kappa2 * mu_operating
    c = contraction / gamma_max
    if c <= 0.0:
        raise AssumptionViolation(
            f"contraction constant c = {c:.4e} <= 0 at eps^(alpha-beta) = {mu_operating:.4e}"
        )

    ratio = gamma_max / gamma_min
    k1 = ratio * (1.5 * float(np.linalg.norm(theta0)) + 0.5 * b_max) ** 2
    k2 = ratio * eta2 * tau

    lhs = eta1_tilde * eps_t * tau + 2.0 * (eps_t**2 / epsilon**alpha) * gamma_max
    return DriftConstants(
        delta=delta,
        eps_tilde=eps_t,
        tau=tau,
        b_max=b_max,
        gamma_min=gamma_min,
        gamma_max=gamma_max,
        xi_u=xi_u,
        xi_v=xi_v,
        nu=nu,
        kappa1=kappa1,
        kappa2=kappa2,
        eta1_tilde=eta1_tilde,
        eta2_tilde=eta2_tilde,
        eta2=eta2,
        c=c,
        k1=k1,
        k2=k2,
        epsilon=epsilon,
        alpha=alpha,
        beta=beta,
        coupling_norm=coupling,
        theta0=theta0,
        u0=u0,
        v0=v0,
        p_u=context.p_u,
        p_v=context.p_v,
        p_block=context.p_block,
        step_condition_lhs=lhs,
        step_condition_ok=bool(lhs <= kappa1 / 2.0),
    )


def mse_bound(constants: DriftConstants, k: int, epsilon: float, alpha: float, beta: float) -> float:
    """Right-hand side of the finite-time mean-square bound at iteration k:
    geometric transient from the initial iterate plus the step-size floor."""
    if k < constants.tau:
        raise ValueError(f"bound is stated for k >= tau = {constants.tau}")
    contraction = constants.kappa1 / 2.0 - constants.kappa2 * epsilon ** (alpha - beta)
    if contraction <= 0.0:
        raise UnstableRegime(
            f"kappa1/2 - kappa2 eps^(alpha-beta) = {contraction:.4e} <= 0"
        )
    ratio = constants.gamma_max / constants.gamma_min
    u = 1.0 - (epsilon**alpha / constants.gamma_max) * contraction
    transient = (
        ratio
        * u ** (k - constants.tau)
        * (1.5 * constants.theta0_norm + 0.5 * constants.b_max) ** 2
    )
    steady = (
        epsilon ** (2.0 * beta - alpha) * ratio * constants.eta2 * constants.tau / contraction
    )
    return transient + steady


@dataclass(frozen=True)
class BoundCurve:
    ks: np.ndarray
    bounds: np.ndarray

    def to_csv(self) -> str:
        lines = ["k,bound"]
        for k, b in zip(self.ks, self.bounds):
            lines.append(f"{int(k)},{b:.17g}")
        return "\n".join(lines) + "\n"


def bound_curve(constants: DriftConstants, ks) -> BoundCurve:
    ks = np.asarray(ks, dtype=int)
    bounds = np.array(
        [
            mse_bound(constants, int(k), constants.epsilon, constants.alpha, constants.beta)
            for k in ks
        ]
    )
    return BoundCurve(ks=ks, bounds=bounds)


@dataclass(frozen=True)
class DriftReport:
    k: int
    n_samples: int
    estimate: float
    half_width: float
    rhs: float
    mean_w: float
    ok: bool

    def lines(self):
        return [
            f"one-step drift at k = {self.k} over {self.n_samples} trajectories",
            f"estimate = {self.estimate:.17g}",
            f"half_width_95 = {self.half_width:.17g}",
            f"bound_rhs = {self.rhs:.17g}",
            f"mean_energy = {self.mean_w:.17g}",
            f"ok = {self.ok}",
        ]


def drift_check(
    instance: chainlab.MarkovLSAInstance,
    constants: DriftConstants,
    k: int,
    n_samples: int,
    seed: int,
) -> DriftReport:
    """Monte-Carlo check of the one-step expected energy decrease.

    Simulates n_samples independent trajectories to iteration k, takes the
    sample mean of W(Theta_{k+1}) - W(Theta_k), and tests whether the lower
    95% confidence edge sits below the certified drift bound.
    """
    if k < constants.tau:
        raise ValueError(f"need k >= tau = {constants.tau}")
    lhs = constants.step_condition_lhs
    if not constants.step_condition_ok:
        raise ConditionViolated(
            f"step condition fails: eta1_tilde*eps_tilde*tau + 2 eps_tilde^2 "
            f"gamma_max / eps^alpha = {lhs:.4e} > kappa1/2 = {constants.kappa1 / 2.0:.4e}"
        )
    eps_a = constants.epsilon**constants.alpha
    eps_b = constants.epsilon**constants.beta

    sim = tsa.EnsembleSimulator(
        instance, n_samples, seed, u0=constants.u0, v0=constants.v0
    )
    for _ in range(k):
        sim.step(eps_a, eps_b)
    w_k = sim.lyapunov(constants.p_block)
    sim.step(eps_a, eps_b)
    w_k1 = sim.lyapunov(constants.p_block)

    diff = w_k1 - w_k
    estimate = float(diff.mean())
    half = 1.96 * float(diff.std(ddof=1)) / math.sqrt(n_samples)
    mean_w = float(w_k.mean())
    contraction = constants.kappa1 / 2.0 - constants.kappa2 * constants.epsilon ** (
        constants.alpha - constants.beta
    )
    rhs = (
        -(eps_a / constants.gamma_max) * contraction * mean_w
        + constants.epsilon ** (2.0 * constants.beta) * constants.tau * constants.eta2
    )
    return DriftReport(
        k=k,
        n_samples=n_samples,
        estimate=estimate,
        half_width=half,
        rhs=rhs,
        mean_w=mean_w,
        ok=bool(estimate - half <= rhs),
    )


@dataclass(frozen=True)
class EnvelopeReport:
    ks: np.ndarray
    mc_mean: np.ndarray
    mc_ucb: np.ndarray
    bounds: np.ndarray
    ok: bool


def envelope_check(
    instance: chainlab.MarkovLSAInstance,
    constants: DriftConstants,
    steps: int,
    n_traj: int,
    seed: int,
    *,
    stride: int = 1,
) -> EnvelopeReport:
    """Monte-Carlo mean squared coordinate norm against the certified
    envelope at every recorded k >= tau; the upper 95% confidence edge is
    what must stay below the bound."""
    result = tsa.run_ensemble(
        instance,
        tsa.Constant(mu=constants.epsilon**constants.beta, lam=constants.alpha / constants.beta),
        steps,
        n_traj,
        seed,
        u0=constants.u0,
        v0=constants.v0,
        stride=stride,
    )
    keep = result.ks >= constants.tau
    ks = result.ks[keep]
    mean = result.theta_sq_mean[keep]
    ucb = mean + 1.96 * result.theta_sq_std[keep] / math.sqrt(n_traj)
    bounds = bound_curve(constants, ks).bounds
    return EnvelopeReport(
        ks=ks, mc_mean=mean, mc_ucb=ucb, bounds=bounds, ok=bool(np.all(ucb <= bounds))
    )


def steadystate_crossover_time(constants: DriftConstants, mu: float, lam: float) -> int:
    """Iteration count at which the geometric transient falls to the
    steady-state floor for fast rate mu and time-scale ratio lam."""
    contraction = constants.kappa1 / 2.0 - constants.kappa2 * mu ** (lam - 1.0)
    c = contraction / constants.gamma_max
    if c <= 0.0:
        raise UnstableRegime(f"c = {c:.4e} <= 0 at mu = {mu}")
    rate = c * mu**lam
    if not 0.0 < rate < 1.0:
        raise ValueError(f"c * mu^lam = {rate:.4e} outside (0, 1)")
    if constants.k1 <= 0.0:
        raise ValueError("K1 must be positive")
    steady = constants.k2 * mu ** (2.0 - lam) / (constants.gamma_max * c)
    if steady >= constants.k1:
        return 0
    return max(0, math.ceil(math.log(steady / constants.k1) / math.log(1.0 - rate)))


def constants_report(constants: DriftConstants) -> str:
    """Plain-text constants dump, one name = value per line."""
    pairs = [
        ("delta", constants.delta),
        ("eps_tilde", constants.eps_tilde),
        ("tau", constants.tau),
        ("b_max", constants.b_max),
        ("gamma_min", constants.gamma_min),
        ("gamma_max", constants.gamma_max),
        ("xi_u", constants.xi_u),
        ("xi_v", constants.xi_v),
        ("nu", constants.nu),
        ("kappa1", constants.kappa1),
        ("kappa2", constants.kappa2),
        ("eta1_tilde", constants.eta1_tilde),
        ("eta2_tilde", constants.eta2_tilde),
        ("eta2", constants.eta2),
        ("c", constants.c),
        ("K1", constants.k1),
        ("K2", constants.k2),
        ("epsilon", constants.epsilon),
        ("alpha", constants.alpha),
        ("beta", constants.beta),
        ("coupling_norm", constants.coupling_norm),
        ("theta0_norm", constants.theta0_norm),
        ("step_condition_lhs", constants.step_condition_lhs),
        ("step_condition_ok", int(constants.step_condition_ok)),
    ]
    lines = ["# the step condition uses eta1_tilde in place of the lemma's eta1"]
    for name, value in pairs:
        if isinstance(value, (int, np.integer)):
            lines.append(f"{name} = {value}")
        else:
            lines.append(f"{name} = {value:.17g}")
    return "\n".join(lines) + "\n"
