"""Two time-scale stochastic approximation engine: single-trajectory
stepping, pluggable step-size schedules, energy-function accounting, and
a vectorized ensemble simulator for Monte Carlo work."""

import math
from dataclasses import dataclass, field

import numpy as np

from . import adapt, chainlab, matproc
from .errors import DimensionMismatch
from .rngs import make_rng

TRACE_HEADER = "k,eps_alpha,eps_beta,theta_sq,lyapunov,dist_ref"


# ---------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class Constant:
    """Fixed rates: fast rate mu, slow rate mu**lam."""

    mu: float
    lam: float

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise ValueError("mu must lie in (0, 1)")
        if self.lam <= 1.0:
            raise ValueError("lam must exceed 1")


@dataclass(frozen=True)
class PolynomialDecay:
    """rho0/(k+1)**alpha_exp on the slow axis, rho0/(k+1)**beta_exp on the fast."""

    rho0: float
    alpha_exp: float
    beta_exp: float

    def __post_init__(self):
        if self.rho0 <= 0.0:
            raise ValueError("rho0 must be positive")
        if not self.alpha_exp > self.beta_exp > 0.0:
            raise ValueError("need alpha_exp > beta_exp > 0")


@dataclass(frozen=True)
class Adaptive:
    """Rates owned by the adaptive rule; mu starts at hp.rho and only decays."""

    hp: adapt.AdaptiveHyperparams


Schedule = Constant | PolynomialDecay | Adaptive


def schedule_rates(schedule, k: int, mu_current: float | None = None):
    """(eps_alpha_k, eps_beta_k) for iteration k.

    For Adaptive schedules the live rate is owned by the adapt module's
    state; pass it as mu_current (defaults to the initial rho).
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if isinstance(schedule, Constant):
        return schedule.mu**schedule.lam, schedule.mu
    if isinstance(schedule, PolynomialDecay):
        base = float(k + 1)
        return (
            schedule.rho0 / base**schedule.alpha_exp,
            schedule.rho0 / base**schedule.beta_exp,
        )
    if isinstance(schedule, Adaptive):
        mu = schedule.hp.rho if mu_current is None else mu_current
        return mu**schedule.hp.lam, mu
    raise TypeError(f"unknown schedule {type(schedule)!r}")


# ---------------------------------------------------------------------------
# Iterate state and coordinates


@dataclass
class IterateState:
    k: int
    U: np.ndarray
    V: np.ndarray
    chain_state: int
    rng: np.random.Generator


@dataclass(frozen=True)
class ThetaView:
    """Slow coordinates (U) and corrected fast coordinates (Z)."""

    U: np.ndarray
    Z: np.ndarray

    @property
    def Theta(self) -> np.ndarray:
        return np.concatenate([self.U, self.Z])


def theta_view(steady: chainlab.SteadyState, u, v) -> ThetaView:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return ThetaView(U=u, Z=v + steady.avv_inv_avu @ u)


def lyapunov_value(theta, p) -> float:
    """Quadratic energy theta' P theta."""
    vec = theta.Theta if isinstance(theta, ThetaView) else np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    if p.shape != (vec.size, vec.size):
        raise DimensionMismatch(f"P shape {p.shape} vs theta length {vec.size}")
    return float(vec @ p @ vec)


def _cumulative_rows(transition):
    """Row-wise cumulative transition probabilities with the last entry
    pinned to exactly 1.0 so a uniform draw in [0, 1) always lands in a
    valid state."""
    cum = np.cumsum(transition, axis=-1)
    cum[..., -1] = 1.0
    return cum


def _sample_next_state(cumulative_row, draw):
    return int(np.sum(cumulative_row < draw))


def step(
    instance: chainlab.MarkovLSAInstance,
    state: IterateState,
    eps_alpha: float,
    eps_beta: float,
) -> IterateState:
    """One update of the coupled recursion.

    Coefficients are evaluated at the current chain state; the chain is
    advanced afterwards by one sample from the state's random stream.
    """
    if not (0.0 < eps_alpha < 1.0 and 0.0 < eps_beta < 1.0):
        raise ValueError("step sizes must lie in (0, 1)")
    if state.U.shape != (instance.dim_u,) or state.V.shape != (instance.dim_v,):
        raise DimensionMismatch(
            f"iterate dims ({state.U.shape}, {state.V.shape}) do not match "
            f"instance ({instance.dim_u}, {instance.dim_v})"
        )
    x = state.chain_state
    u_new = state.U + eps_alpha * (
        instance.a_uu[x] @ state.U + instance.a_uv[x] @ state.V + instance.b_u[x]
    )
    v_new = state.V + eps_beta * (
        instance.a_vu[x] @ state.U + instance.a_vv[x] @ state.V + instance.b_v[x]
    )
    cum = _cumulative_rows(instance.transition[x])
    next_x = _sample_next_state(cum, state.rng.random(1)[0])
    return IterateState(
        k=state.k + 1, U=u_new, V=v_new, chain_state=next_x, rng=state.rng
    )


# ---------------------------------------------------------------------------
# Analysis context: steady state plus the block energy matrix


@dataclass(frozen=True)
class LyapunovContext:
    steady: chainlab.SteadyState
    p_u: np.ndarray
    p_v: np.ndarray
    xi_u: float
    xi_v: float
    p_block: np.ndarray


def prepare_context(instance: chainlab.MarkovLSAInstance) -> LyapunovContext:
    """Solve the two Lyapunov equations (Q = I) and assemble the weighted
    block energy matrix for a stable instance."""
    steady = chainlab.steady_state_means(instance)
    p_u = matproc.solve_lyapunov(steady.bbar, np.eye(instance.dim_u))
    p_v = matproc.solve_lyapunov(steady.abar_vv, np.eye(instance.dim_v))
    xi_u = 2.0 * matproc.operator_norm(p_u @ steady.abar_uv)
    xi_v = 2.0 * matproc.operator_norm(p_v @ steady.avv_inv_avu @ steady.bbar)
    if xi_u + xi_v > 0.0:
        p_block = matproc.build_block_P(p_u, p_v, xi_u, xi_v)
    else:
        # fully decoupled blocks: any convex split is a valid energy
        # matrix, so fall back to equal weights for trace accounting
        p_block = matproc.build_block_P(p_u, p_v, 1.0, 1.0)
    return LyapunovContext(
        steady=steady, p_u=p_u, p_v=p_v, xi_u=xi_u, xi_v=xi_v, p_block=p_block
    )


# ---------------------------------------------------------------------------
# Traces


def default_stride(steps: int) -> int:
    return 1 if steps <= 100_000 else math.ceil(steps / 100_000)


@dataclass
class Trace:
    """Per-iteration records at a fixed thinning stride."""

    stride: int
    ks: list = field(default_factory=list)
    eps_alphas: list = field(default_factory=list)
    eps_betas: list = field(default_factory=list)
    theta_sqs: list = field(default_factory=list)
    lyapunovs: list = field(default_factory=list)
    dist_refs: list = field(default_factory=list)
    decay_events: list = field(default_factory=list)

    def record(self, k, ea, eb, theta_sq, lyap, dist):
        self.ks.append(int(k))
        self.eps_alphas.append(float(ea))
        self.eps_betas.append(float(eb))
        self.theta_sqs.append(float(theta_sq))
        self.lyapunovs.append(float(lyap))
        self.dist_refs.append(float(dist))

    def to_csv(self) -> str:
        from . import __version__

        lines = [f"# twoscale {__version__}", f"# stride = {self.stride}", TRACE_HEADER]
        decay_iter = iter(sorted(self.decay_events))
        pending = next(decay_iter, None)
        for i, k in enumerate(self.ks):
            lines.append(
                f"{k},{self.eps_alphas[i]:.17g},{self.eps_betas[i]:.17g},"
                f"{self.theta_sqs[i]:.17g},{self.lyapunovs[i]:.17g},"
                f"{self.dist_refs[i]:.17g}"
            )
            while pending is not None and pending[0] <= k:
                lines.append(f"{pending[0]},decay,{pending[1]:.17g}")
                pending = next(decay_iter, None)
        while pending is not None:
            lines.append(f"{pending[0]},decay,{pending[1]:.17g}")
            pending = next(decay_iter, None)
        return "\n".join(lines) + "\n"


def run_trajectory(
    instance: chainlab.MarkovLSAInstance,
    schedule,
    steps: int,
    seed: int,
    theta_ref=None,
    *,
    u0=None,
    v0=None,
    stride: int | None = None,
    context: LyapunovContext | None = None,
) -> Trace:
    """Drive the recursion for ``steps`` iterations and record the
    energy/distance diagnostics.

    Deterministic in (instance, schedule, steps, seed). With an Adaptive
    schedule the decay rule consumes one iterate per recorded step and
    decay events land in the trace.
    """
    if context is None:
        context = prepare_context(instance)
    stride = default_stride(steps) if stride is None else max(1, int(stride))
    steady = context.steady
    d = instance.dim_u + instance.dim_v
    theta_ref = np.zeros(d) if theta_ref is None else np.asarray(theta_ref, dtype=float)
    if theta_ref.shape != (d,):
        raise DimensionMismatch("theta_ref length must equal dim_u + dim_v")
    u = np.zeros(instance.dim_u) if u0 is None else np.asarray(u0, dtype=float).copy()
    v = np.zeros(instance.dim_v) if v0 is None else np.asarray(v0, dtype=float).copy()

    rng = make_rng(seed, stream=0)
    x0 = min(int(rng.random(1)[0] * instance.n_states), instance.n_states - 1)
    state = IterateState(k=0, U=u, V=v, chain_state=x0, rng=rng)

    adaptive_state = None
    if isinstance(schedule, Adaptive):
        adaptive_state = adapt.AdaptiveState.fresh(
            schedule.hp, theta_view(steady, u, v).Theta
        )

    trace = Trace(stride=stride)

    def record(k):
        mu_now = adaptive_state.mu if adaptive_state is not None else None
        ea, eb = schedule_rates(schedule, k, mu_now)
        view = theta_view(steady, state.U, state.V)
        theta = view.Theta
        trace.record(
            k,
            ea,
            eb,
            float(theta @ theta),
            lyapunov_value(view, context.p_block),
            float(np.linalg.norm(theta - theta_ref)),
        )

    record(0)
    for i in range(steps):
        mu_now = adaptive_state.mu if adaptive_state is not None else None
        ea, eb = schedule_rates(schedule, i, mu_now)
        state = step(instance, state, ea, eb)
        k = state.k
        if k % stride == 0 or k == steps:
            record(k)
            if adaptive_state is not None:
                theta = theta_view(steady, state.U, state.V).Theta
                adaptive_state, decayed = adapt.adaptive_update(
                    adaptive_state, schedule.hp, theta
                )
                if decayed:
                    trace.decay_events.append((k, adaptive_state.mu))
    return trace


# ---------------------------------------------------------------------------
# Vectorized ensemble simulation


class EnsembleSimulator:
    """Many independent trajectories advanced in lockstep.

    ``seed`` may be a single integer (one shared counter-based stream,
    drawn in fixed batch order) or a sequence of per-trajectory seeds,
    in which case each trajectory consumes its own stream in exactly the
    same draw pattern as run_trajectory with that seed.
    """

    _CHUNK = 4096

    def __init__(self, instance, n_traj, seed, *, u0=None, v0=None, steady=None):
        self.instance = instance
        self.steady = chainlab.steady_state_means(instance) if steady is None else steady
        self.n = int(n_traj)
        du, dv = instance.dim_u, instance.dim_v
        self.du, self.dv = du, dv
        d = du + dv
        a_full = np.zeros((instance.n_states, d, d))
        a_full[:, :du, :du] = instance.a_uu
        a_full[:, :du, du:] = instance.a_uv
        a_full[:, du:, :du] = instance.a_vu
        a_full[:, du:, du:] = instance.a_vv
        self._a_full_t = np.ascontiguousarray(a_full.transpose(0, 2, 1))
        self._b_full = np.concatenate([instance.b_u, instance.b_v], axis=1)
        cum = _cumulative_rows(instance.transition)
        # flattened sorted cumulative rows: row s occupies (s, s+1], so a
        # single searchsorted resolves every trajectory's next state
        self._flat_cum = (cum + np.arange(instance.n_states)[:, None]).ravel()
        self._all_drift = np.empty((instance.n_states, self.n, d))
        self._row_idx = np.arange(self.n)

        if np.ndim(seed) == 0:
            self._rngs = None
            self.rng = make_rng(int(seed), stream=0)
        else:
            seeds = [int(s) for s in seed]
            if len(seeds) != self.n:
                raise ValueError("need one seed per trajectory")
            self._rngs = [make_rng(s, stream=0) for s in seeds]
            self._buf = np.empty((self.n, self._CHUNK))
            self._buf_pos = self._CHUNK

        w0 = np.zeros(d)
        if u0 is not None:
            w0[:du] = np.asarray(u0, dtype=float)
        if v0 is not None:
            w0[du:] = np.asarray(v0, dtype=float)
        self.W = np.tile(w0, (self.n, 1))
        draws = self._draw()
        self.x = np.minimum(
            (draws * instance.n_states).astype(np.int64), instance.n_states - 1
        )
        self.k = 0

    def _draw(self) -> np.ndarray:
        if self._rngs is None:
            return self.rng.random(self.n)
        if self._buf_pos == self._CHUNK:
            for i, rng in enumerate(self._rngs):
                self._buf[i] = rng.random(self._CHUNK)
            self._buf_pos = 0
        draws = self._buf[:, self._buf_pos]
        self._buf_pos += 1
        return draws

    def step(self, eps_alpha, eps_beta):
        np.matmul(self.W[None, :, :], self._a_full_t, out=self._all_drift)
        drift = self._all_drift[self.x, self._row_idx]
        drift += self._b_full[self.x]
        if np.ndim(eps_alpha) == 0 and np.ndim(eps_beta) == 0:
            drift[:, : self.du] *= eps_alpha
            drift[:, self.du :] *= eps_beta
        else:
            ea = np.broadcast_to(np.asarray(eps_alpha, dtype=float), (self.n,))
            eb = np.broadcast_to(np.asarray(eps_beta, dtype=float), (self.n,))
            drift[:, : self.du] *= ea[:, None]
            drift[:, self.du :] *= eb[:, None]
        self.W += drift
        draws = self._draw()
        self.x = np.searchsorted(self._flat_cum, self.x + draws) - self.x * self.instance.n_states
        self.k += 1

    def theta(self) -> np.ndarray:
        u = self.W[:, : self.du]
        z = self.W[:, self.du :] + u @ self.steady.avv_inv_avu.T
        return np.concatenate([u, z], axis=1)

    def theta_sq(self) -> np.ndarray:
        theta = self.theta()
        return np.einsum("bi,bi->b", theta, theta)

    def lyapunov(self, p_block) -> np.ndarray:
        theta = self.theta()
        return np.einsum("bi,ij,bj->b", theta, p_block, theta)


class _BatchAdaptive:
    """Vectorized per-trajectory adaptive state (ring-buffered windows)."""

    def __init__(self, hp, theta0):
        self.hp = hp
        n_traj = theta0.shape[0]
        self.mu = np.full(n_traj, hp.rho)
        self.theta_ini = theta0.copy()
        self.buf = np.zeros((n_traj, hp.n_window))
        self.count = np.zeros(n_traj, dtype=np.int64)
        self.decays = np.zeros(n_traj, dtype=np.int64)
        self.ptr = 0
        x = np.arange(1, hp.n_window + 1, dtype=float)
        xc = x - x.mean()
        self._w = xc / (xc @ xc)

    def update(self, theta):
        n_w = self.hp.n_window
        dist = np.linalg.norm(theta - self.theta_ini, axis=1)
        self.buf[:, self.ptr] = dist
        self.ptr = (self.ptr + 1) % n_w
        self.count = np.minimum(self.count + 1, n_w)
        full = self.count == n_w
        if not np.any(full):
            return
        order = (self.ptr + np.arange(n_w)) % n_w
        slopes = self.buf[:, order] @ self._w
        thresholds = self.hp.sigma * self.mu ** (1.0 - self.hp.lam / 2.0) / n_w
        trigger = full & (slopes < thresholds)
        if np.any(trigger):
            self.mu[trigger] /= self.hp.xi
            self.theta_ini[trigger] = theta[trigger]
            self.count[trigger] = 0
            self.decays[trigger] += 1


@dataclass
class EnsembleResult:
    ks: np.ndarray
    theta_sq_mean: np.ndarray
    theta_sq_std: np.ndarray
    final_theta_sq: np.ndarray
    final_mu: np.ndarray | None = None
    decays: np.ndarray | None = None

    def tail_mean(self, fraction=0.1) -> float:
        n_tail = max(1, int(len(self.ks) * fraction))
        return float(np.mean(self.theta_sq_mean[-n_tail:]))


def run_ensemble(
    instance,
    schedule,
    steps: int,
    n_traj: int,
    seed: int,
    *,
    u0=None,
    v0=None,
    stride: int = 1,
    steady=None,
) -> EnsembleResult:
    """Monte-Carlo ensemble of trajectories; records cross-trajectory
    mean and standard deviation of the squared coordinate norm at every
    ``stride`` iterations (and at 0 and the final step)."""
    sim = EnsembleSimulator(instance, n_traj, seed, u0=u0, v0=v0, steady=steady)
    adaptive = None
    if isinstance(schedule, Adaptive):
        adaptive = _BatchAdaptive(schedule.hp, sim.theta())

    ks, means, stds = [], [], []

    def record():
        tsq = sim.theta_sq()
        ks.append(sim.k)
        means.append(float(tsq.mean()))
        stds.append(float(tsq.std()))

    record()
    for i in range(steps):
        if adaptive is not None:
            ea, eb = adaptive.mu**schedule.hp.lam, adaptive.mu
        else:
            ea, eb = schedule_rates(schedule, i)
        sim.step(ea, eb)
        if sim.k % stride == 0 or sim.k == steps:
            record()
            if adaptive is not None:
                adaptive.update(sim.theta())
    return EnsembleResult(
        ks=np.asarray(ks),
        theta_sq_mean=np.asarray(means),
        theta_sq_std=np.asarray(stds),
        final_theta_sq=sim.theta_sq(),
        final_mu=None if adaptive is None else adaptive.mu.copy(),
        decays=None if adaptive is None else adaptive.decays.copy(),
    )
