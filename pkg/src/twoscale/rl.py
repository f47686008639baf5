"""Policy evaluation benchmark pieces: the two classic-control
environments, cosine feature bases, the gradient-corrected TD update, and
the norm-of-expected-update metric."""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidAction

MOUNTAIN_CAR = "mountain_car"
INVERTED_PENDULUM = "inverted_pendulum"

_PENDULUM_G = 10.0
_PENDULUM_M = 1.0
_PENDULUM_L = 1.0
_PENDULUM_DT = 0.05
_PENDULUM_MAX_SPEED = 8.0
_PENDULUM_MAX_TORQUE = 2.0


@dataclass(frozen=True)
class EnvSpec:
    """Environment description: bounds, episode cap, and discount."""

    kind: str
    max_episode_steps: int
    discount: float = 0.95
    # "squared_rate" penalizes the squared angular velocity; "literal_rate"
    # uses a linear velocity term instead.
    pendulum_cost_form: str = "squared_rate"

    def __post_init__(self):
        if self.kind not in (MOUNTAIN_CAR, INVERTED_PENDULUM):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.pendulum_cost_form not in ("squared_rate", "literal_rate"):
            raise ValueError("pendulum_cost_form must be squared_rate or literal_rate")

    @property
    def obs_low(self) -> np.ndarray:
        if self.kind == MOUNTAIN_CAR:
            return np.array([-1.2, -0.07])
        return np.array([-1.0, -1.0, -_PENDULUM_MAX_SPEED])

    @property
    def obs_high(self) -> np.ndarray:
        if self.kind == MOUNTAIN_CAR:
            return np.array([0.6, 0.07])
        return np.array([1.0, 1.0, _PENDULUM_MAX_SPEED])

    @property
    def obs_dim(self) -> int:
        return self.obs_low.size


def mountain_car(max_episode_steps=200, discount=0.95) -> EnvSpec:
    return EnvSpec(kind=MOUNTAIN_CAR, max_episode_steps=max_episode_steps, discount=discount)


def inverted_pendulum(max_episode_steps=50, discount=0.95, cost_form="squared_rate") -> EnvSpec:
    return EnvSpec(
        kind=INVERTED_PENDULUM,
        max_episode_steps=max_episode_steps,
        discount=discount,
        pendulum_cost_form=cost_form,
    )


def env_reset(spec: EnvSpec, rng) -> np.ndarray:
    if spec.kind == MOUNTAIN_CAR:
        return np.array([rng.uniform(-0.6, 0.4), 0.0])
    return np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)])


def env_observe(spec: EnvSpec, state) -> np.ndarray:
    if spec.kind == MOUNTAIN_CAR:
        return np.asarray(state, dtype=float)
    theta, theta_dot = state
    return np.array([math.cos(theta), math.sin(theta), theta_dot])


def _wrap_angle(theta):
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


def env_step(spec: EnvSpec, state, action, rng=None):
    """Advance one step; returns (state', cost, done).

    Mountain Car: discrete push in {0,1,2}, +1 cost until the goal
    position 0.5 is reached. Inverted Pendulum: torque in [-2, 2],
    quadratic state cost, episodes never terminate early.
    """
    if spec.kind == MOUNTAIN_CAR:
        if action not in (0, 1, 2):
            raise InvalidAction(f"mountain car action must be 0, 1 or 2, got {action!r}")
        position, velocity = state
        velocity = velocity + 0.001 * (action - 1) - 0.0025 * math.cos(3.0 * position)
        velocity = min(max(velocity, -0.07), 0.07)
        position = position + velocity
        position = min(max(position, -1.2), 0.6)
        if position <= -1.2 and velocity < 0.0:
            velocity = 0.0
        done = position >= 0.5
        cost = 0.0 if done else 1.0
        return np.array([position, velocity]), cost, done

    torque = float(action)
    if not math.isfinite(torque) or abs(torque) > _PENDULUM_MAX_TORQUE:
        raise InvalidAction(f"pendulum torque must lie in [-2, 2], got {action!r}")
    theta, theta_dot = state
    if spec.pendulum_cost_form == "squared_rate":
        cost = _wrap_angle(theta) ** 2 + 0.1 * theta_dot**2 + 0.001 * torque**2
    else:
        cost = _wrap_angle(theta) ** 2 + 0.1 * theta_dot + 0.001 * torque**2
    accel = (
        3.0 * _PENDULUM_G / (2.0 * _PENDULUM_L) * math.sin(theta)
        + 3.0 / (_PENDULUM_M * _PENDULUM_L**2) * torque
    )
    theta_dot = theta_dot + accel * _PENDULUM_DT
    theta_dot = min(max(theta_dot, -_PENDULUM_MAX_SPEED), _PENDULUM_MAX_SPEED)
    theta = _wrap_angle(theta + theta_dot * _PENDULUM_DT)
    return np.array([theta, theta_dot]), cost, False


def random_policy(spec: EnvSpec, rng):
    """The evaluation policy: random left/right push for the car, uniform
    torque for the pendulum."""
    if spec.kind == MOUNTAIN_CAR:
        return 0 if rng.random() < 0.5 else 2
    return rng.uniform(-_PENDULUM_MAX_TORQUE, _PENDULUM_MAX_TORQUE)


@dataclass(frozen=True)
class FourierBasis:
    """Cosine features cos(pi * c . xbar) over all integer coefficient
    vectors c in {0..order}^d, with xbar the observation scaled to [0,1]^d."""

    order: int
    low: np.ndarray
    high: np.ndarray
    coeffs: np.ndarray = field(init=False, default=None)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        d = self.low.size
        coeffs = np.array(
            list(itertools.product(range(self.order + 1), repeat=d)), dtype=float
        )
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_features(self) -> int:
        return self.coeffs.shape[0]


def fourier_basis(spec: EnvSpec, order: int = 3) -> FourierBasis:
    return FourierBasis(order=order, low=spec.obs_low, high=spec.obs_high)


def features(basis: FourierBasis, observation) -> np.ndarray:
    obs = np.asarray(observation, dtype=float)
    xbar = np.clip((obs - basis.low) / (basis.high - basis.low), 0.0, 1.0)
    return np.cos(math.pi * (basis.coeffs @ xbar))


@dataclass
class TdcWeights:
    """Slow value weights and fast correction weights."""

    U: np.ndarray
    V: np.ndarray

    @classmethod
    def zeros(cls, n_features: int) -> "TdcWeights":
        return cls(U=np.zeros(n_features), V=np.zeros(n_features))

    def copy(self) -> "TdcWeights":
        return TdcWeights(U=self.U.copy(), V=self.V.copy())

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.U, self.V])


def td_error(weights: TdcWeights, phi_k, phi_k1, cost: float, zeta: float) -> float:
    return float(cost + zeta * (phi_k1 @ weights.U) - phi_k @ weights.U)


def tdc_step(
    weights: TdcWeights,
    phi_k,
    phi_k1,
    cost: float,
    zeta: float,
    eps_alpha: float,
    eps_beta: float,
) -> TdcWeights:
    """Gradient-corrected TD update: the value weights move along the
    corrected gradient direction, the fast weights track the projected
    TD error. The TD error uses the pre-update value weights."""
    phi_k = np.asarray(phi_k, dtype=float)
    phi_k1 = np.asarray(phi_k1, dtype=float)
    if phi_k.shape != weights.U.shape or phi_k1.shape != weights.U.shape:
        raise DimensionMismatch("feature vectors must match the weight dimension")
    if not 0.0 <= zeta < 1.0:
        raise ValueError("zeta must lie in [0, 1)")
    delta = td_error(weights, phi_k, phi_k1, cost, zeta)
    phi_dot_v = float(phi_k @ weights.V)
    u_new = weights.U + eps_alpha * (phi_k - zeta * phi_k1) * phi_dot_v
    v_new = weights.V + eps_beta * (delta - phi_dot_v) * phi_k
    return TdcWeights(U=u_new, V=v_new)


def train_episode(spec, basis, weights, policy, rates_for, rng, k_start=0, log=None, episode_index=0):
    """Run one training episode, updating the weights in place per step.

    rates_for(k) supplies (eps_alpha, eps_beta) for global iteration k.
    Terminal transitions bootstrap from zero features. Returns the global
    iteration counter after the episode.
    """
    state = env_reset(spec, rng)
    phi = features(basis, env_observe(spec, state))
    zeta = spec.discount
    k = k_start
    for step_idx in range(spec.max_episode_steps):
        action = policy(spec, rng)
        next_state, cost, done = env_step(spec, state, action, rng)
        phi_next = (
            np.zeros_like(phi) if done else features(basis, env_observe(spec, next_state))
        )
        eps_alpha, eps_beta = rates_for(k)
        updated = tdc_step(weights, phi, phi_next, cost, zeta, eps_alpha, eps_beta)
        weights.U, weights.V = updated.U, updated.V
        if log is not None:
            log.append((episode_index, step_idx, state, action, cost))
        k += 1
        if done:
            break
        state = next_state
        phi = phi_next
    return k


def neu(weights: TdcWeights, spec, basis, policy, zeta, n_test_episodes: int, rng) -> float:
    """Norm of the expected TD update: squared Euclidean norm of the
    average of delta * phi over all transitions of frozen-weight test
    episodes, pooled across episodes."""
    if n_test_episodes < 1:
        raise ValueError("need at least one test episode")
    total = np.zeros(basis.n_features)
    count = 0
    for _ in range(n_test_episodes):
        state = env_reset(spec, rng)
        phi = features(basis, env_observe(spec, state))
        for _ in range(spec.max_episode_steps):
            action = policy(spec, rng)
            next_state, cost, done = env_step(spec, state, action, rng)
            phi_next = (
                np.zeros_like(phi)
                if done
                else features(basis, env_observe(spec, next_state))
            )
            delta = td_error(weights, phi, phi_next, cost, zeta)
            total += delta * phi
            count += 1
            if done:
                break
            state = next_state
            phi = phi_next
    mean_update = total / count
    return float(mean_update @ mean_update)
