"""Adaptive learning-rate rule: rolling distance window, best-fit-slope
diagnostic, threshold test, and the slope-statistics envelopes."""

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InsufficientPoints, UnstableRegime


@dataclass(frozen=True)
class AdaptiveHyperparams:
    """Knobs of the decay rule.

    rho: initial fast rate. sigma: threshold scale. xi: decay factor.
    n_window: diagnostic window length. lam: time-scale ratio (slow rate
    is mu**lam).
    """

    rho: float
    sigma: float
    xi: float
    n_window: int
    lam: float
    warn_short_window: bool = False

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.xi <= 1.0:
            raise ValueError("xi must exceed 1")
        if self.n_window < 3:
            raise ValueError("window length must be >= 3")
        if self.lam <= 1.0:
            raise ValueError("lam must exceed 1")
        if self.warn_short_window and self.n_window < self.rho ** (-self.lam / 2.0):
            warnings.warn(
                f"window N={self.n_window} is shorter than mu^(-lam/2) = "
                f"{self.rho ** (-self.lam / 2.0):.1f}; the flatness diagnostic "
                "may trigger during the transient",
                stacklevel=2,
            )


@dataclass
class AdaptiveState:
    """Mutable per-trajectory state owned by the decay rule."""

    mu: float
    theta_ini: np.ndarray
    window: deque = field(default_factory=deque)
    decays_so_far: int = 0

    @classmethod
    def fresh(cls, hp: AdaptiveHyperparams, theta0) -> "AdaptiveState":
        theta0 = np.asarray(theta0, dtype=float)
        return cls(
            mu=hp.rho,
            theta_ini=theta0.copy(),
            window=deque(maxlen=hp.n_window),
        )


def best_fit_slope(values, n: int) -> float:
    """Ordinary-least-squares slope of ``values`` against abscissae 1..n."""
    if n < 2:
        raise InsufficientPoints("slope needs at least two points")
    y = np.asarray(values, dtype=float)
    if y.shape != (n,):
        raise ValueError(f"expected {n} values, got shape {y.shape}")
    x = np.arange(1, n + 1, dtype=float)
    xc = x - x.mean()
    # sum of xc^2 is n(n-1)(n+1)/12 exactly
    return float(xc @ (y - y.mean()) / (n * (n - 1) * (n + 1) / 12.0))


def decay_threshold(hp: AdaptiveHyperparams, mu: float) -> float:
    return hp.sigma * mu ** (1.0 - hp.lam / 2.0) / hp.n_window


def adaptive_update(state: AdaptiveState, hp: AdaptiveHyperparams, theta_i):
    """Feed one iterate into the rule; decay the rate when the distance
    window has gone flat.

    Appends ||theta_i - theta_ini|| to the window. Once the window holds
    n_window points, the OLS slope over forward-time order is compared
    against sigma * mu^(1 - lam/2) / N; a smaller signed slope divides mu
    by xi, re-anchors theta_ini at theta_i, and clears the window (stale
    distances refer to the old anchor).

    Returns (state, decayed).
    """
    theta_i = np.asarray(theta_i, dtype=float)
    if theta_i.shape != state.theta_ini.shape:
        raise DimensionMismatch(
            f"iterate shape {theta_i.shape} vs anchor {state.theta_ini.shape}"
        )
    state.window.append(float(np.linalg.norm(theta_i - state.theta_ini)))
    if len(state.window) < hp.n_window:
        return state, False
    psi = best_fit_slope(list(state.window), hp.n_window)
    if psi < decay_threshold(hp, state.mu):
        state.mu /= hp.xi
        state.theta_ini = theta_i.copy()
        state.window.clear()
        state.decays_so_far += 1
        return state, True
    return state, False


def slope_statistics_bound(
    mu: float,
    lam: float,
    n: int,
    k2: float,
    gamma_max: float,
    c: float,
    d: float = 0.0,
):
    """Envelopes on the steady-state window slope: (mean_bound, var_bound).

    ``d`` is the distance from the initial iterate to the fixed point,
    which enters the variance envelope; the caller supplies it because
    the rule itself never knows the fixed point.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    if c <= 0.0:
        raise UnstableRegime("contraction constant c must be positive")
    amplitude_sq = 2.0 * k2 * mu ** (2.0 - lam) / (gamma_max * c)
    mean_bound = 6.0 * (n + 1) * math.sqrt(amplitude_sq) / (n * (n - 1))
    var_bound = 48.0 * (2.0 * amplitude_sq + 2.0 * d * d) / ((n - 1) * (n + 1))
    return mean_bound, var_bound
