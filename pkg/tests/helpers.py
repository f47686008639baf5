"""Shared test oracles and fixture builders.

Oracles here deliberately avoid the library code paths they check:
power iteration instead of eigvalsh, explicit loops instead of einsum,
and hand-rolled re-implementations of update rules.
"""

import numpy as np

from twoscale import chainlab


def power_iteration_extremes(p, iters=5000, seed=123):
    """(lambda_min, lambda_max) of a symmetric positive definite matrix via
    power iteration on P and on P^-1."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(p.shape[0])
    for _ in range(iters):
        v = p @ v
        v /= np.linalg.norm(v)
    lam_max = float(v @ p @ v)
    w = rng.standard_normal(p.shape[0])
    for _ in range(iters):
        w = np.linalg.solve(p, w)
        w /= np.linalg.norm(w)
    lam_min = float(w @ p @ w)
    return lam_min, lam_max


def sigma_max_oracle(m, iters=5000, seed=321):
    """Largest singular value via power iteration on M'M."""
    m = np.asarray(m, dtype=float)
    gram = m.T @ m
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(gram.shape[0])
    for _ in range(iters):
        nxt = gram @ v
        norm = np.linalg.norm(nxt)
        if norm == 0.0:
            return 0.0
        v = nxt / norm
    return float(np.sqrt(v @ gram @ v))


def random_hurwitz(dim, rng, margin=0.5):
    m = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    reach = max(0.0, float(np.max(np.linalg.eigvals(m).real)))
    return m - (margin + reach) * np.eye(dim)


def make_fast_mixing_instance(
    dim_u=2,
    dim_v=2,
    n_states=4,
    seed=11,
    anchor_weight=0.96,
    coupling=0.12,
    coupling_uv=None,
    coupling_vu=None,
    deviation=0.08,
    noise=0.3,
    vv_level=0.85,
    bb_level=0.8,
):
    """Hand-tuned instance with a nearly memoryless chain and weak
    cross-block coupling, so small mixing times and positive contraction
    constants hold at desk-scale step sizes.

    The transition kernel is (1-p) * ones(pi) + p * I with p small; its
    stationary law is exactly pi and the one-step TV distance to pi is
    p * (1 - pi_i) per start state.
    """
    rng = np.random.default_rng(seed)
    pi = rng.uniform(0.5, 1.5, size=n_states)
    pi /= pi.sum()
    p_self = 1.0 - anchor_weight
    transition = anchor_weight * np.tile(pi, (n_states, 1)) + p_self * np.eye(n_states)

    def centered_deviations(shape, amplitude):
        d = amplitude * rng.standard_normal((n_states,) + shape)
        return d - np.einsum("s,s...->...", pi, d)

    coupling_uv = coupling if coupling_uv is None else coupling_uv
    coupling_vu = coupling if coupling_vu is None else coupling_vu
    avv_bar = -vv_level * np.eye(dim_v) + 0.05 * rng.standard_normal((dim_v, dim_v))
    bbar_target = -bb_level * np.eye(dim_u) + 0.05 * rng.standard_normal((dim_u, dim_u))
    auv_bar = coupling_uv * rng.standard_normal((dim_u, dim_v))
    avu_bar = coupling_vu * rng.standard_normal((dim_v, dim_u))
    auu_bar = bbar_target + auv_bar @ np.linalg.solve(avv_bar, avu_bar)

    a_uu = auu_bar + centered_deviations((dim_u, dim_u), deviation)
    a_uv = auv_bar + centered_deviations((dim_u, dim_v), deviation)
    a_vu = avu_bar + centered_deviations((dim_v, dim_u), deviation)
    a_vv = avv_bar + centered_deviations((dim_v, dim_v), deviation)

    b_u = noise * rng.standard_normal((n_states, dim_u))
    b_v = noise * rng.standard_normal((n_states, dim_v))

    instance = chainlab.MarkovLSAInstance(
        transition=transition,
        a_uu=a_uu,
        a_uv=a_uv,
        a_vu=a_vu,
        a_vv=a_vv,
        b_u=b_u,
        b_v=b_v,
    )
    steady = chainlab.steady_state_means(instance)
    worst = max(chainlab.block_norm_maxima(instance, steady).values())
    if worst > 0.999:
        scale = 0.999 / worst
        instance = chainlab.MarkovLSAInstance(
            transition=transition,
            a_uu=scale * a_uu,
            a_uv=scale * a_uv,
            a_vu=scale * a_vu,
            a_vv=scale * a_vv,
            b_u=b_u,
            b_v=b_v,
        )
    centered, _ = chainlab.center_offsets(instance)
    return centered
