"""Experiment harness: plain-text configs, seeded multi-run execution for
both synthetic instances and the RL benchmarks, schedule comparison, and
deterministic CSV emission."""

import configparser
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import adapt, certify, chainlab, rl, tsa
from .errors import AssumptionViolation, ConfigInvalid, MismatchedConfigs, UnstableRegime
from .rngs import make_rng

RL_TARGETS = {rl.MOUNTAIN_CAR: rl.mountain_car, rl.INVERTED_PENDULUM: rl.inverted_pendulum}
_EVAL_STREAM_BASE = 1_000


@dataclass(frozen=True)
class ExperimentConfig:
    target: str
    schedule: object
    eval_every: int
    runs: int = 1
    base_seed: int = 0
    output: str = ""
    episodes: int = 0
    steps_per_episode: int = 0
    test_episodes: int = 0
    discount: float = 0.95
    fourier_order: int = 3
    pendulum_cost_form: str = "squared_rate"
    episode_log: str = ""
    steps: int = 0
    record_stride: int = 1
    u0: np.ndarray | None = None
    v0: np.ndarray | None = None
    raw: str = ""

    @property
    def is_rl(self) -> bool:
        return self.target in RL_TARGETS

    def env_spec(self) -> rl.EnvSpec:
        if self.target == rl.MOUNTAIN_CAR:
            return rl.mountain_car(self.steps_per_episode, self.discount)
        return rl.inverted_pendulum(
            self.steps_per_episode, self.discount, self.pendulum_cost_form
        )


def _build_schedule(section) -> object:
    kind = section.get("kind", "").strip().lower()
    try:
        if kind == "constant":
            return tsa.Constant(mu=section.getfloat("mu"), lam=section.getfloat("lambda"))
        if kind == "polynomial":
            return tsa.PolynomialDecay(
                rho0=section.getfloat("rho0"),
                alpha_exp=section.getfloat("alpha"),
                beta_exp=section.getfloat("beta"),
            )
        if kind == "adaptive":
            return tsa.Adaptive(
                adapt.AdaptiveHyperparams(
                    rho=section.getfloat("rho"),
                    sigma=section.getfloat("sigma"),
                    xi=section.getfloat("xi", 1.2),
                    n_window=section.getint("window", 200),
                    lam=section.getfloat("lambda"),
                )
            )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad [schedule] section: {exc}") from exc
    raise ConfigInvalid(f"unknown schedule kind {kind!r}")


def _parse_vector(text):
    if text is None or not text.strip():
        return None
    return np.array([float(t) for t in text.split()])


def parse_config(text: str) -> ExperimentConfig:
    """Parse the key = value / [section] experiment format."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigInvalid(f"unparseable config: {exc}") from exc
    if "experiment" not in parser or "schedule" not in parser:
        raise ConfigInvalid("config needs [experiment] and [schedule] sections")
    exp = parser["experiment"]
    target = exp.get("target", "").strip()
    if not target:
        raise ConfigInvalid("experiment.target is required")
    schedule = _build_schedule(parser["schedule"])
    try:
        config = ExperimentConfig(
            target=target,
            schedule=schedule,
            eval_every=exp.getint("eval_every"),
            runs=exp.getint("runs", 1),
            base_seed=exp.getint("base_seed", 0),
            output=exp.get("output", "").strip(),
            episodes=exp.getint("episodes", 0),
            steps_per_episode=exp.getint("steps_per_episode", 0),
            test_episodes=exp.getint("test_episodes", 0),
            discount=exp.getfloat("discount", 0.95),
            fourier_order=exp.getint("fourier_order", 3),
            pendulum_cost_form=exp.get("pendulum_cost_form", "squared_rate").strip(),
            episode_log=exp.get("episode_log", "").strip(),
            steps=exp.getint("steps", 0),
            record_stride=exp.getint("record_stride", 1),
            u0=_parse_vector(exp.get("u0", "")),
            v0=_parse_vector(exp.get("v0", "")),
            raw=text,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad [experiment] section: {exc}") from exc
    _validate_config(config)
    return config


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc


def replace_output(config: ExperimentConfig, output: str) -> ExperimentConfig:
    return replace(config, output=output)


def _validate_config(config: ExperimentConfig):
    if config.runs < 1 or config.eval_every < 1:
        raise ConfigInvalid("runs and eval_every must be >= 1")
    if config.is_rl:
        if config.episodes < 1 or config.steps_per_episode < 1 or config.test_episodes < 1:
            raise ConfigInvalid(
                "rl experiments need episodes, steps_per_episode and test_episodes >= 1"
            )
    else:
        if config.steps < 1:
            raise ConfigInvalid("synthetic experiments need steps >= 1")
        if config.record_stride < 1:
            raise ConfigInvalid("record_stride must be >= 1")
        if not os.path.exists(config.target):
            raise ConfigInvalid(f"instance file not found: {config.target}")


@dataclass
class ResultTable:
    """Aggregated metric per checkpoint plus the per-run raw matrix."""

    checkpoints: list
    per_run: np.ndarray  # shape (runs, n_checkpoints)
    seeds: list
    metric_name: str
    config_echo: str = ""

    @property
    def means(self) -> np.ndarray:
        return self.per_run.mean(axis=0)

    @property
    def stderrs(self) -> np.ndarray:
        n = self.per_run.shape[0]
        if n < 2:
            return np.zeros(self.per_run.shape[1])
        return self.per_run.std(axis=0, ddof=1) / math.sqrt(n)

    def rows(self):
        n = self.per_run.shape[0]
        return [
            (cp, float(m), float(s), n)
            for cp, m, s in zip(self.checkpoints, self.means, self.stderrs)
        ]

    def final_per_run(self) -> np.ndarray:
        return self.per_run[:, -1]

    def _comment_block(self):
        from . import __version__

        lines = [f"# twoscale {__version__}"]
        for raw_line in self.config_echo.strip().splitlines():
            lines.append(f"# {raw_line}")
        return lines

    def to_csv(self) -> str:
        lines = self._comment_block()
        lines.append(f"checkpoint,mean_{self.metric_name},stderr,runs")
        for cp, m, s, n in self.rows():
            lines.append(f"{cp},{m:.17g},{s:.17g},{n}")
        return "\n".join(lines) + "\n"

    def to_runs_csv(self) -> str:
        lines = self._comment_block()
        lines.append(f"run,seed,checkpoint,{self.metric_name}")
        for r in range(self.per_run.shape[0]):
            for j, cp in enumerate(self.checkpoints):
                lines.append(f"{r},{self.seeds[r]},{cp},{self.per_run[r, j]:.17g}")
        return "\n".join(lines) + "\n"


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("TWOSCALE_THREADS", "1")))
    except ValueError:
        return 1


def _rates_factory(schedule, adaptive_state=None):
    if isinstance(schedule, tsa.Adaptive):
        def rates_for(k):
            return schedule_mu_rates(schedule.hp.lam, adaptive_state.mu)
        return rates_for
    return lambda k: tsa.schedule_rates(schedule, k)


def schedule_mu_rates(lam, mu):
    return mu**lam, mu


def _rl_single_run(config: ExperimentConfig, seed: int, log_episodes: bool = False):
    spec = config.env_spec()
    basis = rl.fourier_basis(spec, config.fourier_order)
    weights = rl.TdcWeights.zeros(basis.n_features)
    train_rng = make_rng(seed, stream=0)

    adaptive_state = None
    if isinstance(config.schedule, tsa.Adaptive):
        adaptive_state = adapt.AdaptiveState.fresh(config.schedule.hp, weights.theta)
    rates_for = _rates_factory(config.schedule, adaptive_state)

    episode_rows = [] if log_episodes else None
    checkpoints = [0]
    metrics = []

    def evaluate(index):
        eval_rng = make_rng(seed, stream=_EVAL_STREAM_BASE + index)
        return rl.neu(
            weights,
            spec,
            basis,
            rl.random_policy,
            spec.discount,
            config.test_episodes,
            eval_rng,
        )

    metrics.append(evaluate(0))
    k_global = 0
    for episode in range(1, config.episodes + 1):
        k_global = rl.train_episode(
            spec,
            basis,
            weights,
            rl.random_policy,
            rates_for,
            train_rng,
            k_start=k_global,
            log=episode_rows,
            episode_index=episode,
        )
        if adaptive_state is not None:
            adapt.adaptive_update(adaptive_state, config.schedule.hp, weights.theta)
        if episode % config.eval_every == 0:
            checkpoints.append(episode)
            metrics.append(evaluate(len(metrics)))
    return checkpoints, metrics, episode_rows


def _rl_worker(payload):
    config, seed = payload
    checkpoints, metrics, _ = _rl_single_run(config, seed)
    return checkpoints, metrics


def _synth_checkpoints(config) -> list:
    cps = list(range(0, config.steps + 1, config.eval_every))
    if cps[-1] != config.steps:
        cps.append(config.steps)
    return cps


def _run_synth_batch(instance, config: ExperimentConfig, seeds):
    checkpoints = _synth_checkpoints(config)
    checkpoint_set = set(checkpoints)
    sim = tsa.EnsembleSimulator(
        instance, len(seeds), seeds, u0=config.u0, v0=config.v0
    )
    adaptive = None
    if isinstance(config.schedule, tsa.Adaptive):
        adaptive = tsa._BatchAdaptive(config.schedule.hp, sim.theta())

    per_run = np.empty((len(seeds), len(checkpoints)))
    col = 0
    if 0 in checkpoint_set:
        per_run[:, 0] = sim.theta_sq()
        col = 1
    for i in range(config.steps):
        if adaptive is not None:
            ea, eb = schedule_mu_rates(config.schedule.hp.lam, adaptive.mu)
        else:
            ea, eb = tsa.schedule_rates(config.schedule, i)
        sim.step(ea, eb)
        if adaptive is not None and sim.k % config.record_stride == 0:
            adaptive.update(sim.theta())
        if sim.k in checkpoint_set:
            per_run[:, col] = sim.theta_sq()
            col += 1
    return checkpoints, per_run


def run_experiment(config: ExperimentConfig) -> ResultTable:
    """Execute every seeded run of the configured experiment and aggregate
    the checkpoint metric across runs in run-index order.

    RL targets train TDC under the configured schedule and measure the
    norm of the expected TD update at each checkpoint; synthetic targets
    drive the linear recursion and measure the squared distance to the
    fixed point. The adaptive rule consumes one iterate per episode for
    RL targets and one per record_stride iterations for synthetic ones.
    """
    seeds = [config.base_seed + r for r in range(config.runs)]
    if config.is_rl:
        workers = min(_worker_count(), config.runs)
        payloads = [(config, seed) for seed in seeds]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(_rl_worker, payloads))
        else:
            outcomes = [_rl_worker(p) for p in payloads]
        checkpoints = outcomes[0][0]
        per_run = np.array([metrics for _, metrics in outcomes])
        metric_name = "neu"
        if config.episode_log:
            _, _, episode_rows = _rl_single_run(config, seeds[0], log_episodes=True)
            _write_episode_log(config, episode_rows)
    else:
        instance = chainlab.load_instance_text(_read(config.target))
        checkpoints, per_run = _run_synth_batch(instance, config, seeds)
        metric_name = "theta_sq"
    return ResultTable(
        checkpoints=checkpoints,
        per_run=per_run,
        seeds=seeds,
        metric_name=metric_name,
        config_echo=config.raw,
    )


def _read(path):
    with open(path) as fh:
        return fh.read()


def _write_episode_log(config, episode_rows):
    spec = config.env_spec()
    state_dim = 2
    headers = ["episode", "step"] + [f"state{i}" for i in range(state_dim)] + ["action", "cost"]
    lines = [",".join(headers)]
    for episode, step_idx, state, action, cost in episode_rows:
        state_txt = ",".join(f"{s:.17g}" for s in np.asarray(state, dtype=float))
        lines.append(f"{episode},{step_idx},{state_txt},{action:.17g},{cost:.17g}")
    with open(config.episode_log, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class ComparisonReport:
    seeds: list
    final_a: np.ndarray
    final_b: np.ndarray
    metric_name: str
    config_echo_a: str = ""
    config_echo_b: str = ""

    @property
    def diffs(self) -> np.ndarray:
        return self.final_a - self.final_b

    @property
    def mean_diff(self) -> float:
        return float(self.diffs.mean())

    @property
    def a_better(self) -> int:
        return int(np.sum(self.diffs < 0.0))

    @property
    def b_better(self) -> int:
        return int(np.sum(self.diffs > 0.0))

    @property
    def ties(self) -> int:
        return int(np.sum(self.diffs == 0.0))

    @property
    def a_no_worse_fraction(self) -> float:
        return float(np.mean(self.diffs <= 0.0))

    def to_csv(self) -> str:
        from . import __version__

        lines = [
            f"# twoscale {__version__}",
            f"# paired comparison on final-checkpoint {self.metric_name} (lower is better)",
            f"# mean_diff = {self.mean_diff:.17g}",
            f"# a_better = {self.a_better}, b_better = {self.b_better}, ties = {self.ties}",
            f"run,seed,{self.metric_name}_a,{self.metric_name}_b,diff",
        ]
        for r, seed in enumerate(self.seeds):
            lines.append(
                f"{r},{seed},{self.final_a[r]:.17g},{self.final_b[r]:.17g},"
                f"{self.diffs[r]:.17g}"
            )
        return "\n".join(lines) + "\n"


def compare_schedules(config_a: ExperimentConfig, config_b: ExperimentConfig) -> ComparisonReport:
    """Paired final-checkpoint comparison of two schedules on the same
    target, same run count, and same per-run seeds."""
    same_shape = (
        config_a.target == config_b.target
        and config_a.runs == config_b.runs
        and config_a.base_seed == config_b.base_seed
        and config_a.eval_every == config_b.eval_every
        and config_a.episodes == config_b.episodes
        and config_a.steps == config_b.steps
        and config_a.steps_per_episode == config_b.steps_per_episode
    )
    if not same_shape:
        raise MismatchedConfigs(
            "paired comparison requires identical target, runs, seeds and horizons"
        )
    table_a = run_experiment(config_a)
    table_b = run_experiment(config_b)
    return ComparisonReport(
        seeds=table_a.seeds,
        final_a=table_a.final_per_run(),
        final_b=table_b.final_per_run(),
        metric_name=table_a.metric_name,
        config_echo_a=config_a.raw,
        config_echo_b=config_b.raw,
    )


@dataclass
class SynthBoundRow:
    mu: float
    tail_mse: float
    bound_final: float
    bound_steady: float
    note: str = ""


@dataclass
class SynthBoundResult:
    rows: list
    loglog_slope: float
    config_echo: str = ""

    def to_csv(self) -> str:
        from . import __version__

        lines = [
            f"# twoscale {__version__}",
            f"# loglog_slope_tail_mse_vs_mu = {self.loglog_slope:.17g}",
            "mu,tail_mse,bound_final,bound_steady,note",
        ]
        for row in self.rows:
            lines.append(
                f"{row.mu:.17g},{row.tail_mse:.17g},{row.bound_final:.17g},"
                f"{row.bound_steady:.17g},{row.note}"
            )
        return "\n".join(lines) + "\n"


def synth_bound_experiment(
    instance: chainlab.MarkovLSAInstance,
    mu_grid,
    lam: float,
    steps: int,
    runs: int,
    seed: int,
    *,
    u0=None,
    v0=None,
    tail_fraction: float = 0.1,
) -> SynthBoundResult:
    """Tail-averaged empirical MSE per fast rate, side by side with the
    certified envelope where the operating point admits one.

    The empirical side never needs the certificate, so rates outside the
    certifiable region still produce a tail MSE with the bound columns
    marked nan.
    """
    context = tsa.prepare_context(instance)
    rows = []
    stride = max(1, steps // 1000)
    for mu in mu_grid:
        schedule = tsa.Constant(mu=float(mu), lam=lam)
        seeds = [seed + r for r in range(runs)]
        sim = tsa.EnsembleSimulator(instance, runs, seeds, u0=u0, v0=v0, steady=context.steady)
        tail_start = int(steps * (1.0 - tail_fraction))
        tail_sum = 0.0
        tail_count = 0
        ea, eb = schedule_mu_rates(lam, float(mu))
        for _ in range(steps):
            sim.step(ea, eb)
            if sim.k > tail_start and sim.k % stride == 0:
                tail_sum += float(sim.theta_sq().mean())
                tail_count += 1
        tail_mse = tail_sum / max(1, tail_count)

        du, dv = instance.dim_u, instance.dim_v
        u_init = np.zeros(du) if u0 is None else np.asarray(u0, dtype=float)
        v_init = np.zeros(dv) if v0 is None else np.asarray(v0, dtype=float)
        theta0 = tsa.theta_view(context.steady, u_init, v_init).Theta
        try:
            constants = certify.compute_constants(
                instance, float(mu), lam, 1.0, theta0, context=context
            )
            contraction = constants.kappa1 / 2.0 - constants.kappa2 * float(mu) ** (lam - 1.0)
            ratio = constants.gamma_max / constants.gamma_min
            steady_term = (
                float(mu) ** (2.0 - lam) * ratio * constants.eta2 * constants.tau / contraction
            )
            bound_final = certify.mse_bound(constants, steps, float(mu), lam, 1.0)
            rows.append(SynthBoundRow(float(mu), tail_mse, bound_final, steady_term))
        except (AssumptionViolation, UnstableRegime) as exc:
            rows.append(
                SynthBoundRow(float(mu), tail_mse, math.nan, math.nan, note=str(exc))
            )
    mus = np.array([row.mu for row in rows])
    mses = np.array([row.tail_mse for row in rows])
    slope = math.nan
    if len(rows) >= 2 and np.all(mses > 0.0):
        slope = float(np.polyfit(np.log(mus), np.log(mses), 1)[0])
    return SynthBoundResult(rows=rows, loglog_slope=slope)


# ---------------------------------------------------------------------------
# Presets: the benchmark protocol with its published hyperparameters, plus
# desk-scale variants that finish quickly.

_RL_PRESET_BASE = """\
[experiment]
target = {target}
episodes = {episodes}
steps_per_episode = {steps_per_episode}
eval_every = {eval_every}
test_episodes = {test_episodes}
runs = {runs}
base_seed = {base_seed}
discount = 0.95
fourier_order = 3

[schedule]
{schedule}
"""

_SCHEDULES = {
    ("mountain_car", "polynomial"): "kind = polynomial\nrho0 = 0.05\nalpha = 0.99\nbeta = 0.66",
    ("mountain_car", "adaptive"): (
        "kind = adaptive\nrho = 0.1\nsigma = 0.001\nxi = 1.2\nwindow = 200\nlambda = 1.5"
    ),
    ("inverted_pendulum", "polynomial"): "kind = polynomial\nrho0 = 0.2\nalpha = 0.99\nbeta = 0.66",
    ("inverted_pendulum", "adaptive"): (
        "kind = adaptive\nrho = 0.05\nsigma = 0.01\nxi = 1.2\nwindow = 200\nlambda = 1.5"
    ),
}

_ENV_SHAPES = {
    "mountain_car": dict(steps_per_episode=200, runs=50),
    "inverted_pendulum": dict(steps_per_episode=50, runs=100),
}


def _preset_text(env, schedule_kind, desk):
    shape = _ENV_SHAPES[env]
    return _RL_PRESET_BASE.format(
        target=env,
        episodes=1_000 if desk else 10_000,
        steps_per_episode=shape["steps_per_episode"],
        eval_every=200 if desk else 1_000,
        test_episodes=200 if desk else 1_000,
        runs=10 if desk else shape["runs"],
        base_seed=0,
        schedule=_SCHEDULES[(env, schedule_kind)],
    )


def preset_names():
    names = []
    for env in _ENV_SHAPES:
        for kind in ("polynomial", "adaptive"):
            env_slug = env.replace("_", "-")
            names.append(f"{env_slug}-{kind}")
            names.append(f"{env_slug}-{kind}-desk")
    return names


def preset_config_text(name: str) -> str:
    for env in _ENV_SHAPES:
        for kind in ("polynomial", "adaptive"):
            env_slug = env.replace("_", "-")
            if name == f"{env_slug}-{kind}":
                return _preset_text(env, kind, desk=False)
            if name == f"{env_slug}-{kind}-desk":
                return _preset_text(env, kind, desk=True)
    raise ConfigInvalid(f"unknown preset {name!r}; available: {', '.join(preset_names())}")


def preset_config(name: str, overrides: dict | None = None) -> ExperimentConfig:
    text = preset_config_text(name)
    if overrides:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.read_string(text)
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if section not in parser:
                parser.add_section(section)
            parser[section][key] = str(value)
        buf = io.StringIO()
        parser.write(buf)
        text = buf.getvalue()
    return parse_config(text)


# ---------------------------------------------------------------------------
# Sweeps


def sweep(base_config_text: str, runs_override: int | None = None):
    """Grid search over the values listed in the [sweep] section.

    Each sweep key is section.key with whitespace-separated candidate
    values; the cartesian product is executed and the final-checkpoint
    mean metric reported per combination.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(base_config_text)
    except configparser.Error as exc:
        raise ConfigInvalid(f"unparseable config: {exc}") from exc
    if "sweep" not in parser:
        raise ConfigInvalid("sweep mode needs a [sweep] section")
    grid_keys = []
    grid_values = []
    for dotted, values in parser["sweep"].items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigInvalid(f"sweep key {dotted!r} must look like section.key")
        grid_keys.append((section, key))
        grid_values.append(values.split())
    parser.remove_section("sweep")

    combos = [[]]
    for values in grid_values:
        combos = [prev + [v] for prev in combos for v in values]

    results = []
    for combo in combos:
        for (section, key), value in zip(grid_keys, combo):
            parser[section][key] = value
        if runs_override is not None:
            parser["experiment"]["runs"] = str(runs_override)
        buf = io.StringIO()
        parser.write(buf)
        config = parse_config(buf.getvalue())
        table = run_experiment(config)
        results.append((dict(zip(["%s.%s" % k for k in grid_keys], combo)), table))
    return results


def sweep_csv(results) -> str:
    from . import __version__

    if not results:
        return "# empty sweep\n"
    param_names = list(results[0][0].keys())
    lines = [f"# twoscale {__version__}", ",".join(param_names + ["final_mean", "final_stderr"])]
    for params, table in results:
        final_mean = float(table.means[-1])
        final_err = float(table.stderrs[-1])
        lines.append(
            ",".join([params[p] for p in param_names] + [f"{final_mean:.17g}", f"{final_err:.17g}"])
        )
    return "\n".join(lines) + "\n"
