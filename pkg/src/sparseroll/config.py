"""Experiment configuration: loading, validation, canonical form.

A single YAML file pins every knob of an experiment (model source, cost,
theta grid, per-method parameters, trial counts, seeds).  Validation is
eager: dimension consistency, definiteness, horizon divisibility and the
non-pathological-sampling condition are all checked at load time so that
runs fail before any compute happens.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .benchmark import (
    BENCHMARK_H,
    BENCHMARK_HORIZON_STEPS,
    BENCHMARK_MPC_HORIZON,
    BENCHMARK_PERIOD_CANDIDATES,
    BENCHMARK_Q,
    BENCHMARK_R,
    BENCHMARK_THETA_GRID,
    BENCHMARK_TRIALS,
    BENCHMARK_TS,
    benchmark_discrete_model,
)
from .exceptions import ConfigError
from .plant import DiscreteModel
from .riccati import (
    check_pathological_sampling,
    min_eigenvalue,
    require_symmetric,
)
from .simulate import METHODS, SimConfig

MAX_LOOKAHEAD = 20  # 2^h patterns are enumerated exhaustively

_MODEL_SOURCES = ("builtin-benchmark", "matrices-from-file")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see configs/benchmark.yaml)."""

    model_source: str
    sample_period: float
    model_file: str | None
    init_mean: tuple[float, ...] | None
    q_weight: np.ndarray
    r_weight: np.ndarray
    theta_grid: tuple[float, ...]
    methods: tuple[str, ...]
    h: int
    p: int
    alpha: float
    candidates: tuple[int, ...]
    mpc_horizon: int
    mpc_penalty: float
    mpc_tol: float
    mpc_max_iter: int
    trials: int
    horizon_steps: int
    seed_base: int
    output_dir: str
    source_path: str | None = field(default=None, compare=False)

    def build_model(self) -> DiscreteModel:
        if self.model_source == "builtin-benchmark":
            return benchmark_discrete_model(ts=self.sample_period, init_mean=self.init_mean)
        base = Path(self.model_file)
        if not base.is_absolute() and self.source_path:
            base = Path(self.source_path).parent / base
        try:
            with open(base) as fh:
                raw = yaml.safe_load(fh)
            dm = DiscreteModel(
                a=np.array(raw["a"], dtype=float),
                b=np.array(raw["b"], dtype=float),
                c=np.array(raw["c"], dtype=float),
                proc_cov=np.array(raw["proc_cov"], dtype=float),
                meas_cov=np.array(raw["meas_cov"], dtype=float),
                init_mean=np.array(raw["init_mean"], dtype=float),
                init_cov=np.array(raw["init_cov"], dtype=float),
                sample_period=raw.get("sample_period"),
            )
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"model file {base}: {exc}") from exc
        if self.init_mean is not None:
            dm = dm.with_init(np.array(self.init_mean), dm.init_cov)
        return dm

    def sim_config(self, controller_kind: str = "rollout", theta: float | None = None) -> SimConfig:
        return SimConfig(
            horizon_steps=self.horizon_steps,
            trials=self.trials,
            seed_base=self.seed_base,
            q_weight=self.q_weight,
            r_weight=self.r_weight,
            controller_kind=controller_kind,
            theta=self.theta_grid[0] if theta is None else theta,
            h=self.h,
            p=self.p,
            alpha=self.alpha,
            candidates=self.candidates,
            mpc_horizon=self.mpc_horizon,
            mpc_penalty=self.mpc_penalty,
            mpc_tol=self.mpc_tol,
            mpc_max_iter=self.mpc_max_iter,
        )

    def canonical_dict(self) -> dict:
        """Normalized content for round-trip and determinism checks."""
        return {
            "model": {
                "source": self.model_source,
                "sample_period": self.sample_period,
                "file": self.model_file,
                "init_mean": list(self.init_mean) if self.init_mean is not None else None,
            },
            "cost": {
                "q": [[float(v) for v in row] for row in self.q_weight],
                "r": [[float(v) for v in row] for row in self.r_weight],
            },
            "theta": {"grid": [float(t) for t in self.theta_grid]},
            "methods": list(self.methods),
            "rollout": {"h": self.h, "p": self.p, "alpha": self.alpha},
            "periodic": {"candidates": list(self.candidates)},
            "sparse_mpc": {
                "horizon": self.mpc_horizon,
                "penalty": self.mpc_penalty,
                "tol": self.mpc_tol,
                "max_iter": self.mpc_max_iter,
            },
            "sim": {
                "trials": self.trials,
                "horizon_steps": self.horizon_steps,
                "seed_base": self.seed_base,
            },
            "output_dir": self.output_dir,
        }


def _expect_mapping(raw, name):
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return raw


def _theta_values(section) -> tuple[float, ...]:
    if isinstance(section, dict) and "grid" in section:
        grid = section["grid"]
    elif isinstance(section, dict):
        start, stop, step = section.get("start"), section.get("stop"), section.get("step")
        if None in (start, stop, step):
            raise ConfigError("theta section needs either 'grid' or start/stop/step")
        count = int(round((stop - start) / step)) + 1
        grid = [round(start + i * step, 12) for i in range(count)]
    else:
        grid = section
    try:
        values = tuple(float(t) for t in grid)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"theta grid is not numeric: {exc}") from exc
    if not values:
        raise ConfigError("theta grid must be non-empty")
    if any(t <= 0.0 for t in values):
        raise ConfigError("every theta must be > 0")
    return values


def parse_config(raw: dict, source_path: str | None = None) -> ExperimentConfig:
    """Validate a parsed YAML mapping into an ExperimentConfig."""
    raw = _expect_mapping(raw, "config")
    model = _expect_mapping(raw.get("model"), "model")
    cost = _expect_mapping(raw.get("cost"), "cost")
    rollout = _expect_mapping(raw.get("rollout"), "rollout")
    periodic = _expect_mapping(raw.get("periodic"), "periodic")
    mpc = _expect_mapping(raw.get("sparse_mpc"), "sparse_mpc")
    sim = _expect_mapping(raw.get("sim"), "sim")

    source = model.get("source", "builtin-benchmark")
    if source not in _MODEL_SOURCES:
        raise ConfigError(f"model.source must be one of {_MODEL_SOURCES}")
    if source == "matrices-from-file" and not model.get("file"):
        raise ConfigError("model.source matrices-from-file requires model.file")

    q_raw = cost.get("q", "benchmark")
    if isinstance(q_raw, str):
        if q_raw != "benchmark":
            raise ConfigError("cost.q must be 'benchmark' or a matrix")
        q_weight = BENCHMARK_Q.copy()
    else:
        q_weight = np.atleast_2d(np.asarray(q_raw, dtype=float))
    r_raw = cost.get("r", "benchmark")
    if isinstance(r_raw, str):
        if r_raw != "benchmark":
            raise ConfigError("cost.r must be 'benchmark' or a matrix/scalar")
        r_weight = BENCHMARK_R.copy()
    else:
        r_weight = np.atleast_2d(np.asarray(r_raw, dtype=float))

    theta_grid = _theta_values(raw.get("theta", {"grid": list(BENCHMARK_THETA_GRID)}))

    methods = tuple(raw.get("methods", list(METHODS)))
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; valid: {METHODS}")
    if not methods:
        raise ConfigError("at least one method must be enabled")

    init_mean = model.get("init_mean")
    cfg = ExperimentConfig(
        model_source=source,
        sample_period=float(model.get("sample_period", BENCHMARK_TS)),
        model_file=model.get("file"),
        init_mean=tuple(float(v) for v in init_mean) if init_mean is not None else None,
        q_weight=q_weight,
        r_weight=r_weight,
        theta_grid=theta_grid,
        methods=methods,
        h=int(rollout.get("h", BENCHMARK_H)),
        p=int(rollout.get("p", BENCHMARK_H)),
        alpha=float(rollout.get("alpha", 1.0)),
        candidates=tuple(int(c) for c in periodic.get("candidates", BENCHMARK_PERIOD_CANDIDATES)),
        mpc_horizon=int(mpc.get("horizon", BENCHMARK_MPC_HORIZON)),
        mpc_penalty=float(mpc.get("penalty", 1.0)),
        mpc_tol=float(mpc.get("tol", 1e-8)),
        mpc_max_iter=int(mpc.get("max_iter", 10_000)),
        trials=int(sim.get("trials", BENCHMARK_TRIALS)),
        horizon_steps=int(sim.get("horizon_steps", BENCHMARK_HORIZON_STEPS)),
        seed_base=int(sim.get("seed_base", 20240601)),
        output_dir=str(raw.get("output_dir", "results")),
        source_path=source_path,
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.sample_period <= 0.0:
        raise ConfigError("model.sample_period must be > 0")
    if cfg.trials < 1 or cfg.horizon_steps < 1:
        raise ConfigError("sim.trials and sim.horizon_steps must be >= 1")
    if not 0.0 < cfg.alpha <= 1.0:
        raise ConfigError("rollout.alpha must lie in (0, 1]")
    if cfg.h < 1 or cfg.p < 1:
        raise ConfigError("rollout.h and rollout.p must be >= 1")
    if cfg.h > MAX_LOOKAHEAD:
        raise ConfigError(f"rollout.h must be <= {MAX_LOOKAHEAD} (exhaustive 2^h enumeration)")
    if cfg.h % cfg.p != 0:
        raise ConfigError(f"rollout.h={cfg.h} must be a multiple of rollout.p={cfg.p}")
    if "rollout" in cfg.methods and cfg.horizon_steps % cfg.h != 0:
        raise ConfigError("sim.horizon_steps must be a multiple of rollout.h")
    if cfg.mpc_horizon < 1:
        raise ConfigError("sparse_mpc.horizon must be >= 1")
    if cfg.mpc_penalty <= 0.0 or cfg.mpc_tol <= 0.0 or cfg.mpc_max_iter < 1:
        raise ConfigError("sparse_mpc solver parameters must be positive")
    if not cfg.candidates or any(c < 1 for c in cfg.candidates):
        raise ConfigError("periodic.candidates must be positive integers")

    try:
        require_symmetric(cfg.q_weight, "cost.q")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    q_scale = max(1.0, float(np.linalg.norm(cfg.q_weight, "fro")))
    if min_eigenvalue(cfg.q_weight) < -1e-10 * q_scale:
        raise ConfigError("cost.q must be positive semidefinite")
    if min_eigenvalue(cfg.r_weight) <= 0.0:
        raise ConfigError("cost.r must be positive definite")

    # Model-coupled checks: dimensions, definiteness, non-pathological lifting.
    try:
        dm = cfg.build_model()
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"model construction failed: {exc}") from exc
    n = dm.n_states
    if cfg.q_weight.shape != (n, n):
        raise ConfigError(f"cost.q must be {n}x{n} for this model")
    if cfg.r_weight.shape != (dm.n_inputs, dm.n_inputs):
        raise ConfigError(f"cost.r must be {dm.n_inputs}x{dm.n_inputs} for this model")
    for p in set(cfg.candidates) | {cfg.p}:
        if not check_pathological_sampling(dm.a, p):
            raise ConfigError(f"pathological sampling at period p={p}")


def load_config(path) -> ExperimentConfig:
    """Read and validate a YAML experiment configuration file."""
    path = Path(path)
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parse_config(raw, source_path=str(path))
