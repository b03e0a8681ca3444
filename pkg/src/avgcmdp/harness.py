"""Experiment orchestration: model generation, multi-seed runs, regret and
violation metrics against the exact baseline, and deterministic result files.
"""

from __future__ import annotations

import hashlib
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field

import numpy as np

from .ergodic_po import PRACTICAL_DEFAULTS, derive_parameters, run_ergodic_po
from .errors import InvariantViolation, ParseError
from .exact import optimal_constrained, solve_bias, span
from .finite_horizon import SpanBudget, run_finite_horizon
from .mixing import estimate_mixing_time
from .model import CmdpModel, load_model
from .runlog import ExperimentLog, fmt, write_episode_csv
from .simulate import make_rng

ALGORITHMS = ("ergodic-po", "fh-opt1", "fh-opt2")


@dataclass(frozen=True)
class ExperimentConfig:
    model_path: str
    algorithm: str
    T: int
    delta: float
    seeds: tuple
    output_dir: str
    mode: str = "practical"
    start_state: int = 0
    checkpoints: tuple = ()
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvariantViolation(f"unknown algorithm {self.algorithm!r}")
        if self.T < 1:
            raise InvariantViolation("T must be positive")
        if not self.seeds:
            raise InvariantViolation("at least one seed is required")
        checkpoints = tuple(self.checkpoints) or default_checkpoints(self.T)
        object.__setattr__(self, "checkpoints", checkpoints)
        if list(checkpoints) != sorted(checkpoints):
            raise InvariantViolation("checkpoints must be sorted")
        if checkpoints[-1] > self.T or checkpoints[0] < 1:
            raise InvariantViolation("checkpoints must lie in [1, T]")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def to_dict(self) -> dict:
        return {
            "model_path": self.model_path,
            "algorithm": self.algorithm,
            "T": self.T,
            "delta": self.delta,
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "mode": self.mode,
            "start_state": self.start_state,
            "checkpoints": list(self.checkpoints),
            "overrides": dict(self.overrides),
        }


def default_checkpoints(T: int) -> tuple:
    """Geometric grid T/16, T/8, T/4, T/2, T (deduplicated, minimum 1)."""
    points = sorted({max(1, T // 16), max(1, T // 8), max(1, T // 4), max(1, T // 2), T})
    return tuple(points)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"config {path} is not valid TOML: {exc}") from exc
    exp = data.get("experiment", data)
    try:
        return ExperimentConfig(
            model_path=exp["model"],
            algorithm=exp["algorithm"],
            T=int(exp["T"]),
            delta=float(exp.get("delta", 0.1)),
            seeds=tuple(exp["seeds"]),
            output_dir=exp.get("output_dir", "out"),
            mode=exp.get("mode", "practical"),
            start_state=int(exp.get("start_state", 0)),
            checkpoints=tuple(exp.get("checkpoints", ())),
            overrides=dict(data.get("overrides", {})),
        )
    except KeyError as exc:
        raise ParseError(f"config {path} is missing field {exc}") from exc


def generate_random_ergodic(S: int, A: int, seed: int,
                            min_self_loop: float = 0.2) -> CmdpModel:
    """Random ergodic instance with a strictly safe policy.

    Every transition entry is at least min_self_loop / S, which makes every
    policy's chain irreducible and aperiodic. The threshold is the midpoint
    of the achievable stationary-cost range (two LPs), so the min-cost
    policy is strictly safe; its cost is stored as the known c0.
    """
    if not 0 < min_self_loop < 1:
        raise ValueError("min_self_loop must lie in (0, 1)")
    rng = make_rng(seed)
    raw = rng.random((S, A, S)) + 1e-3
    raw = raw / raw.sum(axis=2, keepdims=True)
    transition = (1.0 - min_self_loop) * raw + min_self_loop / S
    reward = rng.random((S, A))
    cost = rng.random((S, A))
    probe = CmdpModel(
        num_states=S, num_actions=A, reward=reward, cost=cost,
        threshold=1.0, transition=transition, ergodic=True,
    )
    from .exact import achievable_cost_range, occupancy_lp, extract_policy

    c_min, c_max = achievable_cost_range(probe)
    tau = min(1.0, 0.5 * (c_min + c_max))
    mu_safe = occupancy_lp(probe, None, probe.cost, maximize=False)
    safe_policy = extract_policy(mu_safe)
    return CmdpModel(
        num_states=S, num_actions=A, reward=reward, cost=cost,
        threshold=tau, transition=transition, ergodic=True,
        c0=c_min, safe_policy=safe_policy.probs,
    )


@dataclass(frozen=True)
class MetricCurves:
    """Exact regret/violation partial sums at the requested checkpoints."""

    checkpoints: tuple
    regret: np.ndarray
    violation: np.ndarray
    j_star: float
    j_star_cost: float
    tau: float


def compute_metrics(log: ExperimentLog, j_star: float, tau: float,
                    checkpoints, j_star_cost: float = float("nan")) -> MetricCurves:
    """R_t = sum_{u<=t} (J* - r_u) and C_t = sum_{u<=t} (c_u - tau).

    Computed as cumulative sums of the per-step terms, so consecutive
    checkpoints differ by exactly the per-step increments.
    """
    regret_steps = np.cumsum(j_star - log.rewards)
    violation_steps = np.cumsum(log.costs - tau)
    idx = np.asarray(checkpoints, dtype=np.int64) - 1
    return MetricCurves(
        checkpoints=tuple(int(t) for t in checkpoints),
        regret=regret_steps[idx],
        violation=violation_steps[idx],
        j_star=j_star,
        j_star_cost=j_star_cost,
        tau=tau,
    )


def model_span_budget(model: CmdpModel) -> SpanBudget:
    """Exact bias spans of the constrained-optimal policy (ergodic models)."""
    opt = optimal_constrained(model, 0.0)
    v_r = solve_bias(opt.policy, model, model.reward).bias_v
    v_c = solve_bias(opt.policy, model, model.cost).bias_v
    return SpanBudget(sp_r_star=span(v_r), sp_c_star=span(v_c))


def resolve_mixing(model: CmdpModel, sample_policies: int = 16) -> tuple[int, float]:
    if model.t_mix is not None and model.t_hit is not None:
        return model.t_mix, model.t_hit
    profile = estimate_mixing_time(model, sample_policies=sample_policies)
    return profile.t_mix, profile.t_hit


def execute_run(model: CmdpModel, config: ExperimentConfig, seed: int) -> ExperimentLog:
    """One seeded run of the configured algorithm."""
    rng = make_rng(seed)
    if config.algorithm == "ergodic-po":
        t_mix, t_hit = resolve_mixing(model)
        if model.c0 is None:
            raise InvariantViolation(
                "ergodic-po requires a known safe-policy cost c0 in the model file"
            )
        knobs = {k: v for k, v in config.overrides.items() if k in PRACTICAL_DEFAULTS}
        params = derive_parameters(
            config.T, t_mix, t_hit, model.num_states, model.num_actions,
            model.threshold, model.c0, config.delta, mode=config.mode, **knobs,
        )
        log = run_ergodic_po(model, params, rng, start=config.start_state, seed=seed)
    else:
        if "sp_r" in config.overrides and "sp_c" in config.overrides:
            budget = SpanBudget(float(config.overrides["sp_r"]),
                                float(config.overrides["sp_c"]))
        else:
            budget = model_span_budget(model)
        log = run_finite_horizon(
            model, config.algorithm, budget, config.T, config.delta, rng,
            start=config.start_state, seed=seed,
        )
    log.config = config.to_dict()
    return log


def baseline(model: CmdpModel) -> tuple[float, float]:
    opt = optimal_constrained(model, 0.0)
    return opt.gain, opt.gain_cost


def write_metrics_csv(curves: MetricCurves, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,regret,violation\n")
        for t, r, c in zip(curves.checkpoints, curves.regret, curves.violation):
            fh.write(f"{t},{fmt(r)},{fmt(c)}\n")


def quartile_table(curve_list) -> list:
    """Rows (t, median, q25, q75 for regret; same for violation)."""
    checkpoints = curve_list[0].checkpoints
    rows = []
    for i, t in enumerate(checkpoints):
        r = np.array([c.regret[i] for c in curve_list])
        v = np.array([c.violation[i] for c in curve_list])
        rows.append((
            t,
            float(np.median(r)), float(np.quantile(r, 0.25)), float(np.quantile(r, 0.75)),
            float(np.median(v)), float(np.quantile(v, 0.25)), float(np.quantile(v, 0.75)),
        ))
    return rows


def run_suite(config: ExperimentConfig) -> dict:
    """Run every (algorithm, seed) pair; write one episode-log CSV and one
    metrics CSV per run plus a quartile summary. Failures of individual runs
    are recorded in the summary and do not stop the suite."""
    os.makedirs(config.output_dir, exist_ok=True)
    model = load_model(config.model_path)
    j_star, j_star_cost = baseline(model)
    curve_list = []
    statuses = []
    paths = []
    for seed in config.seeds:
        run_name = f"{config.algorithm}_seed{seed}"
        try:
            log = execute_run(model, config, seed)
            curves = compute_metrics(log, j_star, model.threshold,
                                     config.checkpoints, j_star_cost)
            log_path = os.path.join(config.output_dir, f"{run_name}_log.csv")
            metrics_path = os.path.join(config.output_dir, f"{run_name}_metrics.csv")
            write_episode_csv(log, log_path)
            write_metrics_csv(curves, metrics_path)
            curve_list.append(curves)
            statuses.append((seed, "ok", ""))
            paths.extend([log_path, metrics_path])
        except Exception as exc:  # noqa: BLE001 - per-run failures are recorded
            statuses.append((seed, "failed", f"{type(exc).__name__}: {exc}"))
    summary_path = os.path.join(config.output_dir, "summary.csv")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# algorithm={config.algorithm} T={config.T} "
                 f"J_star={fmt(j_star)} J_star_cost={fmt(j_star_cost)} "
                 f"tau={fmt(model.threshold)}\n")
        fh.write("# seed statuses: "
                 + "; ".join(f"{s}:{st}{(' ' + msg) if msg else ''}"
                             for s, st, msg in statuses) + "\n")
        fh.write("t,regret_median,regret_q25,regret_q75,"
                 "violation_median,violation_q25,violation_q75\n")
        if curve_list:
            for row in quartile_table(curve_list):
                fh.write(",".join([str(row[0])] + [fmt(x) for x in row[1:]]) + "\n")
    paths.append(summary_path)
    if curve_list:
        paths.extend(emit_plot_data(curve_list, config.output_dir))
    return {
        "statuses": statuses,
        "paths": paths,
        "summary": summary_path,
        "curves": curve_list,
    }


def _svg_line_chart(title: str, xs, med, lo, hi) -> str:
    """Self-contained SVG: median line with a quartile band."""
    width, height, margin = 640, 400, 60
    xs = np.asarray(xs, dtype=np.float64)
    med = np.asarray(med)
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    x_min, x_max = float(xs.min()), float(xs.max())
    y_min = float(min(lo.min(), 0.0))
    y_max = float(max(hi.max(), 0.0))
    if x_max == x_min:
        x_max = x_min + 1.0
    if y_max == y_min:
        y_max = y_min + 1.0

    def px(x):
        return margin + (x - x_min) / (x_max - x_min) * (width - 2 * margin)

    def py(y):
        return height - margin - (y - y_min) / (y_max - y_min) * (height - 2 * margin)

    def pts(xv, yv):
        return " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xv, yv))

    band = pts(xs, hi) + " " + pts(xs[::-1], lo[::-1])
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="24" text-anchor="middle" '
        f'font-family="monospace" font-size="16">{title}</text>',
        f'<polygon points="{band}" fill="#9ecae1" opacity="0.5"/>',
        f'<polyline points="{pts(xs, med)}" fill="none" stroke="#08519c" stroke-width="2"/>',
        f'<line x1="{margin}" y1="{py(0.0):.2f}" x2="{width - margin}" y2="{py(0.0):.2f}" '
        'stroke="#888" stroke-width="1"/>',
        f'<text x="{margin}" y="{height - 20}" font-family="monospace" '
        f'font-size="12">t: {x_min:g} .. {x_max:g}</text>',
        f'<text x="{width - margin}" y="{height - 20}" text-anchor="end" '
        f'font-family="monospace" font-size="12">value: {y_min:.6g} .. {y_max:.6g}</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def emit_plot_data(curve_list, output_dir) -> list:
    """Write the quartile table and one SVG per metric; returns the paths."""
    if not curve_list:
        raise ValueError("at least one metric curve is required")
    os.makedirs(output_dir, exist_ok=True)
    rows = quartile_table(curve_list)
    table_path = os.path.join(output_dir, "plot_data.csv")
    with open(table_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,regret_median,regret_q25,regret_q75,"
                 "violation_median,violation_q25,violation_q75\n")
        for row in rows:
            fh.write(",".join([str(row[0])] + [fmt(x) for x in row[1:]]) + "\n")
    ts = [row[0] for row in rows]
    paths = [table_path]
    for name, sel in (("regret", (1, 2, 3)), ("violation", (4, 5, 6))):
        svg = _svg_line_chart(
            f"cumulative {name}",
            ts,
            [row[sel[0]] for row in rows],
            [row[sel[1]] for row in rows],
            [row[sel[2]] for row in rows],
        )
        path = os.path.join(output_dir, f"{name}.svg")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
        paths.append(path)
    return paths


def file_checksum(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        digest.update(fh.read())
    return digest.hexdigest()
