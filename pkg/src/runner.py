import json
import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from barrier import (
    EPS_MARGINS,
    M_RK,
    PSI_REPS,
    R_MARGINS,
    StationaryCandidate,
    search_m_rk,
    search_psi,
    stationary_residual,
)
from blowup import csp_probability, punctured_classify, umax_classify
from chart import line_classify
from config import DEFAULT_SETTINGS, Settings, apply_overrides, parse_settings
from diffusion import explosion_probability_mc, feller_explosion_test, radial_generator
from errors import ConfigError, NoValidParameters, PlanError, PopulationExplosionCap, SupcritError
from formatter import prefixed, write_csv
from logger import get_logger
from merge import SUMMARY_COLUMNS, SUMMARY_FILE, ExperimentResult, agreement, merge_results
from model import ModelConfig, Punctured, config_from_dict, config_hash
from particles import (
    BOUNDED_AWAY,
    VANISHING,
    estimate_hitting,
    loglaplace_check,
    simulate,
    support_radius_profile,
)
from schedule import estimate_cost, schedule_experiments
from stats import wilson_interval
from theory import (
    Outcome,
    Verdict,
    fired_rules,
    predict_csp,
    predict_explosion,
    predict_point_hitting,
    undetermined,
)

logger = get_logger(__name__)

SUBCOMMANDS = ("classify-pde", "simulate", "feller", "hitting", "barrier", "loglaplace", "sweep", "oracle")


@dataclass
class Experiment:
    name: str
    subcommand: str
    model: Dict[str, Any]
    overrides: Dict[str, Any] = field(default_factory=dict)
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def config(self) -> ModelConfig:
        return config_from_dict(apply_overrides(self.model, self.overrides))


@dataclass
class ExperimentPlan:
    experiments: List[Experiment]
    settings: Settings
    out: str

    def only(self, subcommand: Optional[str]) -> "ExperimentPlan":
        if subcommand in (None, "run"):
            return self
        chosen = [e for e in self.experiments if e.subcommand == subcommand]
        return ExperimentPlan(chosen, self.settings, self.out)


def _read_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as error:
        raise PlanError(f"cannot read {path}: {error}") from error


def parse_plan(
    data: Dict[str, Any],
    settings_data: Optional[Dict[str, Any]] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> ExperimentPlan:
    """
    validates a plan: names unique, kinds known, every experiment with a seed and a parsable model.

    :param data: plan JSON
    :param settings_data: settings JSON the plan sections are laid over
    :param seed: command-line seed, used where neither experiment nor plan names one
    :param out: output directory, defaults to run.out
    """
    merged = dict(settings_data or {})
    for section in ("model", "pde", "particles", "run"):
        if section in data:
            merged[section] = {**merged.get(section, {}), **data[section]} if section != "model" else data[section]
    try:
        settings = parse_settings(merged)
    except ConfigError as error:
        raise PlanError(f"invalid settings: {error}") from error
    base_model = merged.get("model", {})

    default_seed = data.get("seed", seed if seed is not None else settings.run.seed)
    experiments: List[Experiment] = []
    seen = set()
    for i, entry in enumerate(data.get("experiments", [])):
        name = entry.get("name")
        if not name:
            raise PlanError(f"experiment #{i} has no name")
        if name in seen:
            raise PlanError(f"duplicate experiment name {name!r}")
        seen.add(name)
        kind = entry.get("subcommand")
        if kind not in SUBCOMMANDS:
            raise PlanError(f"experiment {name!r}: unknown subcommand {kind!r}")
        exp_seed = entry.get("seed", default_seed)
        if not isinstance(exp_seed, int) or isinstance(exp_seed, bool):
            raise PlanError(f"experiment {name!r}: seed must be an explicit integer")
        experiment = Experiment(
            name=name,
            subcommand=kind,
            model=entry.get("model", base_model),
            overrides=entry.get("overrides", {}),
            params=entry.get("params", {}),
            seed=exp_seed,
        )
        try:
            experiment.config()
        except (SupcritError, KeyError, TypeError, ValueError) as error:
            raise PlanError(f"experiment {name!r}: invalid model: {error}") from error
        experiments.append(experiment)

    return ExperimentPlan(experiments, settings, out or settings.run.out)


def load_plan(path: Optional[str], settings_path: Optional[str] = None, seed: Optional[int] = None,
              out: Optional[str] = None, data: Optional[Dict[str, Any]] = None) -> ExperimentPlan:
    settings_data = _read_json(settings_path or DEFAULT_SETTINGS)
    if data is None:
        if path is None:
            raise PlanError("no plan given")
        data = _read_json(path)
        logger.info(f"Loaded plan from {path}")
    return parse_plan(data, settings_data, seed, out)


# --- executors -----------------------------------------------------------------------

def _pde_kwargs(settings: Settings, params: Dict[str, Any]) -> Dict[str, Any]:
    pde = settings.pde
    return {
        "nodes": int(params.get("nodes", pde.nodes)),
        "dt": float(params.get("dt", pde.dt)),
        "rel_tol": float(params.get("rel_tol", pde.rel_tol)),
        "max_levels": int(params.get("max_levels", pde.max_levels)),
    }


def _particle_kwargs(settings: Settings, params: Dict[str, Any]) -> Dict[str, Any]:
    part = settings.particles
    return {
        "rate_dt": float(params.get("rate_dt", part.rate_dt)),
        "chunk": int(params.get("chunk", part.chunk)),
        "escape_radius": float(params.get("escape_radius", part.escape_radius)),
        "hard_cap": int(params.get("hard_cap", part.hard_cap)),
    }


def _start(config: ModelConfig, params: Dict[str, Any], key: str = "x0", default: Optional[List[float]] = None):
    d = int(config.d)
    x0 = params.get(key, default)
    if x0 is None:
        return [0.0] * d
    if isinstance(x0, (int, float)):
        return [float(x0)] + [0.0] * (d - 1)
    return [float(v) for v in x0]


def classify(config: ModelConfig, settings: Settings, params: Dict[str, Any]) -> Tuple[Verdict, List[Dict]]:
    """runs the PDE classifier suited to the config; rows hold the probe sequence"""
    method = params.get("method", "auto")
    if method == "auto":
        if config.motion.line:
            method = "line"
        elif isinstance(config.domain, Punctured):
            method = "punctured"
        else:
            method = "umax"
    kwargs = _pde_kwargs(settings, params)
    pde = settings.pde
    radii = params.get("radii", list(pde.radii))
    digest = config_hash(config)

    if method == "umax":
        probe = (float(params.get("probe_r", pde.probe_r)), float(params.get("probe_t", pde.probe_t)))
        verdict = umax_classify(config, radii, probe, **kwargs)
        rows = [{"config_hash": digest, "m": m, "probe_u": u, "verdict": verdict.value}
                for m, u in zip(radii, verdict.sequence)]
        return verdict, rows

    eps_ladder = sorted(params.get("eps_ladder", list(pde.eps_ladder)), reverse=True)
    probe = float(params.get("probe", 1.0))
    t = params.get("t")
    if method == "punctured":
        verdict = punctured_classify(config, eps_ladder, radii, probe, t, **kwargs)
    elif method == "line":
        verdict = line_classify(config, eps_ladder, radii, probe, t, **kwargs)
    else:
        raise ConfigError(f"unknown classification method {method!r}")
    rows = [{"config_hash": digest, "eps": e, "m": max(radii), "probe_u": u, "verdict": verdict.value}
            for e, u in zip(eps_ladder, verdict.sequence)]
    return verdict, rows


def run_classify(experiment: Experiment, settings: Settings) -> ExperimentResult:
    config = experiment.config()
    verdict, rows = classify(config, settings, experiment.params)
    return ExperimentResult(experiment.name, experiment.subcommand, config_hash(config), rows,
                            numeric=verdict, oracle=predict_csp(config), estimate=verdict.note)


def run_simulate(experiment: Experiment, settings: Settings) -> ExperimentResult:
    config = experiment.config()
    params = experiment.params
    n = int(params.get("n", settings.particles.n))
    replicas = int(params.get("replicas", settings.particles.replicas))
    t = float(params.get("t", config.horizon))
    m = float(params.get("m", 4.0))
    x0 = _start(config, params)
    times = params.get("times")

    result = simulate(config, n, replicas, t, experiment.seed, x0=x0, **_particle_kwargs(settings, params))
    extinct = wilson_interval(int(((result.mass == 0) & (result.radius < math.inf)).sum()), replicas)
    contained = wilson_interval(int((result.radius <= m).sum()), replicas)
    summary = [
        {"estimator": "extinction", "t": t, **extinct.to_row()},
        {"estimator": "csp", "m": m, "t": t, **contained.to_row()},
    ]
    if params.get("duality"):
        pde = csp_probability(config, m, t, x0=float(sum(v * v for v in x0)) ** 0.5,
                              **_pde_kwargs(settings, params))
        summary[1].update(pde=pde, within=abs(contained.value - pde) <= 3 * contained.sigma + 1e-2)

    tables = {"estimates": summary}
    if times:
        tables["profile"] = support_radius_profile(config, n, replicas, times, experiment.seed, x0=x0,
                                                   **_particle_kwargs(settings, params))
    text = f"csp {contained.value:.4g} [{contained.ci_lo:.4g}, {contained.ci_hi:.4g}]"
    return ExperimentResult(experiment.name, experiment.subcommand, config_hash(config), result.to_rows(),
                            oracle=predict_csp(config), estimate=text, tables=tables)


def run_feller(experiment: Experiment, settings: Settings) -> ExperimentResult:
    config = experiment.config()
    params = experiment.params
    gen = radial_generator(config)
    anchor = float(params.get("anchor", 1.0))
    verdict = feller_explosion_test(gen, anchor, float(params.get("outer", 1e12)),
                                    int(params.get("steps_per_decade", 400)))
    rows = [{"k": k, "R": anchor * 10.0 ** k, "log_integral": value} for k, value in enumerate(verdict.sequence)]

    tables = {}
    caps = params.get("caps")
    if caps:
        mc = explosion_probability_mc(gen, float(params.get("x0", anchor)), float(params.get("T", 1.0)), caps,
                                      int(params.get("replicas", settings.particles.replicas)), experiment.seed,
                                      dt=float(params.get("dt", 0.01)))
        tables["caps"] = mc.to_rows()
    return ExperimentResult(experiment.name, experiment.subcommand, config_hash(config), rows,
                            numeric=verdict, oracle=predict_explosion(config), estimate=verdict.note, tables=tables)


def _hitting_oracle(config: ModelConfig) -> Verdict:
    if config.d < 2:
        return undetermined("point-hitting", ["d >= 2"])
    return predict_point_hitting(config.replace(domain=Punctured()))


def run_hitting(experiment: Experiment, settings: Settings) -> ExperimentResult:
    config = experiment.config()
    params = experiment.params
    x0 = _start(config, params, default=1.0)
    target = _start(config, params, key="target")
    estimate = estimate_hitting(
        config, target, params.get("eps_ladder", (0.2, 0.1, 0.05)),
        int(params.get("n", settings.particles.n)), int(params.get("replicas", settings.particles.replicas)),
        experiment.seed, t=params.get("t"), x0=x0, **_particle_kwargs(settings, params),
    )
    outcome = {BOUNDED_AWAY: Outcome.FAILS, VANISHING: Outcome.HOLDS}.get(estimate.trend, Outcome.UNDETERMINED)
    numeric = Verdict(outcome, "hitting-trend", estimate.note)
    return ExperimentResult(experiment.name, experiment.subcommand, config_hash(config), estimate.to_rows(),
                            numeric=numeric, oracle=_hitting_oracle(config), estimate=estimate.trend)


def run_barrier(experiment: Experiment, settings: Settings) -> ExperimentResult:
    config = experiment.config()
    params = experiment.params
    kind = params.get("kind", M_RK)
    window = tuple(params.get("window", (0.0, 1.0)))
    digest = config_hash(config)

    if kind == "stationary":
        candidate = StationaryCandidate(float(params.get("kappa", 1.0)), config.p)
        residual = stationary_residual(candidate, config)
        rows = [{"kind": kind, "kappa": candidate.kappa, "residual": residual}]
        return ExperimentResult(experiment.name, experiment.subcommand, digest, rows,
                                estimate=f"residual {residual:.3g}")

    oracle = predict_csp(config) if kind == M_RK else _hitting_oracle(config)
    try:
        if kind == M_RK:
            fit = search_m_rk(config, params.get("radii", (10.0, 100.0)), window,
                              bool(params.get("smooth_origin", True)))
        elif kind == PSI_REPS:
            fit = search_psi(config, window,
                             r_margins=params.get("r_margins", R_MARGINS),
                             eps_margins=params.get("eps_margins", EPS_MARGINS))
        else:
            raise ConfigError(f"unknown barrier kind {kind!r}")
    except NoValidParameters as error:
        numeric = undetermined(f"barrier-{kind}", ["supersolution on the parameter ladder"], str(error))
        rows = [{"kind": kind, "found": False, "violation": math.inf}]
        return ExperimentResult(experiment.name, experiment.subcommand, digest, rows,
                                numeric=numeric, oracle=oracle, estimate="no barrier")

    rows = [{"kind": kind, "found": True, **fit.params, "violation": fit.violation, "checked": fit.checked}]
    note = ", ".join(f"{k}={v:g}" for k, v in fit.params.items())
    numeric = Verdict(Outcome.HOLDS, f"barrier-{kind}", note)
    return ExperimentResult(experiment.name, experiment.subcommand, digest, rows,
                            numeric=numeric, oracle=oracle, estimate=note)


def run_loglaplace(experiment: Experiment, settings: Settings) -> ExperimentResult:
    config = experiment.config()
    params = experiment.params
    report = loglaplace_check(
        config, params.get("f", {"kind": "constant", "value": 0.0}), float(params.get("t", config.horizon)),
        params.get("n_ladder", [settings.particles.n]), int(params.get("replicas", settings.particles.replicas)),
        experiment.seed, tolerance=float(params.get("tolerance", 1e-2)),
        oracle_radius=float(params.get("oracle_radius", 8.0)), **_particle_kwargs(settings, params),
    )
    text = f"oracle {report.oracle:.4g}, converging={report.converging}, within={report.within}"
    return ExperimentResult(experiment.name, experiment.subcommand, config_hash(config), report.to_rows(),
                            estimate=text)


def run_sweep(experiment: Experiment, settings: Settings) -> ExperimentResult:
    params = experiment.params
    points = params.get("points", [])
    numeric_on = params.get("method", "oracle") != "oracle"
    rows, numerics, oracles = [], [], []
    for i, point in enumerate(points):
        model = apply_overrides(apply_overrides(experiment.model, experiment.overrides), point)
        config = config_from_dict(model)
        oracle = predict_csp(config)
        numeric = classify(config, settings, params)[0] if numeric_on else None
        oracles.append(oracle)
        numerics.append(numeric)
        rows.append({
            "point": i,
            "overrides": json.dumps(point, sort_keys=True),
            "config_hash": config_hash(config),
            "oracle": oracle.value,
            "source": oracle.source,
            "numeric": numeric.value if numeric is not None else "",
            "agreement": agreement(numeric, oracle),
        })

    def common(verdicts: Sequence[Optional[Verdict]]) -> Optional[Verdict]:
        if not verdicts or any(v is None for v in verdicts):
            return None
        values = {v.value for v in verdicts}
        if len(values) == 1:
            return Verdict(values.pop(), "sweep")
        return undetermined("sweep", [], "points disagree")

    tally = ", ".join(f"{row['oracle'].value}" for row in rows)
    return ExperimentResult(experiment.name, experiment.subcommand, config_hash(experiment.config()), rows,
                            numeric=common(numerics), oracle=common(oracles), estimate=tally)


def run_oracle(experiment: Experiment, settings: Settings) -> ExperimentResult:
    config = experiment.config()
    digest = config_hash(config)
    oracle = predict_csp(config)
    rows = [dict(question="csp", **oracle.to_row(digest))]
    rows += [dict(question="fired", **v.to_row(digest)) for v in fired_rules(config)]
    rows.append(dict(question="explosion", **predict_explosion(config).to_row(digest)))
    if config.d >= 2 and not config.motion.line:
        rows.append(dict(question="point-hitting", **_hitting_oracle(config).to_row(digest)))

    expected = experiment.params.get("expected")
    numeric = Verdict(Outcome(expected), "expected") if expected else None
    return ExperimentResult(experiment.name, experiment.subcommand, digest, rows,
                            numeric=numeric, oracle=oracle, estimate=oracle.source)


EXECUTORS: Dict[str, Callable[[Experiment, Settings], ExperimentResult]] = {
    "classify-pde": run_classify,
    "simulate": run_simulate,
    "feller": run_feller,
    "hitting": run_hitting,
    "barrier": run_barrier,
    "loglaplace": run_loglaplace,
    "sweep": run_sweep,
    "oracle": run_oracle,
}


# --- dispatch -----------------------------------------------------------------------

def _partial_rows(partial) -> List[Dict[str, Any]]:
    if partial is None or not hasattr(partial, "mass"):
        return []
    mass = partial.mass()
    return [{"replica": i, "time": partial.time, "mass": float(mass[i]), "max_radius": float(partial.radius[i])}
            for i in range(partial.replicas)]


def execute(experiment: Experiment, settings: Settings, out_dir: str) -> ExperimentResult:
    """runs one experiment and writes its CSVs; module errors are caught and flagged"""
    logger.info(f"experiment {experiment.name} ({experiment.subcommand}) started, seed {experiment.seed}")
    try:
        result = EXECUTORS[experiment.subcommand](experiment, settings)
    except PopulationExplosionCap as error:
        result = ExperimentResult(experiment.name, experiment.subcommand, config_hash(experiment.config()),
                                  _partial_rows(error.partial), error=str(error), partial=True)
    except (SupcritError, ValueError, ArithmeticError) as error:
        result = ExperimentResult(experiment.name, experiment.subcommand, config_hash(experiment.config()),
                                  error=f"{type(error).__name__}: {error}")

    if result.rows or not result.failed:
        write_csv(os.path.join(out_dir, f"{experiment.name}.csv"), prefixed(result.rows, name=experiment.name))
    for suffix, rows in result.tables.items():
        write_csv(os.path.join(out_dir, f"{experiment.name}.{suffix}.csv"), rows)

    if result.failed:
        logger.error(f"experiment {experiment.name} failed: {result.error}")
    else:
        logger.info(f"experiment {experiment.name} done: {result.estimate}")
    return result


def _run_lane(lane: Sequence[Experiment], settings: Settings, out_dir: str) -> List[ExperimentResult]:
    return [execute(experiment, settings, out_dir) for experiment in lane]


def run(plan: ExperimentPlan, threads: Optional[int] = None) -> List[ExperimentResult]:
    """
    :param plan: validated plan
    :param threads: worker count, run.threads by default
    :return: results in plan order; the summary is written unless the plan is empty
    """
    if not plan.experiments:
        logger.info("empty plan, nothing to do")
        return []
    threads = threads or plan.settings.run.threads
    by_name = {e.name: e for e in plan.experiments}
    costs = {e.name: estimate_cost(e.subcommand, e.params) for e in plan.experiments}
    lanes = schedule_experiments(costs, threads)
    logger.info(f"running {len(by_name)} experiments on {len(lanes)} workers")

    os.makedirs(plan.out, exist_ok=True)
    done: Dict[str, ExperimentResult] = {}
    with ThreadPoolExecutor(max_workers=max(len(lanes), 1)) as executor:
        futures = [executor.submit(_run_lane, [by_name[n] for n in lane], plan.settings, plan.out) for lane in lanes]
        for future in as_completed(futures):
            for result in future.result():
                done[result.name] = result

    results = [done[e.name] for e in plan.experiments]
    write_csv(os.path.join(plan.out, SUMMARY_FILE), merge_results(results), SUMMARY_COLUMNS)
    return results
