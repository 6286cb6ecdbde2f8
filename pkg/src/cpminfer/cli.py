"""Batch experiment front-end.

Reads a single JSON configuration file, runs one of the named experiments,
and writes deterministic CSV/JSON artifacts.  Every artifact header embeds
the configuration hash, the seed, and the tool version, so identical
configurations reproduce byte-identical files.

Exit codes: 0 success, 1 usage error, 2 configuration/validation error,
3 numeric failure, 4 verification-suite failure.
"""

import argparse
import copy
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .covariates import DiscreteMixtureSampler, UniformBoxSampler
from .diagnostics import (ContractionProblem, bvm_diagnostic, contraction_study, default_workers,
                          lan_diagnostic, make_truth_field)
from .errors import (ChainDivergenceError, ConfigError, CpmInferError, DomainError,
                     IllConditionedError, InsufficientSamplesError, NumericDomainError,
                     PositivityError, PreconditionError)
from .forward import ForwardContext, forward_jacobian, linearization_study
from .ode import (OdeModel, TimeDesign, coefficient_jacobian_rank, count_roots_exp_affine_batch,
                  eval_map, eval_map_jacobian, fd_jacobian, probe_stability, rk4_solve, sample_ball)
from .pk import PkConfig, build_model, build_one_compartment_model, eigen_arrays
from .prior import CpmField, SeriesPriorSpec, rates
from .rngs import substream
from .sampling import ChainConfig, generate_dataset, run_pcn

EXPERIMENT_NAMES = ("stability", "linearize", "lan", "bvm", "contract")
SCHEMA_VERSION = 1

_DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "model": {"kind": "two_compartment", "kappa": 1.0,
              "covariate_box": [[0.5, 2.0], [1.0, 80.0]]},
    "design": {"times": [0.5, 1.0, 2.0, 4.0], "horizon": 10.0},
    "noise_sd": 1.0,
    "prior": {"smoothness": 8.0, "cutoff": 16},
    "rates": {"beta": 6.0, "beta_prime": 1.25},
    "chain": {"iterations": 50_000, "burn_in": None, "step": 0.2, "adapt_window": 250,
              "target_acceptance": [0.15, 0.35], "thin": None},
    "covariates": {"kind": "uniform_box", "atoms": None, "weights": None},
    "n_grid": [50, 200, 800, 3200],
    "replications": 5,
    "seed": 20260801,
    "output_dir": "out",
    "stability": {"radius": 2.0, "n_pairs": 10_000},
    "linearize": {"n_directions": 5, "n_covariates": 200, "h_sup": 0.5},
    "lan": {"n_per_rep": 2000, "replications": 500, "h_sup": 0.7, "n_mc_reference": 100_000},
    "bvm": {"n": 2000, "iterations": 60_000},
    "verify": {"n_eigen": 100_000, "n_rk4_points": 100, "n_rk4_times": 20, "n_fd": 100,
               "n_roots": 100_000, "n_rank": 10_000, "radius": 3.0, "forward_radius": 1.5},
    "fault_injection": None,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Normalized experiment configuration; compares equal after a round trip."""

    data: dict

    def __getitem__(self, key):
        return self.data[key]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def _merge_section(name, defaults, given):
    if given is None:
        return copy.deepcopy(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"section '{name}' must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in section '{name}': {sorted(unknown)}")
    merged = copy.deepcopy(defaults)
    merged.update(copy.deepcopy(given))
    return merged


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw dict against the schema, filling defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(raw) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version: {version}")
    data = {"schema_version": SCHEMA_VERSION}
    for key, default in _DEFAULTS.items():
        if key == "schema_version":
            continue
        if isinstance(default, dict):
            data[key] = _merge_section(key, default, raw.get(key))
        else:
            data[key] = copy.deepcopy(raw.get(key, default))
    if data["model"]["kind"] not in ("two_compartment", "one_compartment"):
        raise ConfigError(f"unknown model kind: {data['model']['kind']}")
    if data["covariates"]["kind"] not in ("uniform_box", "discrete_mixture"):
        raise ConfigError(f"unknown covariate sampler kind: {data['covariates']['kind']}")
    if data["fault_injection"] not in (None, "coeff_jacobian_sign_flip"):
        raise ConfigError(f"unknown fault injection: {data['fault_injection']}")
    if not isinstance(data["n_grid"], list) or not data["n_grid"]:
        raise ConfigError("n_grid must be a nonempty list")
    return ExperimentConfig(data)


def emit_config(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return parse_config(raw)


def default_config() -> ExperimentConfig:
    return parse_config({})


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_model_from_config(config: ExperimentConfig) -> OdeModel:
    section = config["model"]
    if section["kind"] == "two_compartment":
        model = build_model(PkConfig(kappa=section["kappa"],
                                     covariate_box=tuple(tuple(b) for b in section["covariate_box"])))
    else:
        model = build_one_compartment_model(kappa=section["kappa"])
    fault = config["fault_injection"]
    if fault == "coeff_jacobian_sign_flip" and model.coeff_jacobian_fn is not None:
        inner = model.coeff_jacobian_fn
        model = OdeModel(
            dim_state=model.dim_state, dim_param=model.dim_param,
            matrix_fn=model.matrix_fn, init_fn=model.init_fn, coeff_fn=model.coeff_fn,
            coeff_jacobian_fn=lambda p: -inner(p),
            eigensystem_fn=model.eigensystem_fn, coeff_batch_fn=model.coeff_batch_fn,
            state_batch_fn=model.state_batch_fn, param_box=model.param_box,
            label=model.label + "+fault")
    return model


def build_design(config: ExperimentConfig) -> TimeDesign:
    section = config["design"]
    return TimeDesign(np.asarray(section["times"], dtype=float), section["horizon"])


def build_context(config: ExperimentConfig) -> ForwardContext:
    return ForwardContext(build_model_from_config(config), build_design(config),
                          config["noise_sd"])


def build_prior_spec(config: ExperimentConfig) -> SeriesPriorSpec:
    box = tuple(tuple(b) for b in config["model"]["covariate_box"])
    model = build_model_from_config(config)
    return SeriesPriorSpec(
        smoothness=config["prior"]["smoothness"],
        cutoff=config["prior"]["cutoff"],
        dim_x=len(box),
        dim_out=model.dim_param,
        box=box,
    )


def build_sampler(config: ExperimentConfig):
    section = config["covariates"]
    if section["kind"] == "uniform_box":
        return UniformBoxSampler(tuple(tuple(b) for b in config["model"]["covariate_box"]))
    return DiscreteMixtureSampler(np.asarray(section["atoms"], dtype=float),
                                  np.asarray(section["weights"], dtype=float))


def build_rate_table(config: ExperimentConfig, spec: SeriesPriorSpec):
    return rates(spec.smoothness, config["rates"]["beta"], config["rates"]["beta_prime"],
                 spec.dim_x)


def default_functional(spec: SeriesPriorSpec) -> CpmField:
    """A fixed low-frequency functional direction for the normality check."""
    coeffs = np.zeros((spec.dim_out, spec.n_basis))
    k = spec.cutoff + 1

    def flat(j):
        out = 0
        for jm in j:
            out = out * k + jm
        return out

    coeffs[0, flat((1,) + (0,) * (spec.dim_x - 1))] = 1.0
    if spec.dim_x >= 2:
        coeffs[0, flat((0, 1) + (0,) * (spec.dim_x - 2))] = 0.5
    if spec.dim_out >= 2:
        coeffs[1, flat((0,) * spec.dim_x)] = 0.5
    if spec.dim_out >= 4 and spec.dim_x >= 2:
        coeffs[3, flat((1, 1) + (0,) * (spec.dim_x - 2))] = 0.25
    return CpmField(spec, coeffs)


def perturbation_field(spec: SeriesPriorSpec, seed, sup_target, stream=52) -> CpmField:
    field = make_truth_field(spec, seed, rkhs_norm=1.0, stream=stream)
    sup = field.sup_norm()
    if sup == 0.0:
        raise DomainError("degenerate perturbation draw")
    return field * (sup_target / sup)


# ---------------------------------------------------------------------------
# Artifact output
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def _write_csv(path, header_lines, columns, rows):
    lines = [f"# {line}" for line in header_lines]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _artifact_header(name, config):
    return [f"cpm-infer {name} v{__version__}",
            f"config_sha256={config_hash(config)}",
            f"seed={config['seed']}"]


def _meta(name, config):
    return {"experiment": name, "tool_version": __version__,
            "config_sha256": config_hash(config), "seed": config["seed"]}


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------

def run_verify(config: ExperimentConfig, out_dir=None) -> dict:
    """Run the model invariant suite; returns the report dict.

    Checks: eigenstructure sign pattern, closed form against a fixed-step
    integrator, analytic Jacobians against central differences (plus rank),
    the root-count bound for random exponential-affine sums, and a rank
    sweep of the coefficient Jacobian.
    """
    section = config["verify"]
    ctx = build_context(config)
    model = ctx.model
    seed = config["seed"]
    radius = section["radius"]
    checks = {}

    if model.label.startswith("two-compartment"):
        kappa = config["model"]["kappa"]
        ps = sample_ball(substream(seed, 61), section["n_eigen"], 4, radius)
        e = eigen_arrays(ps, kappa)
        bad = int(np.count_nonzero(
            (e["delta"] <= 0) | (e["lambda_minus"] >= e["lambda_plus"])
            | (e["lambda_plus"] >= 0) | (e["v_minus"] >= 0) | (e["v_plus"] <= 0)))
        worst = float(min(e["delta"].min(), -e["lambda_plus"].max(),
                          (e["lambda_plus"] - e["lambda_minus"]).min(),
                          e["v_plus"].min(), -e["v_minus"].max()))
        checks["eigen_inequalities"] = {
            "passed": bad == 0, "count": int(ps.shape[0]), "worst_margin": worst}

    rng = substream(seed, 62)
    ps = sample_ball(rng, section["n_rk4_points"], model.dim_param, radius)
    step = 1e-4 * ctx.design.horizon
    k_times = np.sort(rng.choice(np.arange(1, 10_001), size=section["n_rk4_times"], replace=False))
    times = k_times * (ctx.design.horizon / 10_000.0)
    worst_abs = 0.0
    for p in ps:
        closed = eval_map(model, p, TimeDesign(times, ctx.design.horizon))
        integrated = rk4_solve(model, p, times, step)[:, 0]
        worst_abs = max(worst_abs, float(np.max(np.abs(closed - integrated))))
    checks["closed_form_vs_rk4"] = {
        "passed": worst_abs <= 1e-7, "count": int(ps.shape[0]), "worst_abs_error": worst_abs}

    # Coefficient-map checks sample the full ball; forward-map checks sample a
    # smaller one.  The fast mode decays like exp(lambda_minus * t_1), which
    # leaves double precision well inside the full ball, so the forward
    # Jacobian is mathematically full rank but numerically unverifiable there.
    rng = substream(seed, 63)
    ps = sample_ball(rng, section["n_fd"], model.dim_param, radius)
    ps_fwd = sample_ball(rng, section["n_fd"], model.dim_param, section["forward_radius"])
    worst_rel = 0.0
    min_rank = model.dim_param
    for p in ps:
        jac = np.asarray(model.coeff_jacobian_fn(p))
        num = fd_jacobian(lambda q: np.concatenate([
            model.coeff_fn(q).prefactors, model.coeff_fn(q).rates]), p)
        worst_rel = max(worst_rel, float(np.max(np.abs(jac - num)) / np.max(np.abs(num))))
        s_jac = eval_map_jacobian(model, p, ctx.design)
        s_num = fd_jacobian(lambda q: eval_map(model, q, ctx.design), p)
        worst_rel = max(worst_rel, float(np.max(np.abs(s_jac - s_num)) / np.max(np.abs(s_num))))
        min_rank = min(min_rank, coefficient_jacobian_rank(model, p)[0])
    for p in ps_fwd:
        f_jac = forward_jacobian(ctx, p)
        f_num = fd_jacobian(lambda q: np.log(eval_map(model, q, ctx.design)), p)
        worst_rel = max(worst_rel, float(np.max(np.abs(f_jac - f_num)) / np.max(np.abs(f_num))))
        svals = np.linalg.svd(f_jac, compute_uv=False)
        rank = int(np.count_nonzero(svals > 1e-10 * svals[0]))
        min_rank = min(min_rank, rank)
    checks["jacobians_vs_finite_differences"] = {
        "passed": worst_rel <= 1e-5 and min_rank == model.dim_param,
        "count": int(ps.shape[0]), "worst_rel_error": worst_rel, "min_rank": min_rank}

    rng = substream(seed, 64)
    n_roots = section["n_roots"]
    worst_excess = -10
    all_ok = True
    for n_terms in (1, 2, 3, 4):
        m = n_roots // 4
        betas = np.round(rng.uniform(-3, 3, (m, n_terms)), 6)
        keep = np.array([np.unique(b).size == n_terms for b in betas])
        betas, xis, gammas = betas[keep], rng.uniform(-3, 3, (m, n_terms))[keep], \
            rng.uniform(-3, 3, (m, n_terms))[keep]
        counts = count_roots_exp_affine_batch(betas, xis, gammas, window=(-50.0, 50.0),
                                              resolution=0.02)
        worst_excess = max(worst_excess, int((counts - (2 * n_terms - 1)).max()))
        all_ok = all_ok and bool(np.all(counts <= 2 * n_terms - 1))
    checks["root_count_bound"] = {
        "passed": all_ok, "count": int(n_roots), "worst_excess": worst_excess}

    ps = sample_ball(substream(seed, 65), section["n_rank"], model.dim_param, radius)
    worst_smin = float("inf")
    ranks_ok = True
    for p in ps:
        rank, smin = coefficient_jacobian_rank(model, p)
        ranks_ok = ranks_ok and rank == model.dim_param
        worst_smin = min(worst_smin, smin)
    checks["coefficient_jacobian_rank"] = {
        "passed": ranks_ok, "count": int(ps.shape[0]), "min_singular_value": worst_smin}

    report = dict(_meta("verify", config))
    report["checks"] = checks
    report["all_passed"] = all(c["passed"] for c in checks.values())
    if out_dir is not None:
        _write_json(Path(out_dir) / "verify.json", report)
    return report


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _run_stability(config, out_dir):
    ctx = build_context(config)
    section = config["stability"]
    n_pairs = int(section["n_pairs"])
    columns = ("n_pairs", "matrix_bound", "log_obs_bound", "solution_lipschitz",
               "inverse_lipschitz", "log_inverse_lipschitz", "degenerate_pairs")
    rows = []
    reports = {}
    for n in (n_pairs // 2, n_pairs):
        rep = probe_stability(ctx.model, ctx.design, section["radius"], n, config["seed"])
        rows.append((rep.sample_count, rep.matrix_bound, rep.log_obs_bound,
                     rep.solution_lipschitz, rep.inverse_lipschitz,
                     rep.log_inverse_lipschitz, rep.degenerate_pairs))
        reports[n] = rep
    half, full = reports[n_pairs // 2], reports[n_pairs]
    rel_change = (abs(full.log_inverse_lipschitz - half.log_inverse_lipschitz)
                  / full.log_inverse_lipschitz if full.log_inverse_lipschitz > 0 else 0.0)
    _write_csv(Path(out_dir) / "stability.csv", _artifact_header("stability", config),
               columns, rows)
    payload = dict(_meta("stability", config))
    payload.update({
        "radius": section["radius"],
        "stability_violation": full.stability_violation,
        "log_inverse_lipschitz": full.log_inverse_lipschitz,
        "relative_change_half_to_full": rel_change,
    })
    _write_json(Path(out_dir) / "stability.json", payload)


def _run_linearize(config, out_dir):
    ctx = build_context(config)
    spec = build_prior_spec(config)
    sampler = build_sampler(config)
    section = config["linearize"]
    xs = sampler.sample(substream(config["seed"], 71), int(section["n_covariates"]))
    scales = 0.5 * 2.0 ** -np.arange(9)
    rows, slopes = [], []
    for d in range(int(section["n_directions"])):
        theta0 = make_truth_field(spec, config["seed"], stream=100 + d)
        h = perturbation_field(spec, config["seed"], section["h_sup"], stream=200 + d)
        report = linearization_study(ctx, theta0, h, scales, xs)
        slopes.append(report.slope)
        for s, hn, r in zip(scales, report.h_sup_norms, report.remainders):
            rows.append((d, s, hn, r))
    _write_csv(Path(out_dir) / "linearize.csv", _artifact_header("linearize", config),
               ("direction", "scale", "h_sup", "remainder"), rows)
    payload = dict(_meta("linearize", config))
    payload["slopes"] = slopes
    _write_json(Path(out_dir) / "linearize.json", payload)


def _run_lan(config, out_dir):
    ctx = build_context(config)
    spec = build_prior_spec(config)
    sampler = build_sampler(config)
    section = config["lan"]
    theta0 = make_truth_field(spec, config["seed"])
    h = perturbation_field(spec, config["seed"], section["h_sup"])
    result = lan_diagnostic(ctx, theta0, h, int(section["n_per_rep"]),
                            int(section["replications"]), sampler, config["seed"],
                            n_mc_reference=int(section["n_mc_reference"]))
    rows = [(r, v) for r, v in enumerate(result.ratios)]
    _write_csv(Path(out_dir) / "lan.csv", _artifact_header("lan", config),
               ("replication", "log_ratio"), rows)
    payload = dict(_meta("lan", config))
    payload.update({
        "empirical_mean": result.empirical_mean,
        "empirical_variance": result.empirical_variance,
        "reference": result.reference,
        "predicted_mean": result.predicted_mean,
        "mean_std_error": result.mean_std_error,
        "replications": result.replications,
    })
    _write_json(Path(out_dir) / "lan.json", payload)


def _run_bvm(config, out_dir):
    ctx = build_context(config)
    spec = build_prior_spec(config)
    sampler = build_sampler(config)
    section = config["bvm"]
    theta0 = make_truth_field(spec, config["seed"])
    psi = default_functional(spec)
    n = int(section["n"])
    data = generate_dataset(ctx, theta0, sampler, n, config["seed"])
    chain_cfg = ChainConfig(
        iterations=int(section["iterations"]),
        step=config["chain"]["step"],
        adapt_window=config["chain"]["adapt_window"],
        target_acceptance=tuple(config["chain"]["target_acceptance"]),
        seed=config["seed"],
    )
    chain = run_pcn(ctx, data, spec, chain_cfg, track_functionals={"bvm_psi": psi})
    result = bvm_diagnostic(ctx, data, chain, psi, theta0, sampler)
    rows = [(i, z) for i, z in enumerate(result.standardized_draws)]
    _write_csv(Path(out_dir) / "bvm.csv", _artifact_header("bvm", config),
               ("draw", "standardized"), rows)
    payload = dict(_meta("bvm", config))
    payload.update({
        "ks_statistic": result.ks_statistic,
        "ks_pvalue": result.ks_pvalue,
        "center": result.center,
        "target_sd": result.target_sd,
        "posterior_sd": result.posterior_sd,
        "functional_ess": result.functional_ess,
        "acceptance_rate": chain.acceptance_rate,
    })
    _write_json(Path(out_dir) / "bvm.json", payload)


def _run_contract(config, out_dir, workers):
    spec = build_prior_spec(config)
    theta0 = make_truth_field(spec, config["seed"])
    table = build_rate_table(config, spec)
    chain_section = config["chain"]
    problem = ContractionProblem(
        pk=PkConfig(kappa=config["model"]["kappa"],
                    covariate_box=tuple(tuple(b) for b in config["model"]["covariate_box"])),
        design_times=tuple(config["design"]["times"]),
        horizon=config["design"]["horizon"],
        noise_sd=config["noise_sd"],
        spec=spec,
        truth_coeffs=theta0.coeffs,
        chain=ChainConfig(
            iterations=chain_section["iterations"], burn_in=chain_section["burn_in"],
            step=chain_section["step"], adapt_window=chain_section["adapt_window"],
            target_acceptance=tuple(chain_section["target_acceptance"]),
            thin=chain_section["thin"]),
        sampler_kind=config["covariates"]["kind"],
        sampler_atoms=None if config["covariates"]["atoms"] is None
        else np.asarray(config["covariates"]["atoms"], dtype=float),
        sampler_weights=None if config["covariates"]["weights"] is None
        else np.asarray(config["covariates"]["weights"], dtype=float),
    )
    if config["model"]["kind"] != "two_compartment":
        raise ConfigError("the contraction study currently runs the two-compartment model")
    result = contraction_study(problem, config["n_grid"], config["replications"],
                               config["seed"], workers=workers)
    rows = [(c.n, c.replication, c.l2_error, c.sup_error, c.contraction_rate,
             c.acceptance_rate) for c in result.cells]
    _write_csv(Path(out_dir) / "contract.csv", _artifact_header("contract", config),
               ("N", "rep", "l2_err", "sup_err", "delta_N", "accepted_rate"), rows)
    payload = dict(_meta("contract", config))
    payload.update({
        "median_l2": {str(k): v for k, v in result.median_l2.items()},
        "median_sup": {str(k): v for k, v in result.median_sup.items()},
        "slope": result.slope,
        "contraction_rate": {str(n): table.contraction_rate(n) for n in result.n_grid},
        "sup_rate": {str(n): table.sup_rate(n) for n in result.n_grid},
        "rate_window_feasible": table.feasible,
    })
    _write_json(Path(out_dir) / "contract.json", payload)


def run_experiment(name, config: ExperimentConfig, out_dir, workers=None):
    """Dispatch one named experiment, writing CSV and JSON artifacts."""
    if name not in EXPERIMENT_NAMES:
        raise ConfigError(f"unknown experiment '{name}'; valid names: {', '.join(EXPERIMENT_NAMES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if name == "stability":
        _run_stability(config, out)
    elif name == "linearize":
        _run_linearize(config, out)
    elif name == "lan":
        _run_lan(config, out)
    elif name == "bvm":
        _run_bvm(config, out)
    else:
        _run_contract(config, out, workers or default_workers())


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def main(argv=None) -> int:
    parser = _Parser(prog="cpm-infer",
                     description="Batch experiments for covariate-to-parameter map inference.")
    parser.add_argument("experiment", choices=("verify",) + EXPERIMENT_NAMES,
                        help="which experiment to run")
    parser.add_argument("--config", type=str, default=None,
                        help="path to a JSON configuration (defaults when omitted)")
    parser.add_argument("--out", type=str, default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker count override (default: CPM_INFER_THREADS or CPU count)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        config = load_config(args.config) if args.config else default_config()
        data = config.to_dict()
        if args.seed is not None:
            data["seed"] = int(args.seed)
        if args.out is not None:
            data["output_dir"] = args.out
        config = parse_config(data)
        out_dir = Path(config["output_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)

        if args.experiment == "verify":
            report = run_verify(config, out_dir)
            if not report["all_passed"]:
                failing = [k for k, v in report["checks"].items() if not v["passed"]]
                print(f"verification failed: {', '.join(failing)}", file=sys.stderr)
                return 4
            print(f"verification passed ({len(report['checks'])} checks); "
                  f"report in {out_dir / 'verify.json'}")
            return 0

        run_experiment(args.experiment, config, out_dir, workers=args.threads)
        print(f"{args.experiment} artifacts written to {out_dir}")
        return 0
    except (ConfigError, DomainError, PreconditionError, InsufficientSamplesError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (NumericDomainError, PositivityError, IllConditionedError, ChainDivergenceError,
            FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except CpmInferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
