"""Empirical checks of the asymptotic theory at desk scale.

Three diagnostics, each a simulation of a limit statement:

* local asymptotic normality of the log-likelihood ratio under root-n
  perturbations (moment match against the predicted Gaussian);
* asymptotic normality of smooth linear functionals of posterior draws
  around an efficient, noise-dependent center (Kolmogorov--Smirnov test and
  a spread comparison);
* decay of the posterior-mean error as the sample size grows (log-log slope
  of a full generate/sample/summarize pipeline over a sample-size grid).

The covariate-law inner products appearing in the theory are evaluated
exactly for the uniform and discrete laws; noise levels other than one scale
the information by ``1 / noise_sd^2``, and all formulas here carry that
factor explicitly.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import scipy.stats

from .covariates import DiscreteMixtureSampler, UniformBoxSampler, l2_inner
from .errors import DomainError, InsufficientSamplesError
from .forward import ForwardContext, apply_forward, jacobians_along, solve_information_equation
from .ode import TimeDesign
from .pk import PkConfig, build_model
from .prior import CpmField, SeriesPriorSpec, grid_points, rescale_for_N
from .rngs import substream
from .sampling import ChainConfig, Dataset, effective_sample_size, generate_dataset, log_likelihood, run_pcn

__all__ = [
    "LanResult",
    "BvmResult",
    "ContractionCell",
    "ContractionResult",
    "lan_diagnostic",
    "information_norm_squared",
    "bvm_diagnostic",
    "contraction_study",
    "ContractionProblem",
    "make_truth_field",
]


# ---------------------------------------------------------------------------
# Local asymptotic normality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LanResult:
    """Monte Carlo moments of the log-likelihood ratio and their target."""

    empirical_mean: float
    empirical_variance: float
    reference: float          # squared information norm of the direction
    replications: int
    mean_std_error: float
    ratios: np.ndarray = None

    @property
    def predicted_mean(self) -> float:
        return -0.5 * self.reference


def information_norm_squared(ctx: ForwardContext, theta0: CpmField, h: CpmField,
                             sampler, seed, n_mc=100_000) -> float:
    """Monte Carlo estimate of ``E ||J(theta0(X)) h(X)||^2 / noise_sd^2``.

    This is the squared norm in which the likelihood geometry measures the
    direction ``h``; the noise level enters through the model.
    """
    xs = sampler.sample(substream(seed, 31), n_mc)
    vals = np.einsum("nop,np->no", jacobians_along(ctx, theta0, xs), h.evaluate(xs))
    return float(np.mean((vals ** 2).sum(axis=1))) / ctx.noise_sd ** 2


def lan_diagnostic(ctx: ForwardContext, theta0: CpmField, h: CpmField, n_per_rep: int,
                   replications: int, sampler, seed, n_mc_reference=100_000) -> LanResult:
    """Simulate the log-likelihood ratio for the ``h / sqrt(n)`` perturbation.

    Each replication generates fresh data of size ``n_per_rep`` under
    ``theta0`` and evaluates the log-likelihood ratio between the perturbed
    and true fields.  The limit predicts mean ``-reference / 2`` and
    variance ``reference``.
    """
    if replications < 2:
        raise DomainError("need at least two replications")
    reference = information_norm_squared(ctx, theta0, h, sampler, seed, n_mc_reference)
    shifted = theta0 + (1.0 / math.sqrt(n_per_rep)) * h
    ratios = np.empty(replications)
    for r in range(replications):
        rep_seed = int(np.random.SeedSequence(seed, spawn_key=(41, r)).generate_state(1)[0])
        data = generate_dataset(ctx, theta0, sampler, n_per_rep, rep_seed)
        ratios[r] = log_likelihood(ctx, shifted, data) - log_likelihood(ctx, theta0, data)
    mean = float(ratios.mean())
    var = float(ratios.var(ddof=1))
    return LanResult(mean, var, reference, replications, math.sqrt(var / replications), ratios)


# ---------------------------------------------------------------------------
# Functional normality of the posterior
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BvmResult:
    """Posterior functional draws against their predicted Gaussian limit."""

    ks_statistic: float
    ks_pvalue: float
    standardized_draws: np.ndarray
    center: float              # efficient, noise-realisation-dependent center
    target_sd: float           # predicted posterior spread of sqrt(n) (<theta,psi> - center)
    posterior_sd: float        # observed spread of the same quantity
    functional_ess: float


def bvm_diagnostic(ctx: ForwardContext, data: Dataset, chain, psi: CpmField,
                   theta0: CpmField, law, trace_key="bvm_psi",
                   quadrature_per_axis=64, min_ess=100.0) -> BvmResult:
    """Compare posterior draws of ``<theta, psi>`` with their Gaussian limit.

    Solves the pointwise information equation for ``psi``, computes the
    efficient center from the realised noise (simulation only), standardizes
    the posterior functional trace, and runs a Kolmogorov--Smirnov test on an
    effective-sample-size-spaced subsample against the standard normal.

    The predicted variance of ``sqrt(n) (<theta, psi> - center)`` is
    ``noise_sd^2 ||J psi_bar||^2`` with ``psi_bar`` the information-equation
    solution for the unit-noise information; equivalently
    ``noise_sd^2 <psi, psi_bar>`` under the covariate law.
    """
    if data.epsilons is None:
        raise DomainError("the efficient center needs the realised noise (simulated data)")
    trace = chain.functional_traces.get(trace_key)
    if trace is None:
        # fall back to the retained draws
        trace = np.array([(d * psi.coeffs).sum() for d in chain.draws])
    ess = effective_sample_size(trace)
    if ess < min_ess:
        raise InsufficientSamplesError(
            f"functional effective sample size {ess:.1f} below {min_ess:.0f}")

    psi_bar_data = solve_information_equation(ctx, theta0, psi, data.xs)
    jacs_data = jacobians_along(ctx, theta0, data.xs)
    influence = np.einsum("nop,np->no", jacs_data, psi_bar_data)
    center = l2_inner(psi, theta0, law) + float(np.mean((influence * data.epsilons).sum(axis=1)))

    # target variance by quadrature over the covariate law
    if isinstance(law, UniformBoxSampler):
        xq = grid_points(law.box, quadrature_per_axis, midpoint=True)
        wq = np.full(xq.shape[0], 1.0 / xq.shape[0])
    elif isinstance(law, DiscreteMixtureSampler):
        xq, wq = law.atoms, law.weights
    else:
        raise DomainError("target variance needs a uniform or discrete covariate law")
    psi_bar_q = solve_information_equation(ctx, theta0, psi, xq)
    jacs_q = jacobians_along(ctx, theta0, xq)
    lin_q = np.einsum("nop,np->no", jacs_q, psi_bar_q)
    target_var = ctx.noise_sd ** 2 * float(wq @ (lin_q ** 2).sum(axis=1))

    scaled = math.sqrt(data.n) * (trace - center)
    posterior_sd = float(scaled.std(ddof=1))
    target_sd = math.sqrt(target_var)
    if target_sd == 0.0:
        z = scaled
        ks_stat, ks_p = (0.0, 1.0) if np.allclose(scaled, 0.0) else (1.0, 0.0)
    else:
        z = scaled / target_sd
        stride = max(1, int(len(z) / ess))
        ks_stat, ks_p = scipy.stats.kstest(z[::stride], "norm")
    return BvmResult(float(ks_stat), float(ks_p), z, center, target_sd, posterior_sd, ess)


# ---------------------------------------------------------------------------
# Contraction study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionProblem:
    """Declarative description of a study problem (safe to send to workers)."""

    pk: PkConfig
    design_times: tuple
    horizon: float
    noise_sd: float
    spec: SeriesPriorSpec
    truth_coeffs: np.ndarray
    chain: ChainConfig
    sampler_kind: str = "uniform_box"
    sampler_atoms: Optional[np.ndarray] = None
    sampler_weights: Optional[np.ndarray] = None

    def context(self) -> ForwardContext:
        design = TimeDesign(np.asarray(self.design_times), self.horizon)
        return ForwardContext(build_model(self.pk), design, self.noise_sd)

    def truth(self) -> CpmField:
        return CpmField(self.spec, self.truth_coeffs)

    def sampler(self):
        if self.sampler_kind == "uniform_box":
            return UniformBoxSampler(self.pk.covariate_box)
        if self.sampler_kind == "discrete_mixture":
            return DiscreteMixtureSampler(self.sampler_atoms, self.sampler_weights)
        raise DomainError(f"unknown sampler kind: {self.sampler_kind}")


def make_truth_field(spec: SeriesPriorSpec, seed, rkhs_norm=0.9, fraction=0.25,
                     stream=51) -> CpmField:
    """A smooth truth inside the prior's Cameron--Martin ball.

    Draws from the base prior, keeps the lowest-frequency ``fraction`` of
    coefficients, and rescales to the requested weighted-coefficient norm, so
    the truth is guaranteed admissible for the contraction statements.
    Distinct ``stream`` keys give independent draws under one seed.
    """
    from .prior import multi_indices, sample_base_prior

    draw = sample_base_prior(spec, seed, stream)
    j2 = (multi_indices(spec).astype(float) ** 2).sum(axis=1)
    keep = max(1, int(spec.n_basis * fraction))
    mask = np.zeros(spec.n_basis, dtype=bool)
    mask[np.argsort(j2, kind="stable")[:keep]] = True
    coeffs = np.where(mask, draw.coeffs, 0.0)
    field = CpmField(spec, coeffs)
    norm = field.rkhs_norm()
    if norm == 0.0:
        raise DomainError("degenerate truth draw")
    return field * (rkhs_norm / norm)


@dataclass(frozen=True)
class ContractionCell:
    n: int
    replication: int
    l2_error: float
    sup_error: float
    acceptance_rate: float
    contraction_rate: float
    diverged: bool = False


@dataclass(frozen=True)
class ContractionResult:
    cells: tuple
    n_grid: tuple
    median_l2: Dict[int, float]
    median_sup: Dict[int, float]
    slope: Optional[float]     # None when the grid has fewer than two sizes


def _contract_cell(args) -> ContractionCell:
    problem, n, rep, seed = args
    ctx = problem.context()
    truth = problem.truth()
    sampler = problem.sampler()
    cell_seed = int(np.random.SeedSequence(seed, spawn_key=(n, rep)).generate_state(1)[0])
    data = generate_dataset(ctx, truth, sampler, n, cell_seed)
    config = ChainConfig(
        iterations=problem.chain.iterations,
        burn_in=problem.chain.burn_in,
        step=problem.chain.step,
        adapt_window=problem.chain.adapt_window,
        target_acceptance=problem.chain.target_acceptance,
        seed=cell_seed,
        thin=problem.chain.thin,
    )
    rate = float(n) ** (-problem.spec.smoothness / (2 * problem.spec.smoothness + problem.spec.dim_x))
    try:
        chain = run_pcn(ctx, data, problem.spec, config, rescale_with_n=True)
    except Exception:
        return ContractionCell(n, rep, float("nan"), float("nan"), 0.0, rate, diverged=True)
    diff = chain.mean_field - truth
    return ContractionCell(n, rep, diff.l2_norm_uniform(), diff.sup_norm(),
                           chain.acceptance_rate, rate)


def contraction_study(problem: ContractionProblem, n_grid: Sequence[int], replications: int,
                      seed, workers: Optional[int] = None) -> ContractionResult:
    """Posterior-mean error versus sample size over a full pipeline grid.

    Every (sample size, replication) cell generates fresh data, runs a chain
    with the sample-size-rescaled prior, and records posterior-mean errors.
    Cells own independent seed substreams, so results do not depend on the
    number of workers; failed chains are recorded as diverged, not fatal.
    """
    n_grid = tuple(int(n) for n in n_grid)
    if len(n_grid) < 1 or replications < 1:
        raise DomainError("need a nonempty sample-size grid and at least one replication")
    tasks = [(problem, n, rep, seed) for n in n_grid for rep in range(replications)]
    workers = workers or 1
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_contract_cell, tasks, chunksize=1))
    else:
        cells = [_contract_cell(t) for t in tasks]
    cells.sort(key=lambda c: (c.n, c.replication))

    median_l2, median_sup = {}, {}
    for n in n_grid:
        errs = [c.l2_error for c in cells if c.n == n and not c.diverged]
        sups = [c.sup_error for c in cells if c.n == n and not c.diverged]
        median_l2[n] = float(np.median(errs)) if errs else float("nan")
        median_sup[n] = float(np.median(sups)) if sups else float("nan")

    slope = None
    usable = [n for n in n_grid if np.isfinite(median_l2[n])]
    if len(set(usable)) >= 2:
        slope = float(np.polyfit(np.log(usable), np.log([median_l2[n] for n in usable]), 1)[0])
    return ContractionResult(tuple(cells), n_grid, median_l2, median_sup, slope)


def default_workers() -> int:
    env = os.environ.get("CPM_INFER_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return max(1, min(8, os.cpu_count() or 1))
