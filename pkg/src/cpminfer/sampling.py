"""Synthetic data generation, Gaussian log-likelihood, and function-space MCMC.

The observation model draws covariates i.i.d. from a configured law and
observes the forward operator at each draw under additive isotropic Gaussian
noise.  The posterior over field coefficients is sampled with a
preconditioned Crank--Nicolson chain: proposals mix the current state with a
fresh draw from the (sample-size-rescaled) prior, which keeps the prior
invariant regardless of dimension, so the acceptance ratio is the bare
likelihood ratio.  The step size adapts toward a target acceptance band
during burn-in and is frozen afterwards.
"""

import json
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .errors import ChainDivergenceError, DomainError
from .forward import ForwardContext, apply_forward, apply_forward_params
from .ode import TimeDesign
from .prior import CpmField, SeriesPriorSpec, basis_matrix, coeff_sds, rescale_factor
from .rngs import substream

__all__ = [
    "Dataset",
    "ChainConfig",
    "Chain",
    "PosteriorSummary",
    "generate_dataset",
    "log_likelihood",
    "run_pcn",
    "effective_sample_size",
    "summarize_chain",
    "dataset_to_json",
    "dataset_from_json",
]

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Dataset:
    """Observed pairs plus the simulation bookkeeping needed by diagnostics.

    ``epsilons`` stores the realised noise vectors (available in simulation
    only); several diagnostics center on functionals of the true noise.
    """

    xs: np.ndarray
    ys: np.ndarray
    noise_sd: float
    design: TimeDesign
    seed: Optional[int] = None
    epsilons: Optional[np.ndarray] = None
    truth: Optional[CpmField] = None

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        ys = np.atleast_2d(np.asarray(self.ys, dtype=float))
        if xs.shape[0] != ys.shape[0] or xs.shape[0] < 1:
            raise DomainError("need one observation vector per covariate")
        if ys.shape[1] != self.design.n_obs:
            raise DomainError("observation width must match the time design")
        if not np.all(np.isfinite(ys)) or not np.all(np.isfinite(xs)):
            raise DomainError("observations and covariates must be finite")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.xs.shape[0]


def generate_dataset(ctx: ForwardContext, theta0: CpmField, sampler, n, seed) -> Dataset:
    """Draw ``n`` covariate/observation pairs under the model at ``theta0``.

    Covariates come from ``sampler``; noise is isotropic Gaussian with the
    context's noise level (``noise_sd = 0`` gives noiseless data).
    Deterministic per seed.
    """
    if n < 1:
        raise DomainError("need at least one observation")
    if not (ctx.noise_sd >= 0 and np.isfinite(ctx.noise_sd)):
        raise DomainError("data generation needs a finite nonnegative noise level")
    rng_x = substream(seed, 11)
    rng_eps = substream(seed, 12)
    xs = sampler.sample(rng_x, n)
    mean = apply_forward(ctx, theta0, xs)
    eps = ctx.noise_sd * rng_eps.standard_normal(mean.shape)
    return Dataset(xs=xs, ys=mean + eps, noise_sd=ctx.noise_sd, design=ctx.design,
                   seed=int(seed), epsilons=eps, truth=theta0)


def log_likelihood(ctx: ForwardContext, theta: CpmField, data: Dataset) -> float:
    """Gaussian log-likelihood up to an additive constant not depending on theta.

    Returns ``-(1 / (2 noise_sd^2)) sum_k ||y_k - G(theta)(x_k)||^2``; an
    infinite noise level gives the flat likelihood (identically zero) and a
    zero noise level the degenerate limit (zero on an exact fit, -inf off it).
    """
    if not np.isfinite(ctx.noise_sd):
        return 0.0
    resid = data.ys - apply_forward(ctx, theta, data.xs)
    sse = float((resid ** 2).sum())
    if ctx.noise_sd == 0.0:
        return 0.0 if sse == 0.0 else float("-inf")
    return -0.5 * sse / ctx.noise_sd ** 2


@dataclass(frozen=True)
class ChainConfig:
    """Preconditioned Crank--Nicolson chain settings.

    ``thin`` controls how many coefficient draws are retained (every
    ``thin``-th post-burn-in state); ``None`` picks a value that keeps at
    most ~2000 draws.  The step size is adapted every ``adapt_window``
    iterations during burn-in toward the target acceptance band.
    """

    iterations: int = 50_000
    burn_in: Optional[int] = None
    step: float = 0.2
    adapt_window: int = 250
    target_acceptance: tuple = (0.15, 0.35)
    seed: int = 0
    thin: Optional[int] = None

    def __post_init__(self):
        if self.iterations < 2:
            raise DomainError("need at least two iterations")
        burn = self.burn_in if self.burn_in is not None else self.iterations // 5
        if not 0 < burn < self.iterations:
            raise DomainError("burn-in must lie strictly between 0 and iterations")
        if not 0.0 < self.step < 1.0:
            raise DomainError("pCN step size must lie in (0, 1)")
        lo, hi = self.target_acceptance
        if not 0.0 < lo < hi < 1.0:
            raise DomainError("target acceptance band must satisfy 0 < lo < hi < 1")
        object.__setattr__(self, "burn_in", int(burn))


@dataclass
class Chain:
    """Output of one pCN run."""

    draws: np.ndarray                 # (kept, dim_out, n_basis), post burn-in, thinned
    mean_coeffs: np.ndarray           # running mean over all post-burn-in states
    acceptance_rate: float            # post burn-in
    step_final: float
    functional_traces: Dict[str, np.ndarray]
    spec: SeriesPriorSpec
    config: ChainConfig
    n_data: int
    prior_scale: float                # rescaling applied to the base prior sds

    @property
    def mean_field(self) -> CpmField:
        return CpmField(self.spec, self.mean_coeffs)


def run_pcn(ctx: ForwardContext, data: Dataset, spec: SeriesPriorSpec,
            config: ChainConfig, rescale_with_n: bool = True,
            track_functionals: Optional[Dict[str, CpmField]] = None) -> Chain:
    """Sample the posterior over field coefficients with pCN.

    Proposals are ``theta' = sqrt(1 - step^2) theta + step * xi`` with ``xi``
    a fresh draw from the prior (shrunk by the sample-size rescaling when
    ``rescale_with_n``); acceptance probability ``min(1, exp(dloglik))``.
    ``track_functionals`` maps names to fields ``psi``; the uniform-law inner
    product ``<theta, psi>`` is recorded at every post-burn-in iteration.

    Raises :class:`ChainDivergenceError` when an adaptation window sees zero
    acceptances even after the step size has been halved ten times.
    """
    if spec.dim_out != ctx.model.dim_param:
        raise DomainError("prior output dimension must match the model parameter dimension")
    if ctx.noise_sd == 0.0:
        raise DomainError("posterior sampling needs a positive noise level")
    rng = substream(config.seed, 21)
    scale = rescale_factor(spec, data.n) if rescale_with_n else 1.0
    sds = scale * coeff_sds(spec)
    phi = basis_matrix(spec, data.xs)            # (n, n_basis), computed once
    flat_likelihood = not np.isfinite(ctx.noise_sd)
    inv_two_var = 0.0 if flat_likelihood else 0.5 / ctx.noise_sd ** 2

    def loglik(coeffs):
        if flat_likelihood:
            return 0.0
        resid = data.ys - apply_forward_params(ctx, phi @ coeffs.T)
        return -inv_two_var * float((resid ** 2).sum())

    track = track_functionals or {}
    track_coeffs = {name: psi.coeffs for name, psi in track.items()}

    n_post = config.iterations - config.burn_in
    thin = config.thin if config.thin is not None else max(1, n_post // 2000)
    kept = n_post // thin
    draws = np.empty((kept, spec.dim_out, spec.n_basis))
    traces = {name: np.empty(n_post) for name in track}

    coeffs = np.zeros((spec.dim_out, spec.n_basis))
    current_ll = loglik(coeffs)
    step = config.step
    lo, hi = config.target_acceptance
    halvings = 0
    window_accepts = 0
    accepted_post = 0
    mean_coeffs = np.zeros_like(coeffs)
    kept_idx = 0

    for it in range(config.iterations):
        noise = rng.standard_normal(coeffs.shape) * sds
        proposal = np.sqrt(1.0 - step ** 2) * coeffs + step * noise
        proposal_ll = loglik(proposal)
        # -Exp(1) is distributed as log(Uniform); avoids log(0)
        if proposal_ll - current_ll > -rng.exponential():
            coeffs, current_ll = proposal, proposal_ll
            window_accepts += 1
            if it >= config.burn_in:
                accepted_post += 1

        in_burn = it < config.burn_in
        if in_burn and (it + 1) % config.adapt_window == 0:
            rate = window_accepts / config.adapt_window
            if rate == 0.0:
                halvings += 1
                if halvings > 10:
                    raise ChainDivergenceError(
                        "no proposals accepted in an adaptation window after ten halvings")
                step *= 0.5
            elif rate < lo:
                step *= 0.7
            elif rate > hi:
                step = min(step / 0.7, 0.999)
            window_accepts = 0

        if not in_burn:
            j = it - config.burn_in
            mean_coeffs += (coeffs - mean_coeffs) / (j + 1)
            for name, psi_c in track_coeffs.items():
                traces[name][j] = float((coeffs * psi_c).sum())
            if j % thin == 0 and kept_idx < kept:
                draws[kept_idx] = coeffs
                kept_idx += 1

    return Chain(
        draws=draws[:kept_idx],
        mean_coeffs=mean_coeffs,
        acceptance_rate=accepted_post / n_post,
        step_final=step,
        functional_traces=traces,
        spec=spec,
        config=config,
        n_data=data.n,
        prior_scale=scale,
    )


def effective_sample_size(trace) -> float:
    """Autocorrelation-based effective sample size of a scalar trace.

    Sums autocorrelations in pairs while the pair sums stay positive (a
    standard conservative truncation for reversible chains).
    """
    trace = np.asarray(trace, dtype=float)
    n = trace.size
    if n < 4:
        return float(n)
    centered = trace - trace.mean()
    var = centered @ centered / n
    if var == 0.0:
        return float(n)
    full = np.correlate(centered, centered, mode="full")[n - 1:] / (n * var)
    pair_sums = full[1:-1:2] + full[2::2]
    tau = 1.0
    for ps in pair_sums:
        if ps <= 0.0:
            break
        tau += 2.0 * ps
    return float(n / tau)


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean field with errors and mixing numbers."""

    mean_field: CpmField
    acceptance_rate: float
    ess: Dict[str, float]
    l2_error: Optional[float] = None
    sup_error: Optional[float] = None


def summarize_chain(chain: Chain, truth: Optional[CpmField] = None) -> PosteriorSummary:
    """Summarize a chain; errors versus the truth use the uniform-law L2 norm
    and the sup norm on the default grid."""
    mean_field = chain.mean_field
    ess = {name: effective_sample_size(tr) for name, tr in chain.functional_traces.items()}
    l2 = sup = None
    if truth is not None:
        diff = mean_field - truth
        l2 = diff.l2_norm_uniform()
        sup = diff.sup_norm()
    return PosteriorSummary(mean_field, chain.acceptance_rate, ess, l2, sup)


def dataset_to_json(data: Dataset, model_label="two-compartment") -> str:
    """Serialize a dataset with a versioned header."""
    payload = {
        "format_version": DATASET_FORMAT_VERSION,
        "model": model_label,
        "noise_sd": data.noise_sd,
        "design": {"times": data.design.times.tolist(), "horizon": data.design.horizon},
        "seed": data.seed,
        "xs": data.xs.tolist(),
        "ys": data.ys.tolist(),
        "epsilons": None if data.epsilons is None else data.epsilons.tolist(),
    }
    return json.dumps(payload)


def dataset_from_json(text: str) -> Dataset:
    payload = json.loads(text)
    version = payload.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise DomainError(f"unsupported dataset format version: {version}")
    design = TimeDesign(np.asarray(payload["design"]["times"]), payload["design"]["horizon"])
    eps = payload.get("epsilons")
    return Dataset(
        xs=np.asarray(payload["xs"], dtype=float),
        ys=np.asarray(payload["ys"], dtype=float),
        noise_sd=float(payload["noise_sd"]),
        design=design,
        seed=payload.get("seed"),
        epsilons=None if eps is None else np.asarray(eps, dtype=float),
    )
