"""Parametrised, diagonalisable, time-homogeneous linear ODE systems.

This module provides the generic machinery shared by all concrete models:
closed-form solutions ``s(t, p) = exp(A(p) t) s0(p)``, the sum-of-exponentials
representation of the observed (first) solution component, evaluation maps on
a fixed time design, analytic Jacobians assembled from the coefficient-map
Jacobian, sign-change root counting for exponential-affine sums, and a
randomized probe that estimates the local boundedness / Lipschitz / stability
constants of the parameter-to-observation map.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import CapabilityError, DomainError, NumericDomainError, PositivityError, PreconditionError
from .rngs import substream

__all__ = [
    "TimeDesign",
    "CoefficientRepr",
    "OdeModel",
    "StabilityReport",
    "solve_state",
    "eval_map",
    "eval_map_batch",
    "eval_map_jacobian",
    "coefficient_jacobian_rank",
    "count_roots_exp_affine",
    "count_roots_exp_affine_batch",
    "locate_roots_exp_affine",
    "probe_stability",
    "sample_ball",
    "rk4_solve",
    "fd_jacobian",
]


@dataclass(frozen=True)
class TimeDesign:
    """A fixed, finite set of observation instants within ``[0, horizon]``.

    Attributes
    ----------
    times : np.ndarray
        Strictly increasing observation instants, all in ``[0, horizon]``.
    horizon : float
        Right end of the time window.
    """

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        if times.ndim != 1 or times.size < 1:
            raise DomainError("time design needs at least one observation instant")
        if not np.all(np.isfinite(times)) or not np.isfinite(self.horizon):
            raise DomainError("time design entries must be finite")
        if self.horizon <= 0:
            raise DomainError("horizon must be positive")
        if np.any(np.diff(times) <= 0):
            raise DomainError("observation times must be distinct and strictly increasing")
        if times[0] < 0 or times[-1] > self.horizon:
            raise DomainError("observation times must lie in [0, horizon]")
        times.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n_obs(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class CoefficientRepr:
    """Sum-of-exponentials form of the observed solution component.

    Represents ``t -> sum_i prefactors[i] * exp(rates[i] * t)`` with nonzero
    prefactors and pairwise distinct rates; the effective number of scalars
    needed to describe the signal is ``intrinsic_dim = 2 * len(prefactors)``.
    """

    prefactors: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.prefactors, dtype=float))
        lam = np.atleast_1d(np.asarray(self.rates, dtype=float))
        if a.shape != lam.shape or a.ndim != 1 or a.size == 0:
            raise DomainError("prefactors and rates must be 1-d arrays of equal positive length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(lam))):
            raise DomainError("coefficient representation must be finite")
        if np.any(a == 0.0):
            raise DomainError("prefactors must be nonzero")
        if np.unique(lam).size != lam.size:
            raise DomainError("rates must be pairwise distinct")
        a.flags.writeable = False
        lam.flags.writeable = False
        object.__setattr__(self, "prefactors", a)
        object.__setattr__(self, "rates", lam)

    @property
    def intrinsic_dim(self) -> int:
        return 2 * self.prefactors.size

    def evaluate(self, t):
        """Evaluate the exponential sum at scalar or array ``t``."""
        t = np.asarray(t, dtype=float)
        return np.exp(np.multiply.outer(t, self.rates)) @ self.prefactors


@dataclass(frozen=True)
class OdeModel:
    """A parametrised linear homogeneous initial value problem.

    The state solves ``ds/dt = matrix_fn(p) s`` with ``s(0) = init_fn(p)``.
    ``coeff_fn`` gives the sum-of-exponentials representation of the first
    state component and ``coeff_jacobian_fn`` its Jacobian, with rows ordered
    as (prefactor gradients, rate gradients).  The optional hooks provide
    closed-form eigensystems and vectorized evaluation; every operation falls
    back to generic (slower) paths when they are absent.

    ``param_box`` restricts the admissible parameters to an axis-aligned box;
    ``None`` means all of R^dim_param.
    """

    dim_state: int
    dim_param: int
    matrix_fn: Callable[[np.ndarray], np.ndarray]
    init_fn: Callable[[np.ndarray], np.ndarray]
    coeff_fn: Optional[Callable[[np.ndarray], CoefficientRepr]] = None
    coeff_jacobian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    eigensystem_fn: Optional[Callable[[np.ndarray], tuple]] = None
    coeff_batch_fn: Optional[Callable[[np.ndarray], tuple]] = None
    state_batch_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    param_box: Optional[np.ndarray] = None
    label: str = "ode-model"

    def contains(self, p) -> bool:
        """Whether ``p`` lies in the admissible parameter set."""
        p = np.asarray(p, dtype=float)
        if self.param_box is None:
            return bool(np.all(np.isfinite(p)))
        box = np.asarray(self.param_box, dtype=float)
        return bool(np.all(np.isfinite(p)) and np.all(p >= box[:, 0]) and np.all(p <= box[:, 1]))

    def require_param(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim_param,):
            raise DomainError(f"parameter must have shape ({self.dim_param},), got {p.shape}")
        if not self.contains(p):
            raise DomainError("parameter lies outside the admissible set")
        return p


@dataclass(frozen=True)
class StabilityReport:
    """Randomized estimates of the local constants of a model.

    All entries are running maxima of ratios over sampled parameter pairs in
    the ball of the given radius, so for a fixed seed they are monotone
    nondecreasing in ``sample_count``.  ``degenerate_pairs`` counts pairs with
    distinct parameters but identical observation vectors; any such pair
    falsifies invertibility of the evaluation map on the probed ball.
    """

    radius: float
    matrix_bound: float        # sup ||A(p)||_2 v ||s0(p)||_2
    log_obs_bound: float       # sup_j |log s1(t_j, p)|
    solution_lipschitz: float  # sup_t ||s(t,p) - s(t,q)||_2 / ||p - q||_2
    inverse_lipschitz: float   # ||p - q||_2 / ||E(p) - E(q)||_2
    log_inverse_lipschitz: float  # ||p - q||_2 / ||log E(p) - log E(q)||_2
    sample_count: int
    degenerate_pairs: int = 0

    @property
    def stability_violation(self) -> bool:
        return self.degenerate_pairs > 0


def solve_state(model: OdeModel, p, t) -> np.ndarray:
    """State ``exp(A(p) t) s0(p)`` of the model at time ``t``.

    Uses the model's closed-form eigensystem when available, otherwise a
    scaling-and-squaring matrix exponential.
    """
    p = model.require_param(p)
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise DomainError("time must be finite and nonnegative")
    s0 = np.asarray(model.init_fn(p), dtype=float)
    if model.eigensystem_fn is not None:
        vecs, lam = model.eigensystem_fn(p)
        vecs = np.asarray(vecs, dtype=float)
        lam = np.asarray(lam, dtype=float)
        if not (np.all(np.isfinite(vecs)) and np.all(np.isfinite(lam))):
            raise NumericDomainError("eigensystem contains non-finite entries")
        weights = np.linalg.solve(vecs, s0)
        return vecs @ (np.exp(lam * t) * weights)
    a_mat = np.asarray(model.matrix_fn(p), dtype=float)
    if not np.all(np.isfinite(a_mat)):
        raise NumericDomainError("ODE matrix contains non-finite entries")
    return scipy.linalg.expm(a_mat * t) @ s0


def rk4_solve(model: OdeModel, p, times, step) -> np.ndarray:
    """Integrate the model with the classical fourth-order Runge--Kutta scheme.

    Returns the states at the requested (sorted, nonnegative) ``times``,
    taking fixed steps of size ``step`` and a shortened final step onto each
    requested time.  Serves as a closed-form-free cross-check.
    """
    p = model.require_param(p)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise DomainError("times must be sorted and nonnegative")
    a_mat = np.asarray(model.matrix_fn(p), dtype=float)
    s = np.asarray(model.init_fn(p), dtype=float).copy()
    out = np.empty((times.size, s.size))
    t_now = 0.0

    def advance(state, h):
        k1 = a_mat @ state
        k2 = a_mat @ (state + 0.5 * h * k1)
        k3 = a_mat @ (state + 0.5 * h * k2)
        k4 = a_mat @ (state + h * k3)
        return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    for j, t_target in enumerate(times):
        remaining = t_target - t_now
        n_full = int(remaining // step)
        for _ in range(n_full):
            s = advance(s, step)
        t_now += n_full * step
        tail = t_target - t_now
        if tail > 1e-15:
            s = advance(s, tail)
            t_now = t_target
        out[j] = s
    return out


def _coeff_or_error(model: OdeModel, p) -> CoefficientRepr:
    if model.coeff_fn is None:
        raise CapabilityError("model does not provide a coefficient map")
    return model.coeff_fn(p)


def eval_map(model: OdeModel, p, design: TimeDesign) -> np.ndarray:
    """Observed component at the design times, ``(s1(t_j, p))_j``."""
    p = model.require_param(p)
    if model.coeff_fn is not None:
        return model.coeff_fn(p).evaluate(design.times)
    return np.array([solve_state(model, p, t)[0] for t in design.times])


def eval_map_batch(model: OdeModel, params, design: TimeDesign) -> np.ndarray:
    """Vectorized :func:`eval_map` over rows of ``params``; shape (n, d_o)."""
    params = np.asarray(params, dtype=float)
    if params.ndim != 2 or params.shape[1] != model.dim_param:
        raise DomainError("params must have shape (n, dim_param)")
    if model.coeff_batch_fn is not None:
        prefs, rates = model.coeff_batch_fn(params)
        # (n, d, d_o) exponentials contracted against (n, d) prefactors
        expo = np.exp(rates[:, :, None] * design.times[None, None, :])
        return np.einsum("nd,ndo->no", prefs, expo)
    return np.vstack([eval_map(model, p, design) for p in params])


def eval_map_jacobian(model: OdeModel, p, design: TimeDesign) -> np.ndarray:
    """Jacobian of :func:`eval_map`, shape (d_o, dim_param).

    Row ``j`` is the parameter gradient of the observed component at time
    ``t_j``, assembled from the coefficient-map Jacobian by the product rule:
    ``sum_i exp(l_i t) (grad a_i + a_i grad l_i t)``.
    """
    p = model.require_param(p)
    if model.coeff_jacobian_fn is None:
        raise CapabilityError("model does not provide a coefficient-map Jacobian")
    repr_ = _coeff_or_error(model, p)
    jac = np.asarray(model.coeff_jacobian_fn(p), dtype=float)
    d = repr_.prefactors.size
    if jac.shape != (2 * d, model.dim_param):
        raise DomainError(f"coefficient Jacobian must have shape ({2 * d}, {model.dim_param})")
    grad_a, grad_lam = jac[:d], jac[d:]
    expo = np.exp(np.multiply.outer(design.times, repr_.rates))       # (d_o, d)
    weighted = expo * repr_.prefactors * design.times[:, None]        # a_i exp(l_i t) t
    return expo @ grad_a + weighted @ grad_lam


def coefficient_jacobian_rank(model: OdeModel, p, rel_threshold=1e-10):
    """Numerical rank and smallest singular value of the coefficient Jacobian.

    Singular values above ``rel_threshold`` times the largest one count
    toward the rank.
    """
    p = model.require_param(p)
    if model.coeff_jacobian_fn is None:
        raise CapabilityError("model does not provide a coefficient-map Jacobian")
    jac = np.asarray(model.coeff_jacobian_fn(p), dtype=float)
    svals = np.linalg.svd(jac, compute_uv=False)
    if svals.size == 0 or svals[0] == 0.0:
        return 0, 0.0
    rank = int(np.count_nonzero(svals > rel_threshold * svals[0]))
    return rank, float(svals[-1])


# ---------------------------------------------------------------------------
# Root counting for exponential-affine sums
# ---------------------------------------------------------------------------

def _validate_exp_affine(betas, xis, gammas):
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    gammas = np.atleast_2d(np.asarray(gammas, dtype=float))
    if not (betas.shape == xis.shape == gammas.shape):
        raise PreconditionError("betas, xis, gammas must have identical shapes")
    for row in betas:
        if np.unique(row).size != row.size:
            raise PreconditionError("exponents must be pairwise distinct")
    if np.any(np.all((xis == 0.0) & (gammas == 0.0), axis=1)):
        raise PreconditionError("affine coefficients must not all be zero")
    return betas, xis, gammas


def _scaled_values(betas, xis, gammas, grid):
    """Evaluate sum_k exp(b_k t)(xi_k + g_k t) times a positive factor.

    The factor exp(-max_k b_k t) per grid point prevents overflow and keeps
    the sign pattern intact.  Shapes: coefficient arrays (m, k), grid (g,);
    result (m, g).
    """
    expo = betas[:, :, None] * grid[None, None, :]
    expo -= expo.max(axis=1, keepdims=True)
    return np.einsum("mkg,mkg->mg", np.exp(expo), xis[:, :, None] + gammas[:, :, None] * grid)


def _count_sign_changes(values) -> np.ndarray:
    """Count sign changes per row, treating exact zeros conservatively.

    A zero is forward-filled with the preceding sign, so a tangential touch
    contributes no change (an undercount, which is safe when verifying upper
    bounds on root counts) while a crossing through a grid zero contributes
    exactly one.
    """
    signs = np.sign(values).astype(np.int8)
    if np.any(signs == 0):
        idx = np.where(signs == 0, 0, np.arange(signs.shape[1])[None, :])
        np.maximum.accumulate(idx, axis=1, out=idx)
        signs = np.take_along_axis(signs, idx, axis=1)
    left, right = signs[:, :-1], signs[:, 1:]
    return ((left != right) & (left != 0) & (right != 0)).sum(axis=1)


def count_roots_exp_affine_batch(betas, xis, gammas, window=(-50.0, 50.0), resolution=1e-3,
                                 chunk=256) -> np.ndarray:
    """Root counts of ``t -> sum_k exp(b_k t)(xi_k + g_k t)`` per row.

    Counts sign changes on a uniform grid of the given resolution over the
    window.  Tangential roots and roots outside the window are missed; the
    result is a lower bound on the true root count.
    """
    betas, xis, gammas = _validate_exp_affine(betas, xis, gammas)
    lo, hi = float(window[0]), float(window[1])
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise PreconditionError("window must be a finite nonempty interval")
    if resolution <= 0:
        raise PreconditionError("resolution must be positive")
    grid = np.linspace(lo, hi, int(np.ceil((hi - lo) / resolution)) + 1)
    counts = np.empty(betas.shape[0], dtype=np.int64)
    for start in range(0, betas.shape[0], chunk):
        sl = slice(start, start + chunk)
        counts[sl] = _count_sign_changes(_scaled_values(betas[sl], xis[sl], gammas[sl], grid))
    return counts


def locate_roots_exp_affine(terms: Sequence, window=(-50.0, 50.0), resolution=1e-3,
                            refine_width=1e-12) -> np.ndarray:
    """Locations of the sign-changing roots of one exponential-affine sum.

    Each bracketed sign change is refined by bisection to the requested
    interval width.  ``terms`` is a sequence of ``(beta, xi, gamma)`` triples.
    """
    arr = np.asarray(terms, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise PreconditionError("terms must be a sequence of (beta, xi, gamma) triples")
    betas, xis, gammas = (arr[:, 0][None, :], arr[:, 1][None, :], arr[:, 2][None, :])
    betas, xis, gammas = _validate_exp_affine(betas, xis, gammas)
    lo, hi = float(window[0]), float(window[1])
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise PreconditionError("window must be a finite nonempty interval")
    if resolution <= 0:
        raise PreconditionError("resolution must be positive")
    grid = np.linspace(lo, hi, int(np.ceil((hi - lo) / resolution)) + 1)
    vals = _scaled_values(betas, xis, gammas, grid)[0]

    def f(t):
        return _scaled_values(betas, xis, gammas, np.atleast_1d(t))[0, 0]

    roots = []
    signs = np.sign(vals)
    for i in np.nonzero((signs[:-1] != signs[1:]) & (signs[:-1] != 0))[0]:
        if signs[i + 1] == 0:
            roots.append(grid[i + 1])
            continue
        a, b = grid[i], grid[i + 1]
        fa = vals[i]
        while b - a > refine_width:
            mid = 0.5 * (a + b)
            fm = f(mid)
            if fm == 0.0:
                a = b = mid
                break
            if np.sign(fm) == np.sign(fa):
                a, fa = mid, fm
            else:
                b = mid
        roots.append(0.5 * (a + b))
    return np.asarray(roots)


def count_roots_exp_affine(terms: Sequence, window=(-50.0, 50.0), resolution=1e-3) -> int:
    """Number of sign-changing roots of one exponential-affine sum.

    See :func:`locate_roots_exp_affine` for the bracketing and refinement
    scheme; only the count is returned.
    """
    return int(locate_roots_exp_affine(terms, window=window, resolution=resolution).size)


def fd_jacobian(f, p, step=1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued function at ``p``."""
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        shift = np.zeros_like(p)
        shift[i] = step
        cols.append((np.asarray(f(p + shift)) - np.asarray(f(p - shift))) / (2.0 * step))
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# Stability probing
# ---------------------------------------------------------------------------

def sample_ball(rng, n, dim, radius) -> np.ndarray:
    """``n`` points uniform in the Euclidean ball of the given radius."""
    if n == 0:
        return np.empty((0, dim))
    direction = rng.standard_normal((n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radii = radius * rng.random(n) ** (1.0 / dim)
    return direction * radii[:, None]


def _states_on_grid(model: OdeModel, params, ts) -> np.ndarray:
    if model.state_batch_fn is not None:
        return np.asarray(model.state_batch_fn(params, ts), dtype=float)
    out = np.empty((params.shape[0], ts.size, model.dim_state))
    for i, p in enumerate(params):
        for j, t in enumerate(ts):
            out[i, j] = solve_state(model, p, t)
    return out


def probe_stability(model: OdeModel, design: TimeDesign, radius, n_pairs, seed,
                    n_time_grid=33) -> StabilityReport:
    """Estimate the model's local constants by sampling parameter pairs.

    Draws ``n_pairs`` i.i.d. pairs uniformly from the ball of the given
    radius and records running maxima of: the matrix/initial-condition norms,
    the magnitude of the log observations, the state Lipschitz ratio over a
    time grid, and the inverse ratios through the plain and log observation
    maps.  Pairs with equal observations but distinct parameters are counted
    as degenerate instead of raising.  Deterministic for a fixed seed; the
    first ``k`` pairs of a longer run coincide with a run of length ``k``.
    """
    if n_pairs < 0:
        raise DomainError("n_pairs must be nonnegative")
    if n_pairs == 0:
        return StabilityReport(radius, 0.0, 0.0, 0.0, 0.0, 0.0, 0)
    # Directions and radii come from separate substreams so that the first k
    # pairs of a longer run coincide with a run of length k.
    direction = substream(seed, 1).standard_normal((2 * n_pairs, model.dim_param))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radii = radius * substream(seed, 2).random(2 * n_pairs) ** (1.0 / model.dim_param)
    pairs = (direction * radii[:, None]).reshape(n_pairs, 2, model.dim_param)
    ps, qs = pairs[:, 0], pairs[:, 1]
    pairs = pairs.reshape(2 * n_pairs, model.dim_param)

    norm_bound = 0.0
    for p in pairs:
        a_mat = np.asarray(model.matrix_fn(p), dtype=float)
        s0 = np.asarray(model.init_fn(p), dtype=float)
        norm_bound = max(norm_bound, np.linalg.norm(a_mat, 2), np.linalg.norm(s0, 2))

    obs_p = eval_map_batch(model, ps, design)
    obs_q = eval_map_batch(model, qs, design)
    if np.min(obs_p) <= 0 or np.min(obs_q) <= 0:
        raise PositivityError("observed component must be positive for the log observation map")
    log_obs_bound = float(max(np.abs(np.log(obs_p)).max(), np.abs(np.log(obs_q)).max()))

    tgrid = np.union1d(np.linspace(0.0, design.horizon, n_time_grid), design.times)
    states_p = _states_on_grid(model, ps, tgrid)
    states_q = _states_on_grid(model, qs, tgrid)
    param_dist = np.linalg.norm(ps - qs, axis=1)
    state_dist = np.linalg.norm(states_p - states_q, axis=2).max(axis=1)

    nondegenerate = param_dist > 0
    lipschitz = float(np.max(state_dist[nondegenerate] / param_dist[nondegenerate], initial=0.0))

    obs_dist = np.linalg.norm(obs_p - obs_q, axis=1)
    log_obs_dist = np.linalg.norm(np.log(obs_p) - np.log(obs_q), axis=1)
    degenerate = int(np.count_nonzero(nondegenerate & (obs_dist == 0.0)))
    ok = nondegenerate & (obs_dist > 0.0)
    inverse_lipschitz = float(np.max(param_dist[ok] / obs_dist[ok], initial=0.0))
    ok_log = nondegenerate & (log_obs_dist > 0.0)
    log_inverse_lipschitz = float(np.max(param_dist[ok_log] / log_obs_dist[ok_log], initial=0.0))

    return StabilityReport(
        radius=float(radius),
        matrix_bound=float(norm_bound),
        log_obs_bound=log_obs_bound,
        solution_lipschitz=lipschitz,
        inverse_lipschitz=inverse_lipschitz,
        log_inverse_lipschitz=log_inverse_lipschitz,
        sample_count=int(n_pairs),
        degenerate_pairs=degenerate,
    )
