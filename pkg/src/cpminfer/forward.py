"""Population-level forward operator and its linearization.

A covariate-to-parameter map ``theta`` sends each covariate ``x`` to the
parameters of an individual's dynamics; the forward operator observes the
log concentrations ``G(theta)(x) = (log s1(t_j, theta(x)))_j`` at the design
times.  This module evaluates ``G``, its pointwise Jacobian, the induced
linearization and its adjoint, the pointwise curvature (information)
operator with an SPD solver for the associated linear equation, and a
numerical study of the linearization remainder.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, IllConditionedError, PositivityError
from .ode import OdeModel, TimeDesign, eval_map, eval_map_batch, eval_map_jacobian

__all__ = [
    "ForwardContext",
    "LinearizationReport",
    "apply_forward",
    "apply_forward_params",
    "forward_jacobian",
    "jacobians_along",
    "linearize",
    "adjoint_apply",
    "information_apply",
    "solve_information_equation",
    "linearization_study",
    "empirical_l2",
]

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class ForwardContext:
    """Model, time design, and observation noise level bundled together."""

    model: OdeModel
    design: TimeDesign
    noise_sd: float = 1.0

    def __post_init__(self):
        # 0 means noiseless data generation, +inf a flat likelihood
        if not self.noise_sd >= 0:
            raise DomainError("noise_sd must be nonnegative")

    @property
    def n_obs(self) -> int:
        return self.design.n_obs


def apply_forward_params(ctx: ForwardContext, params) -> np.ndarray:
    """Log observations for raw parameter rows; shape (n, d_o)."""
    obs = eval_map_batch(ctx.model, np.atleast_2d(params), ctx.design)
    if np.min(obs) <= 0.0 or not np.all(np.isfinite(obs)):
        raise PositivityError(
            "observed component must be strictly positive on the design; "
            "the log observation map is undefined for this model/parameter")
    return np.log(obs)


def apply_forward(ctx: ForwardContext, theta, xs) -> np.ndarray:
    """Forward operator ``G(theta)`` at covariates ``xs``; shape (n, d_o)."""
    return apply_forward_params(ctx, theta.evaluate(xs))


def forward_jacobian(ctx: ForwardContext, p) -> np.ndarray:
    """Pointwise Jacobian of the log observations; shape (d_o, dim_param).

    Equals the evaluation-map Jacobian with each row divided by the observed
    value at that time.
    """
    obs = eval_map(ctx.model, p, ctx.design)
    if np.min(obs) <= 0.0:
        raise PositivityError("observed component must be strictly positive on the design")
    return eval_map_jacobian(ctx.model, p, ctx.design) / obs[:, None]


def jacobians_along(ctx: ForwardContext, theta, xs) -> np.ndarray:
    """Forward Jacobians at ``theta(x)`` for each covariate; shape (n, d_o, d_p)."""
    params = theta.evaluate(xs)
    return np.stack([forward_jacobian(ctx, p) for p in params])


def linearize(ctx: ForwardContext, theta0, h, xs) -> np.ndarray:
    """Derivative of the forward operator applied to ``h``; shape (n, d_o)."""
    jacs = jacobians_along(ctx, theta0, xs)
    return np.einsum("nop,np->no", jacs, h.evaluate(xs))


def adjoint_apply(ctx: ForwardContext, theta0, g, xs) -> np.ndarray:
    """Adjoint of the linearization applied to per-point vectors ``g``.

    ``g`` has shape (n, d_o); the result has shape (n, dim_param).  For the
    empirical inner products over ``xs`` this is the exact adjoint of
    :func:`linearize`.
    """
    g = np.asarray(g, dtype=float)
    jacs = jacobians_along(ctx, theta0, xs)
    return np.einsum("nop,no->np", jacs, g)


def information_apply(ctx: ForwardContext, theta0, h, xs) -> np.ndarray:
    """Pointwise curvature operator ``J^T J(theta0(x)) h(x)``; shape (n, d_p)."""
    jacs = jacobians_along(ctx, theta0, xs)
    return np.einsum("nop,noq,nq->np", jacs, jacs, h.evaluate(xs))


def solve_information_equation(ctx: ForwardContext, theta0, psi_values, xs) -> np.ndarray:
    """Solve ``J^T J(theta0(x)) out(x) = psi(x)`` per covariate point.

    ``psi_values`` may be a field (evaluated at ``xs``) or an (n, d_p) array.
    Each pointwise matrix is symmetric positive definite when the design has
    at least as many times as parameters; points whose condition number
    exceeds ``CONDITION_LIMIT`` raise :class:`IllConditionedError` naming the
    offending covariate.
    """
    psi = psi_values.evaluate(xs) if hasattr(psi_values, "evaluate") else np.asarray(psi_values, dtype=float)
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    jacs = jacobians_along(ctx, theta0, xs)
    info = np.einsum("nop,noq->npq", jacs, jacs)
    out = np.empty_like(psi)
    for i, mat in enumerate(info):
        eigvals = np.linalg.eigvalsh(mat)
        if eigvals[0] <= 0 or eigvals[-1] / eigvals[0] > CONDITION_LIMIT:
            cond = np.inf if eigvals[0] <= 0 else eigvals[-1] / eigvals[0]
            raise IllConditionedError(
                f"information matrix is ill-conditioned (condition {cond:.3e}) "
                f"at covariate {xs[i]}", covariate=xs[i], condition=cond)
        out[i] = np.linalg.solve(mat, psi[i])
    return out


def empirical_l2(values) -> float:
    """Root mean squared pointwise Euclidean norm; the norm of the empirical law."""
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean((values ** 2).sum(axis=-1))))


@dataclass(frozen=True)
class LinearizationReport:
    """Remainder sizes of the first-order expansion along a direction.

    ``remainders[i]`` is the empirical L2 norm of
    ``G(theta0 + s_i h) - G(theta0) - s_i I[h]`` and ``h_sup_norms[i]`` the
    sup norm of ``s_i h``.  ``slope`` is the log-log regression slope; a
    second-order accurate linearization gives a slope near two.
    """

    h_sup_norms: np.ndarray
    remainders: np.ndarray
    slope: float
    degenerate: bool


def linearization_study(ctx: ForwardContext, theta0, h_direction, scales: Sequence[float],
                        xs) -> LinearizationReport:
    """Measure the decay order of the linearization remainder.

    ``scales`` must be positive and decreasing.  Returns remainder norms per
    scale and the fitted log-log slope; the slope is NaN (and ``degenerate``
    set) if any remainder vanishes exactly, e.g. for ``h = 0``.
    """
    scales = np.asarray(list(scales), dtype=float)
    if scales.size < 3:
        raise DomainError("need at least three scales for a slope")
    if np.any(scales <= 0) or np.any(np.diff(scales) >= 0):
        raise DomainError("scales must be positive and strictly decreasing")
    base = apply_forward(ctx, theta0, xs)
    lin = linearize(ctx, theta0, h_direction, xs)
    h_sup = h_direction.sup_norm()
    remainders = np.array([
        empirical_l2(apply_forward(ctx, theta0 + float(s) * h_direction, xs) - base - s * lin)
        for s in scales
    ])
    h_sup_norms = scales * h_sup
    if np.any(remainders == 0.0):
        return LinearizationReport(h_sup_norms, remainders, float("nan"), True)
    slope = float(np.polyfit(np.log(h_sup_norms), np.log(remainders), 1)[0])
    return LinearizationReport(h_sup_norms, remainders, slope, False)
