"""Gaussian series prior on vector-valued functions over a covariate box.

Fields are finite tensor-product cosine series on the box mapped to the unit
cube.  The basis is orthonormal for the uniform measure on the box and does
not pin boundary values, which suits covariate-to-parameter maps.  Drawing
independent centred Gaussian coefficients with standard deviations

    sd_j = (1 + |j|_2^2)^{-(smoothness + dim_x/2) / 2}

makes the induced reproducing-kernel Hilbert space a weighted-coefficient
ellipsoid of Sobolev-type regularity ``smoothness + dim_x/2``, so draws are
essentially ``smoothness``-regular.  The module also provides the
sample-size-dependent prior rescaling, the associated contraction-rate
bookkeeping, norms, membership witnesses for the regularisation sets used in
contraction experiments, and JSON serialization.
"""

import functools
import itertools
import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .rngs import substream

__all__ = [
    "SeriesPriorSpec",
    "CpmField",
    "RateTable",
    "FieldNorms",
    "MembershipQuery",
    "multi_indices",
    "coeff_sds",
    "basis_matrix",
    "grid_points",
    "sample_base_prior",
    "rescale_factor",
    "rescale_for_N",
    "rates",
    "field_norms",
    "regularity_weighted_norm",
    "field_to_json",
    "field_from_json",
]

SERIALIZATION_VERSION = 1


@dataclass(frozen=True)
class SeriesPriorSpec:
    """Shape of the prior: smoothness, per-axis cutoff, dimensions, domain."""

    smoothness: float
    cutoff: int
    dim_x: int
    dim_out: int
    box: tuple

    def __post_init__(self):
        if not (np.isfinite(self.smoothness) and self.smoothness > 0):
            raise DomainError("smoothness must be positive")
        if self.cutoff < 1:
            raise DomainError("cutoff must be at least 1")
        if self.dim_x < 1 or self.dim_out < 1:
            raise DomainError("dimensions must be positive")
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if len(box) != self.dim_x:
            raise DomainError("box must have one (lo, hi) pair per covariate axis")
        for lo, hi in box:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise DomainError("box bounds must be finite with lo < hi")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "smoothness", float(self.smoothness))
        object.__setattr__(self, "cutoff", int(self.cutoff))

    @property
    def n_basis(self) -> int:
        return (self.cutoff + 1) ** self.dim_x


@functools.lru_cache(maxsize=64)
def multi_indices(spec: SeriesPriorSpec) -> np.ndarray:
    """All frequency multi-indices in row-major order; shape (n_basis, dim_x)."""
    idx = np.array(list(itertools.product(range(spec.cutoff + 1), repeat=spec.dim_x)),
                   dtype=np.int64)
    idx.flags.writeable = False
    return idx


@functools.lru_cache(maxsize=64)
def coeff_sds(spec: SeriesPriorSpec) -> np.ndarray:
    """Prior standard deviation of each basis coefficient."""
    j2 = (multi_indices(spec).astype(float) ** 2).sum(axis=1)
    sds = (1.0 + j2) ** (-(spec.smoothness + spec.dim_x / 2.0) / 2.0)
    sds.flags.writeable = False
    return sds


def _unit_coords(spec: SeriesPriorSpec, xs) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[1] != spec.dim_x:
        raise DomainError(f"covariates must have shape (n, {spec.dim_x})")
    box = np.asarray(spec.box)
    return (xs - box[:, 0]) / (box[:, 1] - box[:, 0])


def basis_matrix(spec: SeriesPriorSpec, xs) -> np.ndarray:
    """Evaluate every basis function at every covariate; shape (n, n_basis).

    Column order matches :func:`multi_indices`.
    """
    u = _unit_coords(spec, xs)
    k = np.arange(spec.cutoff + 1)
    phi = None
    for axis in range(spec.dim_x):
        per_axis = np.cos(np.pi * np.outer(u[:, axis], k))
        per_axis[:, 1:] *= math.sqrt(2.0)
        phi = per_axis if phi is None else (phi[:, :, None] * per_axis[:, None, :]).reshape(u.shape[0], -1)
    return phi


def grid_points(box, per_axis, midpoint=False) -> np.ndarray:
    """Tensor grid on the box; endpoint grid by default, cell midpoints otherwise."""
    axes = []
    for lo, hi in box:
        if midpoint:
            edges = np.linspace(lo, hi, per_axis + 1)
            axes.append(0.5 * (edges[:-1] + edges[1:]))
        else:
            axes.append(np.linspace(lo, hi, per_axis))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class CpmField:
    """A function from the covariate box to R^dim_out, in coefficient form.

    Coefficients have shape ``(dim_out, n_basis)``; evaluation is
    ``theta(x)_i = sum_j coeffs[i, j] phi_j(x)``.  Fields over the same spec
    form a vector space via ``+``, ``-`` and scalar ``*``.
    """

    spec: SeriesPriorSpec
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.spec.dim_out, self.spec.n_basis):
            raise DomainError(
                f"coefficients must have shape ({self.spec.dim_out}, {self.spec.n_basis})")
        coeffs = coeffs.copy()
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, spec: SeriesPriorSpec) -> "CpmField":
        return cls(spec, np.zeros((spec.dim_out, spec.n_basis)))

    @classmethod
    def constant(cls, spec: SeriesPriorSpec, value) -> "CpmField":
        value = np.asarray(value, dtype=float)
        if value.shape != (spec.dim_out,):
            raise DomainError(f"constant value must have shape ({spec.dim_out},)")
        coeffs = np.zeros((spec.dim_out, spec.n_basis))
        coeffs[:, 0] = value  # basis function 0 is identically one
        return cls(spec, coeffs)

    def evaluate(self, xs) -> np.ndarray:
        """Field values at covariates ``xs``; shape (n, dim_out)."""
        return basis_matrix(self.spec, xs) @ self.coeffs.T

    def __add__(self, other: "CpmField") -> "CpmField":
        self._check_compatible(other)
        return CpmField(self.spec, self.coeffs + other.coeffs)

    def __sub__(self, other: "CpmField") -> "CpmField":
        self._check_compatible(other)
        return CpmField(self.spec, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "CpmField":
        return CpmField(self.spec, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def _check_compatible(self, other: "CpmField"):
        if other.spec != self.spec:
            raise DomainError("fields live over different prior specs")

    def rkhs_norm(self) -> float:
        """Weighted-coefficient norm of the prior's Cameron--Martin space."""
        return float(np.sqrt(((self.coeffs / coeff_sds(self.spec)) ** 2).sum()))

    def l2_norm_uniform(self) -> float:
        """Exact L2 norm for the uniform covariate law (basis orthonormality)."""
        return float(np.linalg.norm(self.coeffs))

    def empirical_l2_norm(self, xs) -> float:
        """Root mean squared pointwise norm over the given covariates."""
        vals = self.evaluate(xs)
        return float(np.sqrt(np.mean((vals ** 2).sum(axis=1))))

    def sup_norm(self, per_axis=64) -> float:
        """Max pointwise Euclidean norm over an endpoint grid on the box."""
        vals = self.evaluate(grid_points(self.spec.box, per_axis))
        return float(np.sqrt((vals ** 2).sum(axis=1)).max())


def sample_base_prior(spec: SeriesPriorSpec, seed, *key) -> CpmField:
    """Draw a field with independent centred Gaussian coefficients.

    Deterministic for fixed ``(seed, *key)``; distinct keys give independent
    counter-based substreams.
    """
    rng = substream(seed, *key)
    coeffs = rng.standard_normal((spec.dim_out, spec.n_basis)) * coeff_sds(spec)
    return CpmField(spec, coeffs)


def rescale_factor(spec: SeriesPriorSpec, n_samples: int) -> float:
    """Sample-size-dependent shrinkage ``n^{-d_x / (4 a + 2 d_x)}``."""
    if n_samples < 1:
        raise DomainError("sample size must be at least 1")
    return float(n_samples) ** (-spec.dim_x / (4.0 * spec.smoothness + 2.0 * spec.dim_x))


def rescale_for_N(field: CpmField, n_samples: int) -> CpmField:
    """Shrink all coefficients by :func:`rescale_factor`."""
    return field * rescale_factor(field.spec, n_samples)


@dataclass(frozen=True)
class RateTable:
    """Contraction-rate bookkeeping for given smoothness exponents.

    ``contraction_rate`` is the L2 posterior contraction rate, ``sup_rate``
    the weaker sup-norm rate obtained by interpolating the regularisation
    exponent ``beta`` down to ``beta_prime``, and ``prior_rescale`` the prior
    shrinkage.  ``feasible`` records whether the exponent window needed for
    the functional normality result is nonempty.
    """

    alpha: float
    beta: float
    beta_prime: float
    dim_x: int

    def contraction_rate(self, n: int) -> float:
        return float(n) ** (-self.alpha / (2.0 * self.alpha + self.dim_x))

    def sup_rate(self, n: int) -> float:
        return self.contraction_rate(n) ** ((self.beta - self.beta_prime) / self.beta)

    def prior_rescale(self, n: int) -> float:
        return float(n) ** (-self.dim_x / (4.0 * self.alpha + 2.0 * self.dim_x))

    @property
    def feasible(self) -> bool:
        return self.dim_x < 2.0 * self.alpha * self.beta / (3.0 * self.alpha + 2.0 * self.beta)


def rates(alpha, beta, beta_prime, dim_x) -> RateTable:
    """Validated rate table; requires ``dim_x / 2 < beta_prime < beta``."""
    if not (alpha > 0 and beta > 0):
        raise DomainError("smoothness exponents must be positive")
    if not (dim_x / 2.0 < beta_prime < beta):
        raise DomainError("beta_prime must lie in (dim_x / 2, beta)")
    return RateTable(float(alpha), float(beta), float(beta_prime), int(dim_x))


def regularity_weighted_norm(field: CpmField, exponent: float) -> float:
    """Sobolev-type coefficient norm ``sqrt(sum (1 + |j|^2)^e c_j^2)``."""
    j2 = (multi_indices(field.spec).astype(float) ** 2).sum(axis=1)
    w = (1.0 + j2) ** exponent
    return float(np.sqrt((w * field.coeffs ** 2).sum()))


def _sup_dominating_norm(field: CpmField, beta: float) -> float:
    """A computable norm that dominates the sup norm.

    By Cauchy--Schwarz, each component satisfies
    ``sup |theta_i| <= sqrt(sum_j 2^{d} (1+|j|^2)^{-b}) * ||theta_i||_{H^b}``
    since every basis function is bounded by ``2^{d/2}``; summing components
    in quadrature dominates the pointwise Euclidean norm.
    """
    j2 = (multi_indices(field.spec).astype(float) ** 2).sum(axis=1)
    embed = math.sqrt((2.0 ** field.spec.dim_x * (1.0 + j2) ** (-beta)).sum())
    return embed * regularity_weighted_norm(field, beta)


def _low_frequency_projector(spec: SeriesPriorSpec, fraction=0.25) -> np.ndarray:
    """Boolean mask keeping the lowest-frequency ``fraction`` of basis indices."""
    j2 = (multi_indices(spec).astype(float) ** 2).sum(axis=1)
    keep = max(1, int(spec.n_basis * fraction))
    order = np.argsort(j2, kind="stable")[:keep]
    mask = np.zeros(spec.n_basis, dtype=bool)
    mask[order] = True
    return mask


@dataclass(frozen=True)
class MembershipQuery:
    """Inputs for the regularisation-set membership witnesses.

    ``bound`` is the set radius, ``n_samples`` the sample size entering the
    rates, ``table`` the rate table, ``truth`` the reference field for the
    sup-norm neighbourhood (may be ``None`` to skip that check).
    """

    bound: float
    n_samples: int
    table: RateTable
    truth: Optional[CpmField] = None


@dataclass(frozen=True)
class FieldNorms:
    empirical_l2: Optional[float]
    sup_grid: float
    rkhs: float
    l2_uniform: float
    theta_n_witnessed: Optional[bool] = None
    theta_n_sup_witnessed: Optional[bool] = None


def field_norms(field: CpmField, xs=None, grid_per_axis=64,
                membership: Optional[MembershipQuery] = None) -> FieldNorms:
    """Norms of a field plus optional regularisation-set membership witnesses.

    Membership in the L2-ball/RKHS-ball decomposition set is checked with a
    fixed decomposition: the low-frequency quarter of the coefficients plays
    the RKHS part, the remainder the small-L2 part.  Exact membership is an
    infimum over all decompositions, so a positive answer ("witnessed") is
    sound while a negative one only means this particular witness failed.
    """
    emp = field.empirical_l2_norm(xs) if xs is not None else None
    sup = field.sup_norm(grid_per_axis)
    rkhs = field.rkhs_norm()
    l2u = field.l2_norm_uniform()
    theta_n = theta_n_sup = None
    if membership is not None:
        m, table = membership.bound, membership.table
        delta_n = table.contraction_rate(membership.n_samples)
        mask = _low_frequency_projector(field.spec)
        smooth_part = CpmField(field.spec, np.where(mask, field.coeffs, 0.0))
        rough_part = CpmField(field.spec, np.where(mask, 0.0, field.coeffs))
        rough_l2 = rough_part.empirical_l2_norm(xs) if xs is not None else rough_part.l2_norm_uniform()
        r_norm = _sup_dominating_norm(field, table.beta)
        theta_n = bool(rough_l2 <= m * delta_n
                       and smooth_part.rkhs_norm() <= m
                       and r_norm <= m)
        if membership.truth is not None:
            sup_dist = (field - membership.truth).sup_norm(grid_per_axis)
            theta_n_sup = bool(r_norm <= m
                               and sup_dist <= m * table.sup_rate(membership.n_samples))
    return FieldNorms(emp, sup, rkhs, l2u, theta_n, theta_n_sup)


def field_to_json(field: CpmField) -> str:
    """Serialize a field with a versioned header."""
    payload = {
        "format_version": SERIALIZATION_VERSION,
        "smoothness": field.spec.smoothness,
        "cutoff": field.spec.cutoff,
        "dim_x": field.spec.dim_x,
        "dim_out": field.spec.dim_out,
        "box": [list(b) for b in field.spec.box],
        "coeffs": field.coeffs.ravel().tolist(),
    }
    return json.dumps(payload)


def field_from_json(text: str) -> CpmField:
    payload = json.loads(text)
    version = payload.get("format_version")
    if version != SERIALIZATION_VERSION:
        raise DomainError(f"unsupported field format version: {version}")
    spec = SeriesPriorSpec(
        smoothness=payload["smoothness"],
        cutoff=payload["cutoff"],
        dim_x=payload["dim_x"],
        dim_out=payload["dim_out"],
        box=tuple(tuple(b) for b in payload["box"]),
    )
    coeffs = np.asarray(payload["coeffs"], dtype=float).reshape(spec.dim_out, spec.n_basis)
    return CpmField(spec, coeffs)
