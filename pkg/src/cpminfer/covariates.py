"""Covariate laws: samplers and inner products of fields under a law.

Two concrete laws are supported: the uniform distribution on the covariate
box and finite discrete mixtures (covariates such as sex or dose group take
finitely many values, so inference must not assume a density).  For the
uniform law the cosine basis is orthonormal, making L2 inner products of
fields exact coefficient contractions; discrete mixtures evaluate exactly on
their atoms; any other sampler falls back to Monte Carlo.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .prior import CpmField
from .rngs import substream

__all__ = [
    "UniformBoxSampler",
    "DiscreteMixtureSampler",
    "l2_inner",
    "l2_norm",
]


@dataclass(frozen=True)
class UniformBoxSampler:
    """Uniform law on an axis-aligned box."""

    box: tuple

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        for lo, hi in box:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise DomainError("box bounds must be finite with lo < hi")
        object.__setattr__(self, "box", box)

    @property
    def dim(self) -> int:
        return len(self.box)

    def sample(self, rng, n) -> np.ndarray:
        box = np.asarray(self.box)
        u = rng.random((n, self.dim))
        return box[:, 0] + u * (box[:, 1] - box[:, 0])


@dataclass(frozen=True)
class DiscreteMixtureSampler:
    """Finitely supported law with the given atoms and weights."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        if atoms.shape[0] != weights.size or atoms.shape[0] == 0:
            raise DomainError("need one weight per atom")
        if np.any(weights < 0) or not np.isclose(weights.sum(), 1.0):
            raise DomainError("weights must be nonnegative and sum to one")
        atoms.flags.writeable = False
        weights = weights / weights.sum()
        weights.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def sample(self, rng, n) -> np.ndarray:
        idx = rng.choice(self.atoms.shape[0], size=n, p=self.weights)
        return self.atoms[idx]


def l2_inner(f: CpmField, g: CpmField, law, seed=None, n_mc=65536) -> float:
    """Inner product ``int <f(x), g(x)> law(dx)``.

    Exact for the uniform-box law (coefficient contraction; the basis is
    orthonormal there) and for discrete mixtures (weighted sum over atoms);
    Monte Carlo with ``n_mc`` fresh draws otherwise, which requires ``seed``.
    """
    if f.spec != g.spec:
        raise DomainError("fields live over different prior specs")
    if isinstance(law, UniformBoxSampler):
        if tuple(law.box) != tuple(f.spec.box):
            raise DomainError("uniform law box must match the field domain")
        return float((f.coeffs * g.coeffs).sum())
    if isinstance(law, DiscreteMixtureSampler):
        vals = (f.evaluate(law.atoms) * g.evaluate(law.atoms)).sum(axis=1)
        return float((law.weights * vals).sum())
    if seed is None:
        raise DomainError("Monte Carlo inner products need a seed")
    xs = law.sample(substream(seed, 97), n_mc)
    return float(np.mean((f.evaluate(xs) * g.evaluate(xs)).sum(axis=1)))


def l2_norm(f: CpmField, law, seed=None, n_mc=65536) -> float:
    return float(np.sqrt(max(l2_inner(f, f, law, seed=seed, n_mc=n_mc), 0.0)))
