"""Nonparametric Bayesian inference of covariate-to-parameter maps.

A population of individuals shares one parametrised linear ODE model; each
individual's parameters are determined by observable covariates through an
unknown covariate-to-parameter map.  This package provides the closed-form
model machinery (including a two-compartment drug-kinetics instance), the
log-observation forward operator with its Jacobians and information
operator, a Gaussian cosine-series prior with sample-size rescaling,
synthetic data generation, a preconditioned Crank--Nicolson posterior
sampler, and empirical diagnostics for the asymptotic normality and
contraction behaviour of the posterior.
"""

__version__ = "0.1.0"

from .covariates import DiscreteMixtureSampler, UniformBoxSampler, l2_inner, l2_norm
from .diagnostics import (BvmResult, ContractionProblem, ContractionResult, LanResult,
                          bvm_diagnostic, contraction_study, information_norm_squared,
                          lan_diagnostic, make_truth_field)
from .errors import (CapabilityError, ChainDivergenceError, ConfigError, CpmInferError,
                     DomainError, IllConditionedError, InsufficientSamplesError,
                     NumericDomainError, PositivityError, PreconditionError)
from .forward import (ForwardContext, LinearizationReport, adjoint_apply, apply_forward,
                      forward_jacobian, information_apply, linearization_study, linearize,
                      solve_information_equation)
from .ode import (CoefficientRepr, OdeModel, StabilityReport, TimeDesign,
                  coefficient_jacobian_rank, count_roots_exp_affine,
                  count_roots_exp_affine_batch, eval_map, eval_map_batch, eval_map_jacobian,
                  fd_jacobian, probe_stability, rk4_solve, solve_state)
from .pk import (PkConfig, PkEigenstructure, build_model, build_one_compartment_model,
                 coeff_jacobian, eigen_arrays, eigenstructure, weight_denormalise,
                 weight_normalise)
from .prior import (CpmField, FieldNorms, MembershipQuery, RateTable, SeriesPriorSpec,
                    basis_matrix, coeff_sds, field_from_json, field_norms, field_to_json,
                    grid_points, multi_indices, rates, rescale_factor, rescale_for_N,
                    sample_base_prior)
from .sampling import (Chain, ChainConfig, Dataset, PosteriorSummary, dataset_from_json,
                       dataset_to_json, effective_sample_size, generate_dataset,
                       log_likelihood, run_pcn, summarize_chain)
