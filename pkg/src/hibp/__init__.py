"""Hierarchical spike-and-slab Indian buffet processes: exact sampling, marginal
likelihoods, posterior and predictive draws, and Metropolis-Hastings fitting."""
from .errors import HibpError, NumericError, ParameterError
from .laplace import (Bernoulli, BetaProcess, GeneralizedGamma, GroupLevySpec, NegBinomial, Poisson,
                      StableBeta, gamma_increment, psi_group, psi_tilde)
from .model import (BaseCrmSpec, FeatureAllocation, FeatureColumn, GroupConfig, HibpConfig,
                    ScoreVector, load_allocation, load_config, validate)
from .generate import sample_allocation, sample_new_dish_counts
from .likelihood import (LogLikBreakdown, log_marginal, log_marginal_bernoulli_profile,
                         log_multi_group_ecpf)
from .posterior import (PosteriorState, append_row, describe_posterior_mu, predict_rows,
                        sample_posterior, sample_posterior_base,
                        sample_posterior_group_jumps, sample_predictive_row)
from .infer import McmcConfig, McmcTrace, run_mh, summarize
from .stats import chi_square_gof, fof, fof_slope, two_sample_test

__version__ = "0.1.0"
