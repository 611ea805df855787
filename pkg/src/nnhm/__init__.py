"""Bayesian random-effects meta-analysis in the normal-normal hierarchical model.

Posteriors are computed without Monte Carlo: the heterogeneity marginal
by one-dimensional quadrature, everything else as discrete normal
mixtures over a grid of heterogeneity values.
"""

from .analysis import (AnalysisConfig, AnalysisResult, CredibleInterval, Estimate,
                       IntervalKind, Summary, reml_tau, run_analysis)
from .calibration import CalibrationScenario, PitSample, ks_uniform, run_calibration
from .effects import ContingencyTable, EffectEstimate, EffectMeasure, escalc, unit_information_sd
from .errors import (AccuracyError, CapabilityError, ConvergenceError, DomainError, NNHMError,
                     ParseError, ProprietyError, ReplicationError)
from .mixture import DirectConfig, NormalMixture, normalmixture
from .model import Dataset, TauMarginal, conditional_moments, log_marginal_likelihood
from .ppcheck import Hypothesis, PPResult, cochran_q, ppp_value
from .priors import (EffectPrior, HeterogeneityPrior, berger_deely, conventional, dumouchel,
                     exponential, half_cauchy, half_normal, half_student_t, jeffreys,
                     lognormal, lomax, power_prior, turner_prior, uniform_shrinkage)

__version__ = "0.1.0"
