"""Causal mediation analysis with zero-inflated mediators subject to false zeros."""

from .data import Dataset, Record
from .distributions import (
    LinkParams,
    MediatorFamily,
    link_location,
    log_density_positive,
    mediator_mean,
    sample_true_mediator,
    zero_prob,
)
from .effects import EffectEstimates, EffectRequest, effects_point, effects_with_inference
from .estimator import FitConfig, FitResult, ZeroInflatedMediation, fit, observed_information
from .exceptions import (
    DegenerateLikelihoodError,
    DomainError,
    EstimationError,
    IngestionError,
    QuadratureError,
    SelectionError,
    ZIMediationError,
)
from .false_zero import FalseZeroMechanism
from .io import ingest_csv, load_scenario
from .likelihood import LikelihoodModel, observed_loglik, q_function
from .outcome import OutcomeParams, outcome_logpdf, outcome_mean
from .params import Theta
from .selection import select_model
from .simulate import Scenario, StudySummary, generate_dataset, preset, run_study

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Record", "LinkParams", "MediatorFamily", "link_location",
    "log_density_positive", "mediator_mean", "sample_true_mediator", "zero_prob",
    "EffectEstimates", "EffectRequest", "effects_point", "effects_with_inference",
    "FitConfig", "FitResult", "ZeroInflatedMediation", "fit", "observed_information",
    "DegenerateLikelihoodError", "DomainError", "EstimationError", "IngestionError",
    "QuadratureError", "SelectionError", "ZIMediationError", "FalseZeroMechanism",
    "ingest_csv", "load_scenario", "LikelihoodModel", "observed_loglik", "q_function",
    "OutcomeParams", "outcome_logpdf", "outcome_mean", "Theta", "select_model",
    "Scenario", "StudySummary", "generate_dataset", "preset", "run_study",
]
