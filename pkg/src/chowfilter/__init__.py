"""Learning with abstention under distribution shift via iterative filtering."""

from .bench import Scenario, generate, recommend_degree, scenario_from_file
from .icf import ICFConfig, Selector, compute_schedule, evaluate_selector, run_icf
from .l1reg import Classifier, complement, fit_classifier, fit_l1, threshold_round
from .oracle import FiniteDistribution, exact_chow, exact_lambda
from .polycore import MonomialBasis, Polynomial, Sample, enumerate_basis
from .pq import PQConfig, PQOutput, pq_learn, rejection_rate, selective_error
from .tds import TDSVerdict, default_R, tds_learn

__version__ = "0.1.0"

__all__ = [
    "Scenario", "generate", "recommend_degree", "scenario_from_file",
    "ICFConfig", "Selector", "compute_schedule", "evaluate_selector", "run_icf",
    "Classifier", "complement", "fit_classifier", "fit_l1", "threshold_round",
    "FiniteDistribution", "exact_chow", "exact_lambda",
    "MonomialBasis", "Polynomial", "Sample", "enumerate_basis",
    "PQConfig", "PQOutput", "pq_learn", "rejection_rate", "selective_error",
    "TDSVerdict", "default_R", "tds_learn",
    "__version__",
]
