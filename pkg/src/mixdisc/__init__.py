"""Variable selection and classification for mixed continuous/binary data under the location model."""

__version__ = "0.1.0"

from .classifier import (
    ClassifierModel,
    FittedParameters,
    capacity_report,
    classification_capacity,
    classify,
    classify_multi_group,
    classify_two_group,
    fit_classifier,
    fit_parameters,
    predict,
)
from .criterion import (
    PopulationSpec,
    criterion,
    criterion_cell,
    population_adequate_set,
    population_irrelevant_set,
    q_operator,
)
from .data import Dataset, MixedObservation, decode_cell, encode_cell, load_csv, write_csv
from .errors import DataValidationError, MixdiscError, ParameterError, SingularSubmatrix, UndefinedCell
from .estimators import CellEstimates, estimate, estimate_empirical, estimate_smoothed, smoothing_weights
from .selection import PENALTIES, SelectionConfig, SelectionResult, penalty_f, penalty_g, select_variables
from .simulation import ExperimentSpec, generate_dataset, run_experiment, sample_mvn, sweep_beta_curves
from .tuning import CvReport, LeaveOneOut, TuningGrid, loocv_alpha_beta, tune_lambda
