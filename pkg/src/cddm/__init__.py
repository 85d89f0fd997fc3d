"""Constructive data-driven randomized learning of single-hidden-layer sigmoid networks."""

from .dataset import (Dataset, KeelParseError, Normalizer, fit_normalizer, generate_tf1, generate_tf2,
                      load_keel, split, tf1, tf2)
from .experiment import ExperimentSetup, TrialsSummary, curve_stats, nodes_to_reach, run_trials
from .linalg import IncrementalLS, lstsq, pinv
from .modelselect import CVPlan, CVResult, cross_validate, make_plan
from .neighborhood import NeighborIndex
from .network import NetworkModel, hidden_outputs, load_model, rmse, save_model
from .nodegen import HiddenNode, Hyperplane, fit_hyperplane, make_node, sigmoid, sigmoid_response
from .trainer import (PartialResultError, SmallNeighborhoodWarning, TrainConfig, TrialRecord, train,
                      train_cddm, train_ddm)

__version__ = "0.1.0"
