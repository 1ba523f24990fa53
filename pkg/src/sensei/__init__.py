"""Training under a distributional individual-fairness regularizer, with
ERM / SenSR / CLP baselines, fair-metric learning and certification."""
from .attack import AttackConfig, worst_case_sensei, worst_case_sensr
from .certify import CertificationResult, empirical_dif, lp_oracle, markov_tail_check, r_lambda
from .data import Dataset, gen_synthetic, load_adult, make_variations
from .evaluation import MetricsReport, balanced_accuracy, ctf_score, prediction_consistency, tpr_gaps
from .metric import FairMetric, adult_metric, fair_distance, learn_subspace_face
from .nn import MlpModel, backprop, forward, input_gradient
from .trainers import DualState, TrainConfig, train

__all__ = [
    "AttackConfig", "CertificationResult", "Dataset", "DualState", "FairMetric", "MetricsReport",
    "MlpModel", "TrainConfig", "adult_metric", "backprop", "balanced_accuracy", "ctf_score",
    "empirical_dif", "fair_distance", "forward", "gen_synthetic", "input_gradient",
    "learn_subspace_face", "load_adult", "lp_oracle", "make_variations", "markov_tail_check",
    "prediction_consistency", "r_lambda", "tpr_gaps", "train", "worst_case_sensei", "worst_case_sensr",
]
