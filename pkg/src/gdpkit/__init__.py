"""Graph differential privacy toolkit.

Private graph embeddings with exact sensitivity calibration, Rényi-DP
accounting with adaptive composition, brute-force sensitivity oracles,
a contextual block-model generator, and desk-scale training pipelines.
"""

__version__ = "0.1.0"

from .accounting import (
    BudgetTemplate,
    GdpReport,
    PrivacyBudget,
    RdpCurve,
    calibrate_noise,
    compose,
    compose_adaptive,
    gaussian_curve,
    gdp_budget,
    to_dp,
)
from .csbm import CsbmParams, generate, phi_to_params
from .graphs import (
    AdjacencyRelation,
    DegreeBound,
    GraphDataset,
    edge_density,
    enumerate_adjacent,
    homophily,
    load_dataset,
    row_normalize,
    sample_adjacent,
    save_dataset,
    subsample_out_degree,
    validate,
)
from .mechanisms import (
    EmbWeights,
    EmbeddingMatrix,
    MechanismParams,
    ProjectionHead,
    decoupled_release,
    gaussian_perturb,
    multi_hop_embedding,
    aggregation_hop,
    theoretical_sensitivity,
)
from .models import (
    DpdgcClassifier,
    GapClassifier,
    MlpClassifier,
    Split,
    evaluate,
    make_transductive_split,
)
from .oracle import SensitivityReport, bruteforce_dpdgc, bruteforce_gap, verify_k_independence

__all__ = [
    "AdjacencyRelation",
    "BudgetTemplate",
    "CsbmParams",
    "DegreeBound",
    "DpdgcClassifier",
    "EmbWeights",
    "EmbeddingMatrix",
    "GapClassifier",
    "GdpReport",
    "GraphDataset",
    "MechanismParams",
    "MlpClassifier",
    "PrivacyBudget",
    "ProjectionHead",
    "RdpCurve",
    "SensitivityReport",
    "Split",
    "aggregation_hop",
    "bruteforce_dpdgc",
    "bruteforce_gap",
    "calibrate_noise",
    "compose",
    "compose_adaptive",
    "decoupled_release",
    "edge_density",
    "enumerate_adjacent",
    "evaluate",
    "gaussian_curve",
    "gaussian_perturb",
    "gdp_budget",
    "generate",
    "homophily",
    "load_dataset",
    "make_transductive_split",
    "multi_hop_embedding",
    "phi_to_params",
    "row_normalize",
    "sample_adjacent",
    "save_dataset",
    "subsample_out_degree",
    "theoretical_sensitivity",
    "to_dp",
    "validate",
    "verify_k_independence",
]
