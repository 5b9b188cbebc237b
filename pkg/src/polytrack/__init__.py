"""Streaming and distributed matching of topic polytopes.

Topics estimated independently on batches of documents are embedded as unit
directions about a reference point and matched to global topics that drift
over time (vMF dynamics), are shared across groups (Beta-Bernoulli prior),
or both.
"""
from .assignment import AssignmentSolution, brute_force_assignment, solve_max_assignment
from .corpus import BatchStream, ingest_uci, write_uci
from .dm import DistributedMatching, DmState, dm_run
from .estimator import (
    DocBatch,
    EstimatorConfig,
    SphericalKMeansTopics,
    TopicEstimate,
    estimate_topics,
    load_topics,
    save_topics,
)
from .evaluation import eval_matching_accuracy, eval_perplexity
from .exceptions import *  # noqa: F401,F403
from .geometry import (
    ReferencePoint,
    VmfParams,
    embed,
    inverse_embed,
    update_reference,
    vmf_map_combine,
    vmf_sample,
)
from .hyper import ModelHyperparams
from .pipeline import RunResult, run_model
from .sddm import SddmState, StreamingDynamicDistributedMatching, sddm_step
from .sdm import SdmState, StreamingDynamicMatching, sdm_cost, sdm_objective, sdm_step
from .synthetic import (
    GroundTruth,
    sample_documents,
    sample_dynamic,
    sample_grouped,
    sample_hierarchical,
)

__version__ = "0.1.0"
