"""Embedding-distribution client authentication for federated learning.

Clients submit embedding-label pairs; an authentication server compares
them with a trusted reference distribution (outlier fraction, class mean
shift, micro-cluster pockets) and only tagged clients reach aggregation.
"""

__version__ = "0.1.0"

from .aggregation import AggregationRule, ModelUpdate, aggregate, fedavg, krum, trimmed_mean
from .auth import (AuthenticationServer, FlagPolicy, Verdict, VerificationTag, decide_verdicts,
                   issue_tags, rank_clients)
from .config import ExperimentConfig, load_config
from .errors import EmbedAuthError
from .experiment import run_experiment
from .metrics import (AnomalyReport, ClientSubmission, MetricWeights, MicroClusterParams,
                      evaluate_client, mean_shift, micro_cluster_score, outlier_fraction,
                      suspicion_score)
from .reference import (ClassStats, ReferenceModel, build_class_stats, build_reference_model,
                        load_reference_model, save_reference_model)
from .sim import (AttackConfig, ClassGenerator, WorldConfig, apply_attack, gen_world, local_train,
                  make_trigger, run_simulation)
from .stats import covariance_shrunk, kmeans2, mahalanobis, mean_vector, percentile
