"""Search-space-controlled automatic feature engineering for tabular data.

The library constrains candidate generation before it happens (feature
clustering limits binary operand pairs, operator probing drops
low-utility operators), scores the surviving candidates with a
variance-penalized incremental-improvement criterion, prunes them by
successive halving over doubling data blocks, and picks the final
features by split-gain attribution.
"""

__version__ = "0.1.0"

from .assoc import (SimilarityMatrix, cramers_v, eta_squared, pearson_abs,
                    similarity_matrix)
from .booster import (BoostModel, BoostParams, attribution, auc,
                      feature_boost, fit_booster, oof_baseline)
from .cluster import (Embedding, HardAssignment, Membership, SoftAssignment,
                      cluster_count, fcm, hard_cluster, pair_allowed,
                      soft_assign, spectral_embed)
from .oper import (CandidateFeature, OperatorSpec, count_unconstrained,
                   default_operator_set, enumerate_candidates, materialize)
from .pipeline import (PipelineConfig, PipelineError, PipelineResult,
                       predicted_reduction, run, variability_summary)
from .probe import OperatorScore, ProbeConfig, operator_probing, topk_mean, \
    type_aware_sample
from .select import (HalvingOutcome, ScoreRecord, candidate_delta,
                     final_select, reliability_round, successive_halving)
from .tabular import (BlockSchedule, Column, ColumnMeta, Dataset, RowIndexSet,
                      load_csv, make_blocks, split, subsample)

__all__ = [name for name in dir() if not name.startswith("_")]
