"""Differentially private trajectory publishing by editing signature points.

Trajectories live on a square grid of location keys. Two Laplace mechanisms
perturb how often each signature point occurs, across the dataset and within
a trajectory, and greedy edits backed by a hierarchical segment index make
the data match the noisy counts at the smallest spatial cost.
"""
from ._backend import BACKEND, available, get_backend
from .bench import BenchRow, StrategyMismatchError, bench
from .edits import (EditKind, EditOp, InvalidEditError, NothingToDeleteError, UtilityLoss,
                    apply, complete_deletion_loss, deletion_loss, insertion_loss)
from .geo import (DEFAULT_GRID, BBox, Location, RawSample, Segment, Trajectory, normalize,
                  point_segment_distance, segments_of, snap_to_location)
from .index import (STRATEGIES, HierarchicalGrid, IndexIntegrityError, SegmentIndex,
                    build_index, knn_bottomup, knn_bud, knn_linear, knn_topdown,
                    update_after_edit)
from .io import IngestError, ingest, write_dataset
from .mechanisms import (ConfigurationError, LaplaceParams, PrivacyBudget, budget_report,
                         perturb_pf, perturb_tf, sample_laplace)
from .metrics import (diameter_divergence, frequent_pattern_f1, info_loss,
                      linking_accuracy_spatial, metric_report, trip_divergence)
from .modifier import ClampRecord, ModifyResult, inter_modify, intra_modify
from .pipeline import RunConfig, RunResult, anonymize, evaluate, run_pipeline
from .signature import (CandidateSet, compute_pf, compute_tf, extract_signatures,
                        select_point_list, weigh_and_rank)
from .synth import generate_dataset, write_corpus

__version__ = "0.1.0"
