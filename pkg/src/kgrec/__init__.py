"""Knowledge-graph recommender with label-smoothness regularization.

Per-user weighted graph construction, multi-layer feature propagation with
exact hand-derived gradients, and a leave-one-out label-propagation loss
that regularizes the learned edge weights; plus training, evaluation,
synthetic data, and scalability benchmarking.
"""

__version__ = "0.1.0"

from kgrec.kg import (KnowledgeGraph, SELF_RELATION, UNREACHABLE, build_graph,
                      load_kg, proximity_study, sample_neighbors,
                      shortest_path_distance)
from kgrec.interactions import (InteractionMatrix, Split, load_ratings,
                                negative_sample)
from kgrec.scoring import (UserAdjacency, build_transition,
                           build_user_adjacency, edge_weight,
                           normalize_symmetric, relation_score)
from kgrec.labelprop import (closed_form_labels, energy, leave_one_out_label,
                             ls_regularizer, propagate_step,
                             propagate_to_convergence, solve_labels,
                             verify_harmonic)
from kgrec.gnn import ModelParams, init_params, predict
from kgrec.train import (HyperParams, adam_step, checkpoint_load,
                         checkpoint_save, unified_loss)
from kgrec.evaluate import EvalReport, auc
from kgrec.synthetic import gen_synthetic

# `split` and `train` stay on their submodules (kgrec.interactions.split,
# kgrec.train.train) to keep function and module names apart.
from kgrec import benchmark, evaluate, train  # noqa: F401  (submodule access)
