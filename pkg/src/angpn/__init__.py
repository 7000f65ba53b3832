"""Semi-supervised node classification with graphs learned jointly with features."""
from .errors import (AngpnError, ContractError, DataError, GraphError, NumericError,
                     OracleError, ParameterError, ShapeError, TrainingError)
from .graphlearn import (DistanceMatrix, GraphMode, GraphSolution, knn_graph,
                         pairwise_euclidean, s_step, simplex_project)
from .propagation import (HyperParams, anfp_exact, anfp_objective, anfp_propagate,
                          nfp_closed_form, nfp_iterate)
from .model import (LabeledSplit, ModelState, load_checkpoint, loss_and_gradients,
                    network_forward, save_checkpoint)
from .train import TrainConfig, evaluate, fit, init_model
from .data import (Dataset, add_constant_feature, gen_blobs, gen_two_moons, load_dataset,
                   stratified_split)

__version__ = "0.1.0"
