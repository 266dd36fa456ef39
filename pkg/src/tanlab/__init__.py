"""Tangram solve-trace pretraining with transfer to tidiness scoring and
few-shot recognition."""

from .autodiff import Tensor, backward
from .bitmap import BinaryImage, FoldAxis, InvalidFold, fold, rasterize
from .envs import (ExpertTrajectory, FoldState, Garment, RoomItem, RoomScene,
                   expert_fold_trajectory, folding_actions, generate_garments,
                   generate_rooms, perturb_room, room_actions)
from .fewshot import (Episode, GlyphDataset, ImageDataset, adapted_query_accuracy,
                      anil_meta_train, fomaml_meta_train, fomaml_query_accuracy,
                      load_image_folder, logistic_probe, protonet_episode_loss,
                      protonet_meta_train, sample_episode)
from .geometry import (BoardState, SolveTrace, Tan, TanPose, apply_pose,
                       canonical_tans, generate_trace, render_board,
                       render_trace, validate_trace)
from .irl import (RolloutConfig, ScoreModel, gail_update, greedy_rollout,
                  meirl_update, precision_at_k, train_irl, train_sl)
from .network import (Adam, CompletenessHead, FeatureExtractor, MeaningHead,
                      count_parameters, load_into, load_weights, save_weights)
from .pretrain import (EmbeddingTable, PretrainConfig, PretrainModel, ccl,
                       load_embeddings, ordering_accuracy, pml, pretrain)
from .traceio import (TraceDocument, TraceFormatError, document_from_solve,
                      document_from_trajectory, document_violations,
                      load_document, save_document, solve_from_document,
                      trajectory_from_document)

__version__ = "0.1.0"
