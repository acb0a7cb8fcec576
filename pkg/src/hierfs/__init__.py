"""Top-down hierarchical classification with per-node filter feature selection."""

__version__ = "0.1.0"

from .corpus import Dataset, SplitSpec, load_sparse, split, tfidf_transform
from .hierarchy import Hierarchy, NodeTrainingView, build_node_views, parse_hierarchy
from .pipeline import PipelineConfig, fit
from .predictor import predict, predict_batch
from .trainer import TrainedModel, TrainingConfig, train_hierarchy

__all__ = [
    "Dataset", "SplitSpec", "load_sparse", "split", "tfidf_transform",
    "Hierarchy", "NodeTrainingView", "build_node_views", "parse_hierarchy",
    "PipelineConfig", "fit", "predict", "predict_batch",
    "TrainedModel", "TrainingConfig", "train_hierarchy",
]
