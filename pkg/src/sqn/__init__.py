"""Weakly-supervised point-cloud semantic segmentation.

Encode a cloud into four hierarchical feature levels, then classify any 3D
position by interpolating its nearest feature rows at every level. Sparse
annotations suffice for training because each labeled query back-propagates
into a wide spatial neighborhood.
"""

import os as _os

# GEMMs here are small; BLAS thread pools only add overhead and timing noise.
# Must be set before numpy spins up its backend; users can override.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .cloud import (
    GridSampleResult,
    PointCloud,
    grid_downsample,
    load_cloud,
    random_downsample,
    save_cloud,
)
from .encoder import EncoderConfig, HierarchicalFeatures, encode
from .labels import SparseLabelSet, generate_pseudo_labels, sample_sparse_labels
from .metrics import ConfusionMatrix, boundary_mask, eval_report, macc, miou, oa
from .neighbors import ACTIVE_BACKEND, SpatialIndex, build_index, knn, radius_neighbors
from .query import Model, QueryConfig, init_model, predict, query_features
from .scenes import SceneSpec, synth_scene
from .tensor import Parameters, Tensor, adam_step, backward
from .training import TrainConfig, augment, load_model, masked_loss, retrain_with_pseudo, save_model, train

__version__ = "0.1.0"
