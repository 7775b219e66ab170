"""Point-cloud toolkit: sampling strategies with a timing harness, exact
KD-tree neighbor search, grid preprocessing, and an attentive encoder-decoder
segmentation network built on a self-contained autodiff core."""

from .pointcloud import (PointCloud, SubsampleMap, LoadError, load_cloud, save_cloud,
                         grid_subsample, crop_subcloud, save_labels, load_labels)
from .rng import Rng
from .sampling import (SamplerKind, random_sample, farthest_point_sample,
                       inverse_density_sample, poisson_disk_sample, pds_fit_radius,
                       crs_soft_sample, crs_soft_sample_batch)
from .spatial import SpatialIndex, NeighborIndex, build_index, knn, radius_neighbors, nearest

__version__ = "0.1.0"

__all__ = [
    "PointCloud", "SubsampleMap", "LoadError", "load_cloud", "save_cloud",
    "grid_subsample", "crop_subcloud", "save_labels", "load_labels",
    "Rng", "SamplerKind", "random_sample", "farthest_point_sample",
    "inverse_density_sample", "poisson_disk_sample", "pds_fit_radius",
    "crs_soft_sample", "crs_soft_sample_batch",
    "SpatialIndex", "NeighborIndex", "build_index", "knn", "radius_neighbors", "nearest",
    "__version__",
]
