"""Self-optimal-transport feature embedding and synthetic clustering benchmarks."""
from .clustering import KMeans, ari, hungarian_accuracy, kmeans, nmi
from .matrixcore import (
    DistanceMatrix,
    FeatureMatrix,
    SimilarityMatrix,
    cosine_similarity,
    mask_diagonal,
    normalize_rows,
    pairwise_sq_distances,
    permute_rows,
)
from .sinkhorn import SinkhornParams, TransportPlan, entropy, exact_selfmatch_oracle, marginal_error, sinkhorn_solve
from .synthgen import EpisodeSpec, GramPCA, LabeledDataset, SphereTaskSpec, generate_sphere_dataset, pca_reduce, sample_episode
from .transform import (
    SelfOptimalTransport,
    SotConfig,
    SotEmbedding,
    embedded_difference_decomposition,
    sot_transform,
    sot_transform_from_distances,
)

__version__ = "0.1.0"
