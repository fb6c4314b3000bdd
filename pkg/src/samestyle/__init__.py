"""Same-style product retrieval at desk scale.

Click-graph pair sampling, a toy multimodal encoder trained with three
contrastive hinge losses, exact cross-modal retrieval evaluation and a
synthetic catalog generator with known style identity.
"""
__version__ = "0.1.0"

from .clickgraph import (
    ClickCounts,
    ClickGraph,
    ClickLevel,
    ClickRecord,
    ItemNode,
    LambdaWeights,
    QueryNode,
    build_graph,
    edge_weight,
    top_items,
)
from .encoder import (
    DESK_LAYOUT,
    LARGE_LAYOUT,
    EmbeddingTriple,
    EncoderParams,
    MaskMode,
    ProductFeatures,
    TokenLayout,
    compose_query,
    embed_catalog,
    embed_triple,
    encode,
)
from .errors import SameStyleError, ValidationError
from .loss import LossBreakdown, LossConfig, SimilarityMatrices, pdc_loss, plc_loss, ppm_loss, similarity_matrices, total_loss
from .retrieval import EmbeddingIndex, EvalReport, RetrievalMode, build_index, chance_mrr, evaluate, mrr, recall_at_k, search
from .sampler import MeanFeatureEmbedder, SamplerConfig, TrainingPair, sample_pairs
from .trainer import DESK_TRAIN, History, TrainConfig, fit, fit_baseline, make_batches
