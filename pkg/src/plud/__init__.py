"""plud: iterative cluster-review-classify workbench for bootstrapping
labeled corpora from embedding-represented items."""

from .campaign import (
    Campaign,
    CampaignConfig,
    IterationRecord,
    ReviewTask,
    RoutingConfig,
    SamplingStrategy,
    account_effort,
    route,
    sample_initial,
)
from .classifier import EmbeddingClassifier, Prediction
from .clustering import (
    AgglomerativeClusterer,
    ClusterConfig,
    ClusterSet,
    KMeansClusterer,
    cluster_items,
    majority_label,
    purity,
)
from .embedder import EmbedderSpec, SyntheticItem, l2_normalize, synth_embed
from .evaluation import confusion, f_score, macro_average, precision_recall, report
from .model import (
    ClassRegistry,
    DatasetSnapshot,
    ItemRecord,
    LabelAssignment,
    LabelStore,
    Provenance,
)
from .oracle import OracleConfig, SimulatedExpert
from .pludemb import read_embeddings, write_embeddings

__version__ = "0.1.0"
