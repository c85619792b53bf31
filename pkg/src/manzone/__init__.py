"""Man / zone coverage annotation for cornerbacks from player tracking data."""

from .evaluation import (
    MAN,
    ZONE,
    CvReport,
    FeatureTable,
    InfluenceReport,
    PairCounts,
    Partition,
    adjusted_rand_index,
    ari,
    feature_influence,
    label_model,
    lowo_cv_ari,
    pair_counts,
    rand_index,
    select_g,
    semantic_labels,
)
from .features import (
    COLUMNS,
    FEATURES,
    WINDOWS,
    FeatureVector,
    build_windows,
    compute_features,
    extract_corpus_features,
    nearest_neighbor_trace,
)
from .gmm import FitConfig, GmmFitError, GmmModel, assign_labels, fit, load_model, log_likelihood, predict_proba, save_model
from .synthetic import SimConfig, generate_corpus, truth_partition
from .tracking import (
    IngestConfig,
    Play,
    PlayCorpus,
    PlayerTrack,
    filter_pass_plays,
    load_config,
    parse_tracking_csv,
    select_cornerbacks,
)

__version__ = "0.1.0"
