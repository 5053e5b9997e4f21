from .core import FAILED_SCORE, HARD_NEGATIVES, RERANK_K, TrainingPair, make_training_set, rerank_with_model, rerank_with_scores
from .features import FEATURE_NAMES, FEATURE_SCHEMA_VERSION, FeatureVector, PoolContext, TfidfModel, extract_features
from .forest import ForestModel, ForestParams, load_forest, save_forest, score_forest, train_forest
from .frlink import FRLinkModel, frlink_score, frlink_threshold
from .remote import (
    ChatClient,
    PairwiseClient,
    RemoteScorerError,
    RerankRequestBatch,
    RetryPolicy,
    bounded_map,
    external_score,
    llm_rerank,
    pairwise_scores,
    parse_llm_order,
    render_prompt,
)
