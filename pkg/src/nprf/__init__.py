"""Neural pseudo relevance feedback for ad-hoc retrieval.

BM25 first-stage ranking, DRMM / K-NRM document-to-document scorers, gated
combination of feedback-document evidence, pairwise hinge-loss training and
TREC-style evaluation.
"""

from nprf.core import FeedbackSet, NprfModel, build_feedback_set, normalize_gates, nprf_score, rerank
from nprf.corpus import CorpusIndex, Document, build_index, preprocess, tfidf_summary
from nprf.embeddings import EmbeddingTable, cosine, interaction_matrix, load_embeddings
from nprf.evaluation import Qrels, evaluate, paired_t_test
from nprf.first_stage import Bm25Params, Query, RunList, bm25_score, bm25_search, rocchio_expand

__version__ = "0.1.0"

__all__ = [
    "Bm25Params", "CorpusIndex", "Document", "EmbeddingTable", "FeedbackSet", "NprfModel", "Qrels",
    "Query", "RunList", "bm25_score", "bm25_search", "build_feedback_set", "build_index", "cosine",
    "evaluate", "interaction_matrix", "load_embeddings", "normalize_gates", "nprf_score",
    "paired_t_test", "preprocess", "rerank", "rocchio_expand", "tfidf_summary",
]
