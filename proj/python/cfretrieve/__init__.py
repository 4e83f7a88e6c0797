"""Two-stage entity-gated dense retrieval over a precomputed embedding cache."""

from ._core import (
    CandidateSet,
    CfrError,
    EmbeddingStore,
    EntityIndex,
    QueryDocument,
    QueryResult,
    batch_query,
    build_entity_index,
    dot_score,
    er_candidates,
    extend_index,
    fuse_max,
    load_qrels,
    load_queries,
    load_run,
    load_text_embeddings,
    mock_encode_text,
    mrr_at_k,
    normalize_entity,
    overlap_ratio,
    recall_at_k,
    run_query,
    top_k_scan,
    write_run,
    write_synth_corpus,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
