"""Python bindings for the adapcr core."""

from ._adapcr import (
    AdapcrError,
    answer_f1,
    bm25_top,
    concat_query,
    exact_match,
    generate_fixture,
    gradcheck,
    hash_embed,
    mock_lm_score,
    normalize_answer,
    normalize_pret,
    pool_loss,
    retrieve,
    run_cli,
    tokenize,
    train,
)

__all__ = [
    "AdapcrError",
    "answer_f1",
    "bm25_top",
    "concat_query",
    "exact_match",
    "generate_fixture",
    "gradcheck",
    "hash_embed",
    "mock_lm_score",
    "normalize_answer",
    "normalize_pret",
    "pool_loss",
    "retrieve",
    "run_cli",
    "tokenize",
    "train",
]
