"""Hierarchical Gaussian concept-tree retrieval over dense embeddings."""

from ._core import (
    CobwebError,
    Embeddings,
    Index,
    Tree,
    WhiteningTransform,
    build_tree,
    fit_whitening,
    load_transform,
    load_tree,
    ndcg_at_k,
    read_embeddings,
    retrieve_dot,
    run_cli,
    write_embeddings,
)

__all__ = [
    "CobwebError",
    "Embeddings",
    "Index",
    "Tree",
    "WhiteningTransform",
    "build_tree",
    "fit_whitening",
    "load_transform",
    "load_tree",
    "ndcg_at_k",
    "read_embeddings",
    "retrieve_dot",
    "run_cli",
    "write_embeddings",
]
