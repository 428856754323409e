"""Visual question generation toolkit: metrics, retrieval, GRU decoding and analysis."""

from ._core import (
    Correlation,
    beam_decode,
    consensus_index,
    corpus_bleu,
    correlate,
    cosine_distance,
    delta_bleu,
    kendall_tau_b,
    meteor_exact,
    one_best,
    pearson,
    query_pool,
    run_cli,
    sentence_bleu_smoothed,
    spearman,
    synth_dataset,
    tokenize,
)

__all__ = [
    "Correlation",
    "beam_decode",
    "consensus_index",
    "corpus_bleu",
    "correlate",
    "cosine_distance",
    "delta_bleu",
    "kendall_tau_b",
    "meteor_exact",
    "one_best",
    "pearson",
    "query_pool",
    "run_cli",
    "sentence_bleu_smoothed",
    "spearman",
    "synth_dataset",
    "tokenize",
]
