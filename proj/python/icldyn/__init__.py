"""In-context learning dynamics toolkit."""

from ._icldyn import (
    BackendError,
    ChangepointMode,
    ConfigError,
    Error,
    ExperimentResult,
    Metric,
    MetricTriple,
    MisalignmentError,
    Pairing,
    SampleStats,
    SignificanceCell,
    TaskDataset,
    TokenLimitError,
    WhitespaceMode,
    WordTokenizer,
    bayes_predict,
    bootstrap_ci,
    calibrate,
    config_hash,
    difference_stats,
    guessing_baseline,
    load_dataset,
    load_experiment,
    moving_average,
    resolve_label_tokens,
    run_experiment,
    score_prediction,
    serve_reference_backend,
    significance,
    summarize,
    synthetic_task,
)

__all__ = [name for name in dir() if not name.startswith("_")]
