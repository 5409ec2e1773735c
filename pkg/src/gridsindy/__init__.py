"""Sparse identification of aggregated power-grid frequency dynamics."""
from gridsindy._backend import BACKEND
from gridsindy.errors import ConfigError, DataError, GridSindyError, SelectionError
from gridsindy.evaluate import (AggregateReport, EvaluationRecord, Pipeline, aggregate,
                                evaluate_batch, evaluate_chunk)
from gridsindy.gridsearch import GridResult, GridSpec, best_config, emit_heatmap, run_grid
from gridsindy.ingest import FrequencyChunk, ingest, read_chunk_store, write_chunk_store
from gridsindy.library import LibrarySpec, build_feature_matrix, feature_count
from gridsindy.preprocess import SmoothingConfig, build_trajectory, optimize_sigma
from gridsindy.regression import (CoefficientMatrix, LassoConfig, SR3Config, STLSQConfig, fit,
                                  lasso, ridge_solve, sr3, stlsq)
from gridsindy.simulate import (SwingParams, euler_maruyama_swing, generate_synthetic_dataset,
                                simulate_model)

__version__ = "0.1.0"
