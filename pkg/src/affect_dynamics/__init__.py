"""Valence/arousal assessment and affect-change forecasting.

Exact pairwise MaxEnt (Ising) models over one-hot affect states plus binary
text latents, a feed-forward forecaster with per-user embeddings, ridge
baselines and a correlation/MAE evaluation harness.
"""

from .autoencoder import AeConfig, AeModel, encode_binary, train_ae
from .baselines import ChangeBaseline, fit_change_baseline, fit_ridge, predict_changes, predict_ridge
from .clusters import ClusterLexicon, assign_entry, indicator_60
from .codec import LabelMap, Mode, StateLayout, decode, encode, enumerate_valid, label_to_state, state_to_label
from .data_io import SplitMode, SynthConfig, load, loads, save, split, synthesize
from .domain import AffectDelta, AffectState, Dataset, Entry, UserSeries
from .errors import AffectError, ConfigError, DataError, NumericError
from .forecaster import (
    BEST_AROUSAL, BEST_VALENCE, ForecasterConfig, ForecasterModel, build_windows, combine_predictions,
    predict_dataset, train_forecaster,
)
from .maxent import (
    FitConfig, MaxEntModel, fit, log_partition, predict_assessment, predict_transition, probabilities,
    sample, transition_table,
)
from .metrics import EvalReport, evaluate_assessment, evaluate_transition, fisher_composite, pearson
from .pipeline import maxent_predict_assessment, maxent_predict_transition, train_maxent

__version__ = "0.1.0"
