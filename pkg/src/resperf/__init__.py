"""Inference latency prediction for neural-network layers.

A residual regression network learns per-phase (preprocess, execution,
postprocess) layer latencies from micro-benchmark samples; full-model
latency is the first layer's preprocess time, every layer's execution time,
and the last layer's postprocess time added together. A synthetic analytic
oracle stands in for real device profiling.
"""

__version__ = "0.1.0"

from .layers import (LayerConfig, LayerKind, PhaseKind, PhaseTimes,
                     conv_config, dense_config, encode_features, pool_config,
                     schema_for, validate_config)
from .device import DeviceProfile, PRESETS, resolve_profile
from .synth import generate_dataset, oracle_times, sample_config, substream
from .data import Dataset, Sample, load_dataset, save_dataset
from .transforms import (TransformerState, apply_boxcox, apply_pipeline,
                         fit_boxcox_lambda, fit_pipeline, invert_target,
                         scalar_multiply)
from .training import (Adam, Hyperparams, TrainedPhaseModel, load_model,
                       lr_at, maple_loss, save_model, split_dataset, train)
from .baselines import PolyModel, fit_poly, train_mlp
from .metrics import Metrics, evaluate
