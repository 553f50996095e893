"""Conditional denoising-diffusion forecasting for gridded geophysical
fields: synthetic data and the GWF container, encoder pretraining, a
cross-attention conditioned U-Net denoiser, autoregressive ensemble
forecasts, and latitude-weighted verification metrics."""

__version__ = "0.1.0"

from .grid import (GridField, GridSeries, NormStats, fit_norm, normalize, denormalize,
                   normalize_series, load_series, save_series, make_synthetic)
from .schedule import NoiseSchedule, build_schedule, terminal_snr
from .seeding import derive_seed
from .encoder import (AutoencoderModel, ConditionEmbedding, EncoderConfig,
                      PretrainedEncoder, encode_condition, pretrain_autoencoder)
from .denoiser import (CrossAttentionBlock, DenoiserConfig, DenoiserModel, cross_attend,
                       fit_depth, predict_noise)
from .diffusion import DiffusionConfig, TrainedModel, forward_diffuse, sample, train, training_loss
from .forecast import (ForecastEnsemble, UncertaintyField, coverage, ensemble_forecast,
                       rollout, uncertainty)
from .metrics import (LatWeights, acc, climatology, climatology_baseline, lat_weights,
                      persistence_baseline, rmse_weighted)
from .serialization import load_encoder, load_model, save_encoder, save_model

__all__ = [
    "GridField", "GridSeries", "NormStats", "fit_norm", "normalize", "denormalize",
    "normalize_series", "load_series", "save_series", "make_synthetic",
    "NoiseSchedule", "build_schedule", "terminal_snr", "derive_seed",
    "AutoencoderModel", "ConditionEmbedding", "EncoderConfig", "PretrainedEncoder",
    "encode_condition", "pretrain_autoencoder",
    "CrossAttentionBlock", "DenoiserConfig", "DenoiserModel", "cross_attend",
    "fit_depth", "predict_noise",
    "DiffusionConfig", "TrainedModel", "forward_diffuse", "sample", "train", "training_loss",
    "ForecastEnsemble", "UncertaintyField", "coverage", "ensemble_forecast",
    "rollout", "uncertainty",
    "LatWeights", "acc", "climatology", "climatology_baseline", "lat_weights",
    "persistence_baseline", "rmse_weighted",
    "load_encoder", "load_model", "save_encoder", "save_model",
    "__version__",
]
