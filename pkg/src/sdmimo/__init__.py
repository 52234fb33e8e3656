"""Spatial sigma-delta ADC simulation and parametric MIMO channel estimation."""
from .adc import (
    AdcConfig,
    OneBit,
    OneBitADC,
    SigmaDelta,
    SigmaDeltaADC,
    Unquantized,
    apply_front_end,
    build_u_matrix,
    clip,
    overload_clip_level,
    quant_level_for_clip,
    quantize_1bit,
    sd_quantize,
    sd_quantize_snapshot,
)
from .channel import (
    ArrayGeometry,
    ChannelSamplerSpec,
    MuChannelParams,
    SuChannelParams,
    mu_channel_matrix,
    received_pilot_block,
    sample_mu_channel,
    sample_su_channel,
    simo_channel,
    steering_bs,
    steering_ue,
    su_channel_matrix,
)
from .estimator import (
    AoaGainEstimator,
    ChannelEstimate,
    Codebook,
    SuScenario,
    UplinkLink,
    aoa_grid,
    aod_grid,
    bartlett_spectrum,
    bisect_aod,
    design_codebook,
    estimate_su_channel,
    find_peaks,
    gain_wls,
    path_energy,
)
from .exceptions import ConfigurationError, DimensionError, NumericalError
from .mumimo import MuScenario, despread, estimate_mu_channels, orthogonal_pilots
from .noisemodel import (
    NoiseModel,
    effective_noise_cov,
    floor_identity_residual,
    lemma1_error,
    prewhitener,
    quant_noise_cov,
)

__version__ = "0.1.0"
