"""Simulator and analysis toolkit for multi-user entanglement-based QKD
over a wavelength-multiplexed fiber network."""

from .analysis import (
    AnalysisError,
    LinkMetrics,
    Measurement,
    PeakSpec,
    car,
    extrema_and_sign,
    false_rate,
    full_metrics,
    metrics_csv_lines,
    resolve_peak_spec,
    sifted_rate,
)
from .keyrate import (
    Basis,
    BasisSetting,
    DEFAULT_F_EC,
    Outcome,
    RateInputs,
    binary_entropy,
    qber_from_visibility,
    same_basis_setting_pairs,
    secret_key_rate,
    visibility_from_extrema,
)
from .linkmodel import (
    BUILTIN_SCENARIOS,
    CalibrationError,
    CalibrationInputs,
    CalibrationResult,
    LinkParams,
    RatePrediction,
    ScenarioPreset,
    SourceParams,
    arm_efficiency,
    calibrate,
    coincidence_probabilities,
    distance_scan,
    get_scenario,
    max_distance,
    model_qber,
    model_visibility,
    predict_rates,
)
from .photonics import (
    ChannelPlan,
    IndexModel,
    ItuChannel,
    PhaseMatchSolution,
    PmdCeiling,
    PmdParams,
    channel_wavelength_nm,
    pmd_visibility_ceiling,
    symmetric_partner,
    tuning_curves,
)
from .simulator import (
    BellSign,
    CoincidenceHistogram,
    DetectionEvent,
    SimConfig,
    detection_events,
    read_run,
    simulate_run,
    simulate_setting,
    write_run,
)

__version__ = "0.1.0"
