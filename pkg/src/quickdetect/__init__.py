"""Multi-cyclic Shiryaev-Roberts and CUSUM changepoint detection for traffic counts."""

from .baseline import BaselineModel, estimate_baseline, refresh_baseline, standardize
from .calibrate import CalibrationResult, calibrate_threshold
from .detectors import (
    DetectorConfig,
    DetectorState,
    GaussianChangeSpec,
    GaussianLLRScore,
    LinearQuadraticScore,
    ScoreParams,
    check_alarm,
    coeffs_from_gaussian,
    cusum_bruteforce,
    cusum_step,
    gaussian_llr,
    lq_score,
    reset,
    sr_bruteforce,
    sr_step,
)
from .ingest import BinnedCount, bin_events, parse_counts, serialize_counts
from .multicyclic import (
    AlarmLog,
    AlarmRecord,
    ChangeSpec,
    detection_delay,
    estimate_arl,
    estimate_sadd,
    estimate_stadd,
    run_multicyclic,
)
from .samplers import SamplerSpec, draw, inject_change

__version__ = "0.1.0"
