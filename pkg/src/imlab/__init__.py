"""Approximate maximum-likelihood detection under Nakagami-m interference.

Library layout:

- ``special``: log-domain Bessel and confluent-hypergeometric primitives
- ``interference``: envelope/phase statistics and samplers
- ``constellations``: PSK/QAM/PAM generators plus CSV round-trip
- ``detector``: detection metrics, truncation policy, region rasters
- ``montecarlo``: seeded SEP estimation with common random numbers
- ``optimizer``: SEP-minimizing constellation search
- ``cli``: the ``imlab`` command-line front end
"""

__version__ = "0.1.0"

from .constellations import (Constellation, load_constellation, make_pam,
                             make_psk, make_qam, save_constellation)
from .detector import (DetectorKind, MlgConfig, RegionRaster, detect, i_km,
                       metric, min_truncation_index, rasterize_regions,
                       series_S)
from .interference import (InterferenceParams, c_norm, d_integral, phase_pdf,
                           phase_variance, sample_envelope,
                           sample_interference, sample_phase)
from .montecarlo import (ChannelParams, SepEstimate, sep_sweep, simulate_sep,
                         simulate_sep_multi, write_sweep_csv)
from .optimizer import (CrnState, OptimizeResult, OptimizerConfig,
                        make_crn_state, objective, optimize_constellation,
                        project_energy)
from .special import (ConvergenceError, kummer_1f1, log_bessel_i, log_gamma,
                      log_kummer_1f1)

__all__ = [
    "__version__",
    "ConvergenceError", "kummer_1f1", "log_bessel_i", "log_gamma",
    "log_kummer_1f1",
    "InterferenceParams", "c_norm", "d_integral", "phase_pdf",
    "phase_variance", "sample_envelope", "sample_interference", "sample_phase",
    "Constellation", "load_constellation", "make_pam", "make_psk", "make_qam",
    "save_constellation",
    "DetectorKind", "MlgConfig", "RegionRaster", "detect", "i_km", "metric",
    "min_truncation_index", "rasterize_regions", "series_S",
    "ChannelParams", "SepEstimate", "sep_sweep", "simulate_sep",
    "simulate_sep_multi", "write_sweep_csv",
    "CrnState", "OptimizeResult", "OptimizerConfig", "make_crn_state",
    "objective", "optimize_constellation", "project_energy",
]
