"""Instrumental-variable quantile regression for spatial panel models with fixed effects."""

from .errors import (
    ConfigError,
    DataError,
    DesignConstructionError,
    InferenceDegeneracyError,
    InstrumentShapeError,
    InvalidDimensionError,
    PanelFormatError,
    RankError,
    SingularFilterError,
    SpivqrError,
    WeightError,
    WeightMatrixError,
)
from .inference import (
    DensityEstimate,
    SandwichParts,
    build_sandwich,
    coefficient_names,
    confidence_band,
    estimate_density,
    hall_sheather_bandwidth,
    write_band_csv,
)
from .ivqr import (
    GammaProfilePoint,
    IvqrResult,
    LambdaGrid,
    OlsResult,
    estimate_ivqr,
    estimate_ols,
    nuisance_basis,
    step1_profile,
    step2_select,
)
from .mc import IVQR, OLS, McCell, McConfig, McReport, format_report, parse_report_csv, run_mc
from .panel import (
    DesignSystem,
    DgpSpec,
    EffectsMode,
    ErrorDist,
    InstrumentRule,
    PanelData,
    TrueEffects,
    build_design,
    load_panel_csv,
    save_panel_csv,
    simulate,
)
from .qr import QrProblem, QuantileFit, check_loss, solve_qr
from .spatial import (
    SpatialFilter,
    SpatialWeights,
    apply_expanded,
    build_rook_weights,
    kron_expand,
    load_weights_csv,
    save_weights_csv,
    spatial_filter,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DensityEstimate",
    "DesignConstructionError",
    "DesignSystem",
    "DgpSpec",
    "EffectsMode",
    "ErrorDist",
    "GammaProfilePoint",
    "IVQR",
    "InferenceDegeneracyError",
    "InstrumentRule",
    "InstrumentShapeError",
    "InvalidDimensionError",
    "IvqrResult",
    "LambdaGrid",
    "McCell",
    "McConfig",
    "McReport",
    "OLS",
    "OlsResult",
    "PanelData",
    "PanelFormatError",
    "QrProblem",
    "QuantileFit",
    "RankError",
    "SandwichParts",
    "SingularFilterError",
    "SpatialFilter",
    "SpatialWeights",
    "SpivqrError",
    "TrueEffects",
    "WeightError",
    "WeightMatrixError",
    "apply_expanded",
    "build_design",
    "build_rook_weights",
    "build_sandwich",
    "check_loss",
    "coefficient_names",
    "confidence_band",
    "estimate_density",
    "estimate_ivqr",
    "estimate_ols",
    "format_report",
    "hall_sheather_bandwidth",
    "kron_expand",
    "load_panel_csv",
    "load_weights_csv",
    "nuisance_basis",
    "parse_report_csv",
    "run_mc",
    "save_panel_csv",
    "save_weights_csv",
    "simulate",
    "solve_qr",
    "spatial_filter",
    "step1_profile",
    "step2_select",
    "write_band_csv",
]
