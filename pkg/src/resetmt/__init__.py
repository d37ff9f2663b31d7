"""Multiple testing with side information by rescoring target-decoy competitions."""
from .ensemble import EnsembleConfig, run_ensemble
from .filters import bh, fdp_sd, fdp_sd_bounds, gr_sd, seqstep
from .model import ConfigError, DataError, DiscoveryList, FilterParams, HypothesisTable, Mode, PValueTable, SeedSpec
from .pvalue_adapter import ConversionRegions, pvalues_to_table
from .reset import ResetConfig, adjust_c, compare_bounds, run_reset, run_reset_pvalues

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConversionRegions",
    "DataError",
    "DiscoveryList",
    "EnsembleConfig",
    "FilterParams",
    "HypothesisTable",
    "Mode",
    "PValueTable",
    "ResetConfig",
    "SeedSpec",
    "adjust_c",
    "bh",
    "compare_bounds",
    "fdp_sd",
    "fdp_sd_bounds",
    "gr_sd",
    "pvalues_to_table",
    "run_ensemble",
    "run_reset",
    "run_reset_pvalues",
    "seqstep",
]
