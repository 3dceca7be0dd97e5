"""Evaluation toolkit for multi-user massive MIMO channel measurements."""

__version__ = "0.1.0"

from .capacity import dpc_capacity, if_capacity, zf_sumrate
from .channel import AntennaSubset, ArrayKind, ChannelTensor, EvalParams, NormState, select_subset
from .ctf import read_channel_file, write_channel_file
from .ensemble import EnsembleReport, run_capacity_ensemble, run_spread_ensemble
from .errors import MimoEvalError
from .fingerprint import FingerprintMap, build_fingerprint, fingerprint_overlap
from .models import ArrayGeometry, Scenario, gen_geometric, gen_rayleigh, scenario_preset
from .normalization import normalize, normalize1, normalize2
from .sage import SageConfig, sage_estimate
from .spectral import singular_spread

__all__ = [
    "AntennaSubset", "ArrayGeometry", "ArrayKind", "ChannelTensor", "EnsembleReport", "EvalParams",
    "FingerprintMap", "MimoEvalError", "NormState", "SageConfig", "Scenario", "build_fingerprint",
    "dpc_capacity", "fingerprint_overlap", "gen_geometric", "gen_rayleigh", "if_capacity", "normalize",
    "normalize1", "normalize2", "read_channel_file", "run_capacity_ensemble", "run_spread_ensemble",
    "sage_estimate", "scenario_preset", "select_subset", "singular_spread", "write_channel_file",
    "zf_sumrate",
]
