"""Per-bit ID entropy intrusion detection for simulated CAN buses."""
from .can_core import CanFrame, arbitration_winner, id_bits
from .detector import GoldenTemplate, build_template, detect
from .entropy import WindowPolicy, binary_entropy, bit_stats, windowed_stats
from .inference import BitConstraint, derive_constraints, infer_multi, rank_candidates

__all__ = [
    "CanFrame",
    "arbitration_winner",
    "id_bits",
    "GoldenTemplate",
    "build_template",
    "detect",
    "WindowPolicy",
    "binary_entropy",
    "bit_stats",
    "windowed_stats",
    "BitConstraint",
    "derive_constraints",
    "infer_multi",
    "rank_candidates",
]
__version__ = "0.1.0"
