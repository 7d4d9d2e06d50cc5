"""Multi-task group-buying recommendation: view GCNs, shared experts, dual ranking heads."""

from .config import MgbrConfig
from .data import Dataset, DealGroup, generate_synthetic, parse_groups
from .model import MGBR

__version__ = "0.1.0"

__all__ = ["Dataset", "DealGroup", "MGBR", "MgbrConfig", "generate_synthetic", "parse_groups"]
