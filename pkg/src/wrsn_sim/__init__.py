"""Deterministic simulator and protocol library for ISAC-assisted wireless
rechargeable sensor networks with multiple mobile charging vehicles."""

from .config import IsacConfig, ScenarioConfig, validate_config
from .engine import run
from .kernels import BACKEND

__all__ = ["IsacConfig", "ScenarioConfig", "validate_config", "run", "BACKEND"]
__version__ = "0.1.0"
