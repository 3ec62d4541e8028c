"""Monocular lane-keeping software-in-the-loop simulator.

Synthetic bird's-eye camera, sliding-window lane detection, a single-track
vehicle model and two lateral controllers (incremental MPC and PID).
"""

from .config import SimConfig, load_config
from .harness import compare_controllers, compute_metrics, run_sim

__all__ = ["SimConfig", "load_config", "run_sim", "compute_metrics", "compare_controllers"]
__version__ = "0.1.0"
