"""Sampling-based model predictive control for quadrotor navigation in voxel
obstacle forests, under full or partial map observability."""

from ._accel import BACKEND
from .cost import CostParams, GoalSpec
from .dynamics import VehicleParams
from .mppi import Controller, MppiConfig, control_step
from .sim import ScenarioConfig, run_batch, run_trial
from .world import VoxelGrid, new_grid

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Controller",
    "CostParams",
    "GoalSpec",
    "MppiConfig",
    "ScenarioConfig",
    "VehicleParams",
    "VoxelGrid",
    "control_step",
    "new_grid",
    "run_batch",
    "run_trial",
]
