"""Synthetic multipath CSI generation."""
from .gestures import (GESTURES, ConstantVelocityDelay, GestureGeometry, GestureKind,
                       TrajectoryDelay, count_sign_changes, gesture_trajectories,
                       synthesize_gesture_paths)
from .io import CSI_HEADER, ScenarioSpec, load_scenario, read_csi_csv, scenario_from_dict, write_csi_csv
from .layout import Layout
from .model import (SPEED_OF_LIGHT, CsiTensor, PathComponent, PathKind, Scenario, add_noise,
                    generate_csi)

__all__ = [
    "GESTURES", "ConstantVelocityDelay", "GestureGeometry", "GestureKind", "TrajectoryDelay",
    "count_sign_changes", "gesture_trajectories", "synthesize_gesture_paths", "CSI_HEADER",
    "ScenarioSpec", "load_scenario", "read_csi_csv", "scenario_from_dict", "write_csi_csv",
    "Layout", "SPEED_OF_LIGHT", "CsiTensor", "PathComponent", "PathKind", "Scenario",
    "add_noise", "generate_csi",
]
