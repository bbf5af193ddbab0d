"""Hand-eye calibration and surface-scanning toolkit for a robot-mounted
OCT probe and RGB-D camera, grounded in a synthetic simulation world.

Frames: O = OCT probe, C = camera, G = robot end-effector, CW = calibration
board world, RW = robot world. H_xy maps frame y coordinates into frame x's
parent chain as documented per module; the two calibration unknowns are
H_cg (camera to end-effector) and H_og (probe to end-effector).
"""

from .board import BoardSpec, generate_dictionary
from .errors import OctCalibError
from .evaluate import (distance_study, plateau_study, repeatability,
                       reprojection_error, summarize)
from .geom import (EulerRPY, RigidTransform, apply, compose, geodesic_angle,
                   invert, rotation_from_rpy, rpy_from_rotation, umeyama_fit)
from .pipeline import CalibrationResult, build_dataset, calibrate
from .scan import (PointCloud, ScanPlan, SphereFit, acquire_scan,
                   coverage_report, cross_section, fit_sphere, load_ply,
                   plan_6d_sphere, plan_translation_raster, save_ply, stitch)
from .sim import NoiseParams, Observation, ScenarioConfig, SurfaceModel
from .solve import CameraIntrinsics, hand_eye_tsai_lenz, pnp_planar
from .volume import (OctVolume, enface_max_projection, extract_surface,
                     lift_pixels_to_3d, load_octv, median_filter_3, save_octv)

__version__ = "0.1.0"

__all__ = [
    "BoardSpec", "CalibrationResult", "CameraIntrinsics", "EulerRPY",
    "NoiseParams", "Observation", "OctCalibError", "OctVolume", "PointCloud",
    "RigidTransform", "ScanPlan", "ScenarioConfig", "SphereFit",
    "SurfaceModel", "acquire_scan", "apply", "build_dataset", "calibrate",
    "compose", "coverage_report", "cross_section", "distance_study",
    "enface_max_projection", "extract_surface", "fit_sphere",
    "generate_dictionary", "geodesic_angle", "hand_eye_tsai_lenz", "invert",
    "lift_pixels_to_3d", "load_octv", "load_ply", "median_filter_3",
    "plan_6d_sphere", "plan_translation_raster", "plateau_study",
    "pnp_planar", "repeatability", "reprojection_error", "rotation_from_rpy",
    "rpy_from_rotation", "save_octv", "save_ply", "stitch", "summarize",
    "umeyama_fit",
]
