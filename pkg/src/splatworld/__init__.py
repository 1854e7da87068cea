"""splatworld: real-to-sim toolkit for Gaussian-splat robot workspaces.

Aligns splat assets and collision meshes into a shared robot-base frame,
composes a unified photorealistic splat world, executes collision-aware
trajectories kinematically, and emits hybrid-rendered episode datasets.
"""

from .calibration import MotionPair, hand_eye_tsai_lenz, motion_pairs_from_stations
from .cameras import PinholeCamera, transform_camera_pose
from .collision import ObstacleSet, check_collision
from .imaging import composite, masked_photometric_l1, photometric_l1
from .kinematics import KinematicChain, forward_kinematics, ik_solve, parse_chain
from .manifest import SceneManifest, TaskSpec, load_manifest, load_task, save_manifest
from .meshes import TriMesh, apply_placement_to_mesh, load_mesh, sample_mesh_points
from .mesh_render import rasterize_meshes
from .pipeline import compose_world, generate_episode
from .planning import JointTrajectory, PlanningError, RrtParams, plan_rrt
from .pointcloud import PointCloud, transform_points
from .registration import IcpParams, chamfer_distance, scaled_icp, umeyama_sim3
from .sh import eval_sh
from .splat_ply import parse_splat_ply, write_splat_ply
from .splat_render import project_gaussian, render_splats
from .splats import (
    GaussianSplat,
    SHCoefficients,
    SplatSet,
    SymMat3,
    apply_sim3,
    covariance_of,
    density_at,
    merge,
    sample_points,
)
from .transforms import RigidPose, Sim3

__version__ = "0.1.0"
