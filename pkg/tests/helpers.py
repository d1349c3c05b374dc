"""Synthetic motion builders shared by the test suite."""

from __future__ import annotations

import numpy as np

from motion_forge.motion import NUM_BODIES, NUM_JOINTS, MotionSequence, Skeleton
from motion_forge.rotations import (
    matrix_to_quat,
    quat_normalize,
    quat_to_matrix,
    rot_z,
)

ROOT_HEIGHT = 0.8

# Standing-pose body offsets relative to the root, left side; right side
# mirrors y. Ankles sit below the foot contact height, palms well above the
# hand contact height.
_CENTER_OFFSETS = {
    "pelvis": (0.0, 0.0, 0.0),
    "waist_yaw_link": (0.0, 0.0, 0.10),
    "waist_roll_link": (0.0, 0.0, 0.15),
    "torso_link": (0.0, 0.0, 0.25),
}
_SIDE_OFFSETS = {
    "shoulder_pitch_link": (0.0, 0.15, 0.35),
    "shoulder_roll_link": (0.0, 0.20, 0.33),
    "shoulder_yaw_link": (0.0, 0.22, 0.25),
    "elbow_link": (0.0, 0.24, 0.12),
    "wrist_roll_link": (0.02, 0.25, 0.00),
    "wrist_pitch_link": (0.03, 0.25, -0.06),
    "palm_link": (0.05, 0.26, -0.12),
    "hip_pitch_link": (0.0, 0.08, -0.05),
    "hip_roll_link": (0.0, 0.09, -0.10),
    "hip_yaw_link": (0.0, 0.09, -0.20),
    "knee_link": (0.0, 0.09, -0.40),
    "ankle_pitch_link": (0.0, 0.09, -0.76),
    "ankle_roll_link": (0.02, 0.09, -0.77),
}


def body_offsets(skel: Skeleton) -> np.ndarray:
    out = np.zeros((NUM_BODIES, 3))
    for i, name in enumerate(skel.body_names):
        if name in _CENTER_OFFSETS:
            out[i] = _CENTER_OFFSETS[name]
        elif name.startswith("left_"):
            out[i] = _SIDE_OFFSETS[name[len("left_"):]]
        elif name.startswith("right_"):
            dx, dy, dz = _SIDE_OFFSETS[name[len("right_"):]]
            out[i] = (dx, -dy, dz)
        else:
            raise KeyError(name)
    return out


def rigid_sequence(
    skel: Skeleton,
    root_pos: np.ndarray,
    yaw: np.ndarray,
    fps: float,
    root_lin_vel: np.ndarray | None = None,
    yaw_rate: np.ndarray | None = None,
    joint_pos: np.ndarray | None = None,
) -> MotionSequence:
    """Clip where all bodies ride rigidly on the root at fixed offsets.

    Velocities are analytic: v_b = v_root + omega x (R offset).
    """
    root_pos = np.asarray(root_pos, dtype=np.float64)
    yaw = np.asarray(yaw, dtype=np.float64)
    t = root_pos.shape[0]
    if root_lin_vel is None:
        root_lin_vel = np.zeros((t, 3))
    if yaw_rate is None:
        yaw_rate = np.zeros(t)
    offsets = body_offsets(skel)
    heading = rot_z(yaw)                                   # (T, 3, 3)
    world_off = np.einsum("tij,bj->tbi", heading, offsets)  # (T, 30, 3)
    body_pos = root_pos[:, None, :] + world_off
    omega = np.zeros((t, 3))
    omega[:, 2] = yaw_rate
    body_lin_vel = root_lin_vel[:, None, :] + np.cross(omega[:, None, :], world_off)
    body_rot = np.broadcast_to(heading[:, None], (t, NUM_BODIES, 3, 3)).copy()
    body_ang_vel = np.broadcast_to(omega[:, None, :], (t, NUM_BODIES, 3)).copy()
    quat = matrix_to_quat(heading)
    if joint_pos is None:
        joint_pos = np.zeros((t, NUM_JOINTS))
    return MotionSequence(
        fps=fps,
        joint_pos=joint_pos,
        joint_vel=np.zeros((t, NUM_JOINTS)),
        root_pos=body_pos[:, 0],
        root_quat=quat,
        body_pos=body_pos,
        body_rot=body_rot,
        body_lin_vel=body_lin_vel,
        body_ang_vel=body_ang_vel,
    )


def make_standing_sequence(skel: Skeleton, num_frames: int = 10, fps: float = 30.0) -> MotionSequence:
    root = np.zeros((num_frames, 3))
    root[:, 2] = ROOT_HEIGHT
    return rigid_sequence(skel, root, np.zeros(num_frames), fps)


def make_walk_sequence(
    skel: Skeleton,
    speed: float,
    yaw_rate: float,
    num_frames: int,
    fps: float,
    start_yaw: float = 0.0,
    height: float = ROOT_HEIGHT,
) -> MotionSequence:
    """Constant-speed walk along a line (yaw_rate 0) or circular arc."""
    times = np.arange(num_frames) / fps
    yaw = start_yaw + yaw_rate * times
    pos = np.zeros((num_frames, 3))
    pos[:, 2] = height
    if abs(yaw_rate) < 1e-12:
        pos[:, 0] = speed * times * np.cos(start_yaw)
        pos[:, 1] = speed * times * np.sin(start_yaw)
    else:
        radius = speed / yaw_rate
        pos[:, 0] = radius * (np.sin(yaw) - np.sin(start_yaw))
        pos[:, 1] = radius * (np.cos(start_yaw) - np.cos(yaw))
    vel = np.stack([speed * np.cos(yaw), speed * np.sin(yaw), np.zeros(num_frames)], axis=-1)
    return rigid_sequence(
        skel, pos, yaw, fps,
        root_lin_vel=vel,
        yaw_rate=np.full(num_frames, yaw_rate),
    )


def random_quaternions(rng: np.random.Generator, shape=()) -> np.ndarray:
    q = rng.standard_normal(shape + (4,))
    q = quat_normalize(q)
    q[..., 0] = np.abs(q[..., 0])
    return q


def random_rotations(rng: np.random.Generator, shape=()) -> np.ndarray:
    return quat_to_matrix(random_quaternions(rng, shape))


def make_random_sequence(skel: Skeleton, rng: np.random.Generator,
                         num_frames: int = 8, fps: float = 30.0) -> MotionSequence:
    """Valid but arbitrary sequence for round-trip and invariance tests."""
    t = num_frames
    quat = random_quaternions(rng, (t,))
    root_pos = rng.uniform(-1.0, 1.0, (t, 3)) + np.array([0.0, 0.0, 1.5])
    body_pos = rng.uniform(-1.0, 1.0, (t, NUM_BODIES, 3)) + np.array([0.0, 0.0, 1.5])
    body_rot = random_rotations(rng, (t, NUM_BODIES))
    body_pos[:, 0] = root_pos
    body_rot[:, 0] = quat_to_matrix(quat)
    return MotionSequence(
        fps=fps,
        joint_pos=rng.uniform(-1.0, 1.0, (t, NUM_JOINTS)),
        joint_vel=rng.uniform(-2.0, 2.0, (t, NUM_JOINTS)),
        root_pos=root_pos,
        root_quat=quat,
        body_pos=body_pos,
        body_rot=body_rot,
        body_lin_vel=rng.uniform(-2.0, 2.0, (t, NUM_BODIES, 3)),
        body_ang_vel=rng.uniform(-3.0, 3.0, (t, NUM_BODIES, 3)),
    )


def neutral_features(num_frames: int, height: float = 0.8) -> np.ndarray:
    """Feature frames of a standing pose: identity rotations, planted feet."""
    from motion_forge.features import FEATURE_DIM, FOOT_CONTACT, ROOT_HEIGHT as RH, ROT6D

    frames = np.zeros((num_frames, FEATURE_DIM))
    frames[:, RH] = height
    frames[:, ROT6D] = np.tile([1.0, 0, 0, 0, 1, 0], 29)
    frames[:, FOOT_CONTACT] = 1.0
    return frames
