"""Receding-horizon generate/simulate/select loop.

Starting from a physically trusted prefix (feature frames), each round asks
the generator for a one-second continuation conditioned on the current
prefix and the terminal target, replays the *entire* concatenated window
through the tracker, and accepts the continuation only when the tracked
motion stays within the mean per-joint position tolerance.  Rejected
segments are resampled with a fresh random stream (one child generator per
attempt) up to the resample budget; acceptance appends the segment and the
loop re-conditions on the grown prefix until the horizon is reached.

Trackers and generators are plug-ins.  The reference trackers cover the
test spectrum: an identity tracker (perfect execution), a perturbation
tracker (seeded bounded noise), and a failure tracker that diverges from a
set frame onward.  The reference generator eases from the last prefix
frame toward the target pose with seeded low-amplitude noise; real runs
plug a diffusion sampler with the same callback signature:

    generator(prefix: (P, 262), target: (262,), condition, rng) -> (S, 262)
    tracker(reference: MotionSequence) -> MotionSequence, frame-aligned
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AlignmentError, ConfigError
from .features import (
    FEATURE_DIM,
    FOOT_CONTACT,
    HAND_CONTACT,
    RIC_POS,
    ROT6D,
    decode_root_trajectory,
    project_valid_rot6d,
    validate_features,
)
from .metrics import mpjpe
from .motion import (
    NUM_BODIES,
    NUM_JOINTS,
    MotionSequence,
    Skeleton,
    finite_difference,
)
from .rotations import quat_from_yaw, rot_z, sixd_to_rot

Generator = Callable[[np.ndarray, np.ndarray, object, np.random.Generator], np.ndarray]
Tracker = Callable[[MotionSequence], MotionSequence]

TERMINATION_COMPLETED = "completed"
TERMINATION_EXHAUSTED = "exhausted_resamples"


def features_to_motion(frames: np.ndarray, fps: float, skel: Skeleton) -> MotionSequence:
    """Rebuild a kinematic MotionSequence from feature frames.

    The root trajectory integrates the velocity blocks, body rotations come
    from the 6D blocks, and the informative bodies are placed from their
    root-relative positions.  Bodies outside the informative set collapse to
    the root (features do not carry them), and joint angles are zero: the
    result is meant for tracker replay and position metrics, not joint-space
    analysis.  Velocities are finite differences.
    """
    frames = validate_features(frames)
    t = frames.shape[0]
    pos, yaw = decode_root_trajectory(frames, fps)
    heading = rot_z(yaw)
    body_pos = np.repeat(pos[:, None, :], NUM_BODIES, axis=1)
    ric = frames[:, RIC_POS].reshape(t, 12, 3)
    world = np.einsum("tij,tbj->tbi", heading, ric) + pos[:, None, :]
    body_pos[:, list(skel.ric_body_indices)] = world

    body_rot = np.repeat(heading[:, None], NUM_BODIES, axis=1)
    rots = sixd_to_rot(frames[:, ROT6D].reshape(t, 29, 6))
    body_rot[:, list(skel.rot6d_body_indices)] = rots

    body_lin_vel = finite_difference(body_pos, fps)
    body_ang_vel = np.zeros((t, NUM_BODIES, 3))
    body_ang_vel[:, 0] = np.einsum("tij,tj->ti", heading, frames[:, 0:3])

    return MotionSequence(
        fps=fps,
        joint_pos=np.zeros((t, NUM_JOINTS)),
        joint_vel=np.zeros((t, NUM_JOINTS)),
        root_pos=pos,
        root_quat=quat_from_yaw(yaw),
        body_pos=body_pos,
        body_rot=body_rot,
        body_lin_vel=body_lin_vel,
        body_ang_vel=body_ang_vel,
    )


# --------------------------------------------------------------------------
# Reference trackers


def identity_tracker(reference: MotionSequence) -> MotionSequence:
    return reference


def make_perturbation_tracker(
    seed: int, noise_scale: float = 0.0, offset: float = 0.0
) -> Tracker:
    """Tracker adding a constant z offset and/or seeded positional noise."""
    rng = np.random.default_rng(seed)

    def tracker(reference: MotionSequence) -> MotionSequence:
        out = reference.copy()
        if offset:
            out.body_pos[..., 2] += offset
            out.root_pos[..., 2] += offset
        if noise_scale:
            out.body_pos[:] += rng.normal(0.0, noise_scale, out.body_pos.shape)
        return out

    return tracker


def make_failure_tracker(fail_after_frame: int, offset: float = 10.0) -> Tracker:
    """Tracker that diverges hard from `fail_after_frame` onward."""

    def tracker(reference: MotionSequence) -> MotionSequence:
        out = reference.copy()
        if fail_after_frame < out.num_frames:
            out.body_pos[fail_after_frame:, :, 2] += offset
            out.root_pos[fail_after_frame:, 2] += offset
        return out

    return tracker


# --------------------------------------------------------------------------
# Validation and the loop


@dataclass(frozen=True)
class PrefixLoopConfig:
    fps: float = 30.0
    mpjpe_tolerance: float = 0.15    # m
    max_resamples: int = 4
    segment_seconds: float = 1.0
    horizon_seconds: float = 10.0
    seed: int = 0
    tracked_bodies: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.mpjpe_tolerance <= 0:
            raise ConfigError("tolerance must be positive")
        if self.max_resamples < 1:
            raise ConfigError("max_resamples must be >= 1")
        if self.segment_seconds <= 0 or self.horizon_seconds <= 0:
            raise ConfigError("segment and horizon durations must be positive")

    @property
    def segment_frames(self) -> int:
        return int(round(self.fps * self.segment_seconds))

    @property
    def num_segments(self) -> int:
        return int(round(self.horizon_seconds / self.segment_seconds))


@dataclass
class AttemptRecord:
    mpjpe: float
    accepted: bool


@dataclass
class SegmentTrace:
    attempts: list[AttemptRecord] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return bool(self.attempts) and self.attempts[-1].accepted


@dataclass
class LoopTrace:
    segments: list[SegmentTrace] = field(default_factory=list)
    termination: str = TERMINATION_COMPLETED
    features: np.ndarray | None = None

    @property
    def total_attempts(self) -> int:
        return sum(len(s.attempts) for s in self.segments)

    def to_dict(self) -> dict:
        return {
            "termination": self.termination,
            "total_attempts": self.total_attempts,
            "segments": [
                {
                    "attempts": [
                        {"mpjpe": a.mpjpe, "accepted": a.accepted} for a in s.attempts
                    ],
                    "accepted": s.accepted,
                }
                for s in self.segments
            ],
        }


def validate_segment(
    reference: MotionSequence,
    tracker: Tracker,
    tolerance: float,
    tracked_bodies: tuple[int, ...] | None = None,
) -> tuple[bool, float]:
    """Replay a reference through the tracker; accept iff mpjpe <= tolerance."""
    executed = tracker(reference)
    if executed.num_frames != reference.num_frames:
        raise AlignmentError("tracker output is not frame-aligned with its input")
    err = mpjpe(reference, executed, tracked_bodies)
    return err <= tolerance, err


def run_prefix_loop(
    initial_prefix: np.ndarray,
    target: np.ndarray,
    generator: Generator,
    tracker: Tracker,
    cfg: PrefixLoopConfig,
    skel: Skeleton,
    condition: object = None,
) -> tuple[MotionSequence, LoopTrace]:
    """Grow a trusted prefix to the full horizon via validated 1 s segments.

    Every attempt generates a candidate continuation, validates the whole
    concatenated window, and either appends it or resamples with a fresh
    child random stream.  The input prefix rows are carried through
    bit-exactly.  Stops early with termination "exhausted_resamples" when a
    segment uses up its attempts.
    """
    prefix = validate_features(initial_prefix).copy()
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if target.shape[0] != FEATURE_DIM:
        raise ConfigError(f"target pose must have {FEATURE_DIM} dims")
    root = np.random.default_rng(cfg.seed)
    trace = LoopTrace()

    for _segment in range(cfg.num_segments):
        seg_trace = SegmentTrace()
        trace.segments.append(seg_trace)
        accepted = False
        for _attempt in range(cfg.max_resamples):
            attempt_rng = root.spawn(1)[0]
            candidate = np.asarray(
                generator(prefix, target, condition, attempt_rng), dtype=np.float64
            )
            if candidate.shape != (cfg.segment_frames, FEATURE_DIM):
                raise ConfigError(
                    f"generator must return ({cfg.segment_frames}, {FEATURE_DIM}) frames"
                )
            window = np.vstack([prefix, candidate])
            reference = features_to_motion(window, cfg.fps, skel)
            ok, err = validate_segment(
                reference, tracker, cfg.mpjpe_tolerance, cfg.tracked_bodies
            )
            seg_trace.attempts.append(AttemptRecord(mpjpe=err, accepted=ok))
            if ok:
                prefix = window
                accepted = True
                break
        if not accepted:
            trace.termination = TERMINATION_EXHAUSTED
            break

    trace.features = prefix
    return features_to_motion(prefix, cfg.fps, skel), trace


# --------------------------------------------------------------------------
# Reference generator


def smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def make_interpolation_generator(
    segment_frames: int, noise_scale: float = 0.005
) -> Generator:
    """Cubic-ease interpolation from the prefix end toward the target pose.

    Seeded noise perturbs the continuous blocks; 6D rotation blocks are
    re-orthonormalized afterward and contact bits snap back to {0, 1}, so
    the output always satisfies the feature-frame invariants.
    """

    def generator(prefix, target, condition, rng) -> np.ndarray:
        prefix = validate_features(prefix)
        last = prefix[-1]
        target_vec = np.asarray(target, dtype=np.float64).reshape(-1)
        u = np.arange(1, segment_frames + 1) / segment_frames
        ease = smoothstep(u)[:, None]
        frames = last + ease * (target_vec - last)
        if noise_scale > 0.0:
            noise = rng.normal(0.0, noise_scale, frames.shape)
            # fade noise out toward the endpoint so the target is honored
            frames = frames + noise * (1.0 - ease)
        frames[:, FOOT_CONTACT] = (frames[:, FOOT_CONTACT] > 0.5).astype(float)
        frames[:, HAND_CONTACT] = (frames[:, HAND_CONTACT] > 0.5).astype(float)
        return project_valid_rot6d(frames)

    return generator
