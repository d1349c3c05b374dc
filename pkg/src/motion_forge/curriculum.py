"""Two-stage data curriculum: adaptive sampling, freeze-and-drop, levels.

Per-file statistics are exponential moving averages: the tracking error uses
E <- (1 - alpha) E + alpha e_batch with alpha = 0.25, and the success rate
keeps decayed success/failure counters (decay beta = 0.4) whose ratio
S / (S + F + eps) estimates the success probability.

Sampling scores blend normalized error and failure rate,

    r_i = (1 - w) * min(E_i / c, 1) + w * (1 - p_succ_i),

with c = 0.3 and w = 0.15 after a 6000-iteration warmup (w = 0 before).
The distribution over active files is a tempered softmax with a uniform
floor:

    p_i = (1 - eps) * softmax(log(r_i + eps) / T) + eps / N,

with T = 1.05 and eps = 0.20, so every active file keeps at least eps / N
probability.

Freeze-and-drop removes untrackable files: once a file has at least 20000
rollouts and still has E >= 0.1 or success <= 0.15 it freezes for 4000
iterations; the third trigger drops it permanently.  Levels 1..10 unlock one
at a time, each introducing its files gradually from a 20% ratio, and a
level is left once MPJPE improvement stalls below 3% for three consecutive
evaluations (after at least 3000 iterations on the level).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError

STATE_ACTIVE = "active"
STATE_FROZEN = "frozen"
STATE_DROPPED = "dropped"

MAX_TRAINABLE_LEVEL = 10
MAX_LEVEL = 12


@dataclass(frozen=True)
class SamplerConfig:
    error_ema_alpha: float = 0.25
    success_decay_beta: float = 0.4
    error_norm_c: float = 0.3
    success_weight_w: float = 0.15
    success_warmup_iters: int = 6000
    temperature: float = 1.05
    epsilon: float = 0.20
    success_eps: float = 1.0        # denominator prior in S / (S + F + eps)
    tau_err: float = 0.1
    tau_succ: float = 0.15
    n_min: int = 20000
    freeze_duration: int = 4000
    max_freezes: int = 2
    check_interval: int = 500
    intro_start_ratio: float = 0.2
    intro_base_iters: int = 3000
    intro_extra_iters: int = 2000   # added for levels >= intro_extra_level
    intro_extra_level: int = 4
    promote_rel_improvement: float = 0.03
    promote_consecutive: int = 3
    promote_min_iters: int = 3000
    level_mass_floor: float = 0.02  # minimum replay mass per unlocked level

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        for name in ("error_ema_alpha", "success_decay_beta", "error_norm_c",
                     "tau_err", "tau_succ", "freeze_duration", "check_interval"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


@dataclass
class FileRecord:
    """Mutable curriculum state for one motion file."""

    file_id: str
    level: int
    ema_error: float = 0.0
    success_count: float = 0.0
    failure_count: float = 0.0
    attempts: int = 0
    freeze_state: str = STATE_ACTIVE
    frozen_until: int = 0
    freeze_count: int = 0
    recent_errors: list = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.level <= MAX_LEVEL:
            raise ConfigError(f"level must be in 1..{MAX_LEVEL}, got {self.level}")

    def success_rate(self, cfg: SamplerConfig) -> float:
        return self.success_count / (self.success_count + self.failure_count + cfg.success_eps)

    def is_active(self, iteration: int) -> bool:
        if self.level > MAX_TRAINABLE_LEVEL:
            return False
        if self.freeze_state == STATE_DROPPED:
            return False
        if self.freeze_state == STATE_FROZEN:
            return iteration >= self.frozen_until
        return True


def update_file_stats(
    rec: FileRecord,
    batch_error: float,
    batch_successes: int,
    batch_failures: int,
    cfg: SamplerConfig,
) -> FileRecord:
    """Fold one batch of rollouts into a file's EMA statistics."""
    if batch_error < 0:
        raise ValueError("batch error must be non-negative")
    a = cfg.error_ema_alpha
    b = cfg.success_decay_beta
    rec.ema_error = (1.0 - a) * rec.ema_error + a * batch_error
    rec.success_count = b * rec.success_count + batch_successes
    rec.failure_count = b * rec.failure_count + batch_failures
    rec.attempts += batch_successes + batch_failures
    rec.recent_errors.append(batch_error)
    if len(rec.recent_errors) > 16:
        del rec.recent_errors[0]
    return rec


def sampling_scores(records: Sequence[FileRecord], cfg: SamplerConfig, iteration: int) -> np.ndarray:
    """Raw priority score r_i per record (no activity filtering)."""
    w = cfg.success_weight_w if iteration >= cfg.success_warmup_iters else 0.0
    err = np.array([min(r.ema_error / cfg.error_norm_c, 1.0) for r in records])
    fail = np.array([1.0 - r.success_rate(cfg) for r in records])
    return (1.0 - w) * err + w * fail


def sampling_distribution(
    records: Sequence[FileRecord],
    cfg: SamplerConfig,
    iteration: int,
) -> np.ndarray:
    """Sampling probability per record; inactive records get exactly zero.

    Active records receive (1 - eps) * softmax(log(r + eps) / T) + eps / N,
    which sums to 1 and floors every active file at eps / N.
    """
    active = [i for i, r in enumerate(records) if r.is_active(iteration)]
    if not active:
        raise ConfigError("no active records to sample from")
    scores = sampling_scores([records[i] for i in active], cfg, iteration)
    logits = np.log(scores + cfg.epsilon) / cfg.temperature
    logits -= logits.max()
    soft = np.exp(logits)
    soft /= soft.sum()
    n = len(active)
    probs = (1.0 - cfg.epsilon) * soft + cfg.epsilon / n
    out = np.zeros(len(records))
    out[active] = probs
    return out


def apply_level_quota(
    probs: np.ndarray,
    levels: Sequence[int],
    floor: float,
) -> np.ndarray:
    """Raise any unlocked level's total mass to the replay floor.

    Deficits are added uniformly within the starved level and paid
    proportionally by levels above the floor; the result still sums to 1.
    """
    probs = np.asarray(probs, dtype=np.float64).copy()
    levels = np.asarray(levels)
    present = [lv for lv in np.unique(levels) if probs[levels == lv].sum() > 0.0]
    if len(present) < 2 or floor <= 0.0:
        return probs
    masses = {lv: probs[levels == lv].sum() for lv in present}
    deficit = {lv: max(0.0, floor - m) for lv, m in masses.items()}
    total_deficit = sum(deficit.values())
    if total_deficit <= 0.0:
        return probs
    surplus = {lv: max(0.0, masses[lv] - floor) for lv in present}
    total_surplus = sum(surplus.values())
    if total_surplus <= 0.0:
        return probs
    for lv in present:
        sel = (levels == lv) & (probs > 0.0)
        if deficit[lv] > 0.0:
            probs[sel] += deficit[lv] / sel.sum()
        elif surplus[lv] > 0.0:
            probs[sel] -= probs[sel] / masses[lv] * (total_deficit * surplus[lv] / total_surplus)
    probs = np.maximum(probs, 0.0)
    return probs / probs.sum()


def check_freeze(rec: FileRecord, cfg: SamplerConfig, iteration: int) -> str | None:
    """Apply the freeze-and-drop rule; returns "frozen"/"dropped" on a trigger.

    A file triggers when (E >= tau_err or success <= tau_succ) and it has at
    least n_min rollouts.  Two triggers freeze temporarily; the third drops
    the file for good.
    """
    if rec.freeze_state == STATE_DROPPED:
        return None
    if rec.freeze_state == STATE_FROZEN:
        if iteration >= rec.frozen_until:
            rec.freeze_state = STATE_ACTIVE
        else:
            return None
    struggling = rec.ema_error >= cfg.tau_err or rec.success_rate(cfg) <= cfg.tau_succ
    if not (struggling and rec.attempts >= cfg.n_min):
        return None
    if rec.freeze_count >= cfg.max_freezes:
        rec.freeze_state = STATE_DROPPED
        return STATE_DROPPED
    rec.freeze_count += 1
    rec.freeze_state = STATE_FROZEN
    rec.frozen_until = iteration + cfg.freeze_duration
    return STATE_FROZEN


def introduction_ratio(iteration: int, unlock_iter: int, level: int, cfg: SamplerConfig) -> float:
    """Fraction of a newly unlocked level's files available at `iteration`."""
    if iteration < unlock_iter:
        raise ValueError("iteration precedes the level's unlock")
    horizon = cfg.intro_base_iters
    if level >= cfg.intro_extra_level:
        horizon += cfg.intro_extra_iters
    progress = min(iteration - unlock_iter, horizon) / horizon
    return cfg.intro_start_ratio + progress * (1.0 - cfg.intro_start_ratio)


def promotion_check(eval_errors: Sequence[float], iters_on_level: int, cfg: SamplerConfig) -> bool:
    """True when the level's metric has stalled: the last
    `promote_consecutive` relative improvements are all below the threshold
    and the level has run long enough."""
    if iters_on_level < cfg.promote_min_iters:
        return False
    k = cfg.promote_consecutive
    if len(eval_errors) < k + 1:
        return False
    tail = list(eval_errors)[-(k + 1):]
    for prev, cur in zip(tail[:-1], tail[1:]):
        if prev <= 0.0:
            return False
        if (prev - cur) / prev >= cfg.promote_rel_improvement:
            return False
    return True


def record_to_dict(rec: FileRecord) -> dict:
    return {
        "file_id": rec.file_id,
        "level": rec.level,
        "ema_error": rec.ema_error,
        "success_count": rec.success_count,
        "failure_count": rec.failure_count,
        "attempts": rec.attempts,
        "freeze_state": rec.freeze_state,
        "frozen_until": rec.frozen_until,
        "freeze_count": rec.freeze_count,
        "recent_errors": list(rec.recent_errors),
    }


def record_from_dict(data: dict) -> FileRecord:
    return FileRecord(**data)


def save_records(records: Sequence[FileRecord], path) -> None:
    """Persist file records as JSON lines (one record per line)."""
    import json
    from pathlib import Path

    lines = [json.dumps(record_to_dict(r), separators=(",", ":")) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def load_records(path) -> list[FileRecord]:
    import json
    from pathlib import Path

    records = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            records.append(record_from_dict(json.loads(line)))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"{path}: bad record on line {i + 1}: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# Desk-scale curriculum simulation


@dataclass(frozen=True)
class SyntheticFile:
    """Spec of one synthetic motion file for the scheduler driver.

    The tracking error decays exponentially in accumulated exposure,
    error(n) = floor + (start - floor) * exp(-improve_rate * n), and each
    rollout succeeds with probability exp(-error / success_scale).
    """

    file_id: str
    level: int
    start_error: float = 0.3
    error_floor: float = 0.02
    improve_rate: float = 5e-4
    success_scale: float = 0.15

    def error_at(self, exposures: int) -> float:
        return self.error_floor + (self.start_error - self.error_floor) * math.exp(
            -self.improve_rate * exposures
        )


ErrorProcess = Callable[[SyntheticFile, int, int, np.random.Generator], tuple[float, int, int]]


def default_error_process(
    spec: SyntheticFile, exposures: int, rollouts: int, rng: np.random.Generator
) -> tuple[float, int, int]:
    """(batch error, successes, failures) for `rollouts` draws of a file."""
    error = spec.error_at(exposures)
    p_succ = math.exp(-error / spec.success_scale)
    successes = int(rng.binomial(rollouts, p_succ))
    return error, successes, rollouts - successes


@dataclass(frozen=True)
class SimConfig:
    total_iters: int = 20000
    rollouts_per_iter: int = 64
    eval_interval: int = 500
    trace_interval: int = 500
    seed: int = 0


@dataclass
class SimEvent:
    iteration: int
    kind: str       # "freeze" | "drop" | "promote"
    target: str     # file id or "level:<n>"


@dataclass
class TraceRow:
    iteration: int
    current_level: int
    active_files: int
    level_mass: dict[int, float]


@dataclass
class CurriculumTrace:
    rows: list[TraceRow] = field(default_factory=list)
    events: list[SimEvent] = field(default_factory=list)
    final_level: int = 1

    def to_csv(self) -> str:
        lines = ["iteration,current_level,active_files,"
                 + ",".join(f"level_{lv}_mass" for lv in range(1, MAX_TRAINABLE_LEVEL + 1))
                 + ",events"]
        events_by_iter: dict[int, list[str]] = {}
        for ev in self.events:
            events_by_iter.setdefault(ev.iteration, []).append(f"{ev.kind}:{ev.target}")
        for row in self.rows:
            masses = ",".join(
                format(row.level_mass.get(lv, 0.0), ".10g")
                for lv in range(1, MAX_TRAINABLE_LEVEL + 1)
            )
            evs = ";".join(events_by_iter.get(row.iteration, []))
            lines.append(f"{row.iteration},{row.current_level},{row.active_files},{masses},{evs}")
        return "\n".join(lines) + "\n"


class CurriculumState:
    """Single-writer state machine driving levels, introduction, and freezes."""

    def __init__(self, files: Sequence[SyntheticFile], cfg: SamplerConfig, seed: int):
        self.cfg = cfg
        self.files = list(files)
        self.records = {f.file_id: FileRecord(f.file_id, f.level) for f in files}
        self.current_level = 1
        self.level_unlock_iter = {1: 0}
        self.level_eval_history: dict[int, list[float]] = {lv: [] for lv in range(1, MAX_LEVEL + 1)}
        # fixed seed-shuffled introduction order per level
        rng = np.random.default_rng(seed)
        self.intro_order: dict[int, list[str]] = {}
        for lv in range(1, MAX_LEVEL + 1):
            ids = [f.file_id for f in files if f.level == lv]
            rng.shuffle(ids)
            self.intro_order[lv] = ids

    def introduced_ids(self, iteration: int) -> list[str]:
        out = []
        for lv in range(1, self.current_level + 1):
            ids = self.intro_order.get(lv, [])
            if not ids:
                continue
            unlock = self.level_unlock_iter.get(lv, 0)
            if iteration < unlock:
                continue
            ratio = introduction_ratio(iteration, unlock, lv, self.cfg)
            out.extend(ids[: math.ceil(ratio * len(ids))])
        return out

    def active_records(self, iteration: int) -> list[FileRecord]:
        return [
            self.records[fid]
            for fid in self.introduced_ids(iteration)
            if self.records[fid].is_active(iteration)
        ]


def run_curriculum_sim(
    files: Sequence[SyntheticFile],
    cfg: SamplerConfig | None = None,
    sim: SimConfig | None = None,
    error_process: ErrorProcess = default_error_process,
) -> CurriculumTrace:
    """Drive the scheduler end to end on synthetic files, deterministically.

    Every `trace_interval` iterations one row records the sampled mass per
    level; freeze, drop, and promotion events are logged as they happen.
    """
    cfg = cfg or SamplerConfig()
    sim = sim or SimConfig()
    rng = np.random.default_rng(sim.seed)
    state = CurriculumState(files, cfg, sim.seed)
    specs = {f.file_id: f for f in files}
    trace = CurriculumTrace()

    for it in range(sim.total_iters):
        active = state.active_records(it)
        if active:
            probs = sampling_distribution(active, cfg, it)
            probs = apply_level_quota(probs, [r.level for r in active], cfg.level_mass_floor)
            counts = rng.multinomial(sim.rollouts_per_iter, probs)
            for rec, count in zip(active, counts):
                if count == 0:
                    continue
                err, succ, fail = error_process(specs[rec.file_id], rec.attempts, int(count), rng)
                update_file_stats(rec, err, succ, fail, cfg)

        if (it + 1) % cfg.check_interval == 0:
            for rec in state.records.values():
                outcome = check_freeze(rec, cfg, it + 1)
                if outcome is not None:
                    kind = {STATE_FROZEN: "freeze", STATE_DROPPED: "drop"}[outcome]
                    trace.events.append(SimEvent(it + 1, kind, rec.file_id))

        if (it + 1) % sim.eval_interval == 0:
            lv = state.current_level
            lv_errors = [r.ema_error for r in state.records.values() if r.level == lv]
            if lv_errors:
                state.level_eval_history[lv].append(float(np.mean(lv_errors)))
            iters_on_level = (it + 1) - state.level_unlock_iter[lv]
            if lv < MAX_TRAINABLE_LEVEL and promotion_check(
                state.level_eval_history[lv], iters_on_level, cfg
            ):
                state.current_level = lv + 1
                state.level_unlock_iter[lv + 1] = it + 1
                trace.events.append(SimEvent(it + 1, "promote", f"level:{lv + 1}"))

        if (it + 1) % sim.trace_interval == 0:
            active = state.active_records(it)
            mass: dict[int, float] = {}
            if active:
                probs = sampling_distribution(active, cfg, it)
                probs = apply_level_quota(probs, [r.level for r in active], cfg.level_mass_floor)
                for rec, p in zip(active, probs):
                    mass[rec.level] = mass.get(rec.level, 0.0) + float(p)
            trace.rows.append(TraceRow(it + 1, state.current_level, len(active), mass))

    trace.final_level = state.current_level
    return trace
