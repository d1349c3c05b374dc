"""MoE actor routing: gate, low-frequency soft top-k, losses, expert growth.

The gate linearly maps a 128-dim look-ahead latent to one logit per expert.
Routing is low frequency: every `refresh_period` steps the candidate set is
re-selected as the top-k logits (ties break toward the lower index); between
refreshes only the mixture weights move.  The action is the convex
combination of the k candidate experts' outputs under a temperature softmax,
so each step costs exactly k expert forwards.

Stage I trains level to level: routing is restricted to the unlocked
experts, samples from the hardest unlocked level bypass the gate with
probability 0.8 and hard-route to that level's expert, and each promotion
clones the preceding expert's parameters.  Stage II drops those constraints
and relies on a load-balancing objective; persistently hard files (high
routing entropy, small top-1/top-2 gap) can trigger dynamic expert addition
with a cold-start cap on the new expert's routing mass.

Losses here are evaluated values for tests and external trainers; no
gradients are computed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionMismatchError

LATENT_DIM = 128
DEFAULT_EXPERT_HIDDEN = (2048, 1024, 512)
RHO_HARD = 0.8

# Parameters of one MLP: list of (weight (out, in), bias (out,)) pairs,
# ELU on every hidden layer, linear head.
MLPParams = list[tuple[np.ndarray, np.ndarray]]


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))


def mlp_forward(params: MLPParams, x: np.ndarray) -> np.ndarray:
    """Evaluate an ELU MLP; broadcasts over leading axes of x."""
    x = np.asarray(x, dtype=np.float64)
    for i, (w, b) in enumerate(params):
        if x.shape[-1] != w.shape[1]:
            raise DimensionMismatchError(
                f"layer {i}: input dim {x.shape[-1]} != weight columns {w.shape[1]}"
            )
        x = x @ w.T + b
        if i < len(params) - 1:
            x = elu(x)
    return x


def init_mlp(
    rng: np.random.Generator,
    input_dim: int,
    hidden: tuple[int, ...],
    output_dim: int,
    scale: float = 0.2,
) -> MLPParams:
    params: MLPParams = []
    dims = [input_dim, *hidden, output_dim]
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        w = rng.normal(0.0, scale / np.sqrt(d_in), (d_out, d_in))
        b = np.zeros(d_out)
        params.append((w, b))
    return params


def clone_mlp(params: MLPParams) -> MLPParams:
    return [(w.copy(), b.copy()) for w, b in params]


@dataclass
class ExpertPool:
    """Ordered expert parameter sets plus per-expert training metadata."""

    experts: list[MLPParams]
    input_dim: int
    output_dim: int
    hidden: tuple[int, ...]
    capacity: int = 16
    unlocked_count: int = 1
    lr_multipliers: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.experts:
            raise ConfigError("expert pool needs at least one expert")
        if len(self.experts) > self.capacity:
            raise ConfigError("more experts than capacity")
        self.unlocked_count = min(self.unlocked_count, len(self.experts))
        if not self.lr_multipliers:
            self.lr_multipliers = [1.0] * len(self.experts)

    @property
    def num_experts(self) -> int:
        return len(self.experts)

    def forward(self, index: int, obs: np.ndarray) -> np.ndarray:
        return mlp_forward(self.experts[index], obs)


@dataclass(frozen=True)
class RouterConfig:
    top_k: int = 2
    refresh_period: int = 10
    temperature: float = 1.0
    ema_enabled: bool = True
    ema_coeff: float = 0.9            # weight on the newest logits; 1.0 = raw
    ce_weight: float = 0.05
    rho_hard: float = RHO_HARD
    cold_start_cap: float = 0.1
    cold_start_steps: int = 2000
    new_expert_lr_multiplier: float = 2.0
    old_expert_lr_multiplier: float = 0.5

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if not 0.0 <= self.ema_coeff <= 1.0:
            raise ConfigError("ema_coeff must lie in [0, 1]")
        if not 0.0 < self.cold_start_cap <= 1.0:
            raise ConfigError("cold_start_cap must lie in (0, 1]")


@dataclass
class RouterState:
    """Gate parameters and the mutable routing state between refreshes."""

    gate_w: np.ndarray                  # (capacity, latent_dim)
    gate_b: np.ndarray                  # (capacity,)
    config: RouterConfig = field(default_factory=RouterConfig)
    candidates: list[int] = field(default_factory=list)
    steps_since_refresh: int = 0
    logits_ema: np.ndarray | None = None
    cold_expert: int | None = None
    cold_steps_remaining: int = 0

    def __post_init__(self):
        self.gate_w = np.asarray(self.gate_w, dtype=np.float64)
        self.gate_b = np.asarray(self.gate_b, dtype=np.float64)
        if self.gate_w.ndim != 2 or self.gate_b.shape != (self.gate_w.shape[0],):
            raise ConfigError("gate_w must be (experts, latent) with matching gate_b")


def make_router(
    rng: np.random.Generator,
    capacity: int,
    latent_dim: int = LATENT_DIM,
    config: RouterConfig | None = None,
    zero_gate: bool = False,
) -> RouterState:
    if zero_gate:
        w = np.zeros((capacity, latent_dim))
    else:
        w = rng.normal(0.0, 0.1, (capacity, latent_dim))
    return RouterState(gate_w=w, gate_b=np.zeros(capacity), config=config or RouterConfig())


def make_random_pool(
    rng: np.random.Generator,
    num_experts: int,
    input_dim: int,
    hidden: tuple[int, ...],
    output_dim: int,
    capacity: int = 16,
    unlocked_count: int | None = None,
) -> ExpertPool:
    experts = [init_mlp(rng, input_dim, hidden, output_dim) for _ in range(num_experts)]
    return ExpertPool(
        experts=experts,
        input_dim=input_dim,
        output_dim=output_dim,
        hidden=tuple(hidden),
        capacity=capacity,
        unlocked_count=num_experts if unlocked_count is None else unlocked_count,
    )


def gate_logits(z: np.ndarray, state: RouterState, pool: ExpertPool) -> np.ndarray:
    """Routing logits for the unlocked experts; locked experts get -inf.

    When EMA smoothing is enabled the raw logits are blended with the stored
    smoothed logits (coefficient on the new value), without mutating state;
    `refresh_candidates` commits the blend.
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("latent must be finite")
    raw = state.gate_w[: pool.num_experts] @ z + state.gate_b[: pool.num_experts]
    cfg = state.config
    smoothed = raw
    if cfg.ema_enabled and state.logits_ema is not None and cfg.ema_coeff < 1.0:
        prev = state.logits_ema
        if prev.shape[0] < raw.shape[0]:    # pool grew since the last step
            prev = np.concatenate([prev, raw[prev.shape[0]:]])
        # freshly unlocked experts have -inf history: seed them with raw
        prev = np.where(np.isfinite(prev), prev, raw)
        smoothed = cfg.ema_coeff * raw + (1.0 - cfg.ema_coeff) * prev
    logits = np.full(pool.num_experts, -np.inf)
    logits[: pool.unlocked_count] = smoothed[: pool.unlocked_count]
    return logits


def top_k_indices(logits: np.ndarray, k: int) -> list[int]:
    """Indices of the k largest finite logits; ties break to the lower index."""
    finite = [i for i in range(len(logits)) if np.isfinite(logits[i])]
    ordered = sorted(finite, key=lambda i: (-logits[i], i))
    return sorted(ordered[: min(k, len(ordered))])


def refresh_candidates(state: RouterState, logits: np.ndarray) -> RouterState:
    """Per-step routing update: commit smoothed logits, advance counters, and
    re-select the candidate set when the refresh period has elapsed."""
    state.logits_ema = np.asarray(logits, dtype=np.float64).copy()
    if state.cold_expert is not None:
        if state.cold_steps_remaining <= 0:
            state.cold_expert = None
        else:
            state.cold_steps_remaining -= 1
    if not state.candidates or state.steps_since_refresh >= state.config.refresh_period:
        state.candidates = top_k_indices(logits, state.config.top_k)
        state.steps_since_refresh = 1
    else:
        state.steps_since_refresh += 1
    return state


def candidate_weights(state: RouterState, pool: ExpertPool) -> np.ndarray:
    """Mixture weights over the full expert list, supported on the candidates.

    Softmax at the configured temperature over the candidate logits; while a
    newly added expert is cold its weight is clamped to the cold-start cap
    and the excess is shared by the other candidates.
    """
    if state.logits_ema is None or not state.candidates:
        raise ConfigError("router has not been stepped yet")
    cand = [c for c in state.candidates if c < pool.unlocked_count]
    if not cand:
        raise ConfigError("no unlocked candidates")
    logits = state.logits_ema[cand] / state.config.temperature
    logits = logits - logits.max()
    p = np.exp(logits)
    p /= p.sum()
    weights = np.zeros(pool.num_experts)
    weights[cand] = p
    cold = state.cold_expert
    if cold is not None and cold in cand and len(cand) > 1:
        cap = state.config.cold_start_cap
        if weights[cold] > cap:
            others = [c for c in cand if c != cold]
            scale = (1.0 - cap) / (1.0 - weights[cold])
            weights[others] *= scale
            weights[cold] = cap
    return weights


def mixture_action(
    obs: np.ndarray, state: RouterState, pool: ExpertPool
) -> tuple[np.ndarray, np.ndarray]:
    """Convex mixture of the candidate experts' outputs: k forwards exactly."""
    weights = candidate_weights(state, pool)
    action = None
    for j in np.flatnonzero(weights):
        out = pool.forward(int(j), obs) * weights[j]
        action = out if action is None else action + out
    return action, weights


def hard_bias_route(
    obs: np.ndarray,
    file_level: int,
    l_max: int,
    rng: np.random.Generator,
    state: RouterState,
    pool: ExpertPool,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Stage-I routing: hardest-level samples bypass the gate with
    probability rho_hard and use that level's expert directly.

    Returns (action, weights, hard_routed); the weight vector is one-hot on
    the bypass path.
    """
    if file_level == l_max and rng.uniform() < state.config.rho_hard:
        expert = l_max - 1      # level l is served by expert index l - 1
        weights = np.zeros(pool.num_experts)
        weights[expert] = 1.0
        return pool.forward(expert, obs), weights, True
    action, weights = mixture_action(obs, state, pool)
    return action, weights, False


def route_ce_loss(logits: np.ndarray, file_level: int, ce_weight: float = 0.05) -> float:
    """Weighted cross entropy aligning routing with the file's level."""
    logits = np.asarray(logits, dtype=np.float64)
    label = file_level - 1
    if not 0 <= label < len(logits) or not np.isfinite(logits[label]):
        raise ConfigError(f"file level {file_level} exceeds the unlocked experts")
    finite = logits[np.isfinite(logits)]
    m = finite.max()
    log_z = m + np.log(np.sum(np.exp(finite - m)))
    return float(ce_weight * (log_z - logits[label]))


def load_balance_loss(weight_history: np.ndarray) -> float:
    """K * sum_j f_j * pbar_j over a routing history (S, K).

    f_j is the empirical top-1 fraction and pbar_j the mean routing mass of
    expert j; uniform routing scores 1, total collapse scores K.
    """
    weights = np.asarray(weight_history, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[0] == 0:
        raise ConfigError("weight history must be a non-empty (S, K) array")
    k = weights.shape[1]
    top1 = np.argmax(weights, axis=1)
    f = np.bincount(top1, minlength=k) / weights.shape[0]
    p_bar = weights.mean(axis=0)
    return float(k * np.sum(f * p_bar))


def routing_entropy(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=np.float64)
    nz = w[w > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def top_gap(weights: np.ndarray) -> float:
    w = np.sort(np.asarray(weights, dtype=np.float64))[::-1]
    if len(w) < 2:
        return float(w[0])
    return float(w[0] - w[1])


@dataclass(frozen=True)
class AddExpertConfig:
    hard_file_fraction: float = 0.10
    entropy_ratio: float = 0.9      # hard if H > ratio * log(unlocked)
    gap_threshold: float = 0.05     # and top-1/top-2 gap below this
    required_windows: int = 1
    ema_coeff: float = 0.1          # weight on the newest sample


@dataclass
class RoutingDiagnostics:
    """Per-file EMAs of routing entropy and top-gap, plus window bookkeeping."""

    config: AddExpertConfig = field(default_factory=AddExpertConfig)
    entropy_ema: dict[str, float] = field(default_factory=dict)
    gap_ema: dict[str, float] = field(default_factory=dict)
    consecutive_hard_windows: int = 0

    def update(self, file_id: str, weights: np.ndarray) -> None:
        h = routing_entropy(weights)
        g = top_gap(weights)
        a = self.config.ema_coeff
        if file_id in self.entropy_ema:
            self.entropy_ema[file_id] = (1 - a) * self.entropy_ema[file_id] + a * h
            self.gap_ema[file_id] = (1 - a) * self.gap_ema[file_id] + a * g
        else:
            self.entropy_ema[file_id] = h
            self.gap_ema[file_id] = g

    def hard_fraction(self, num_unlocked: int) -> float:
        if not self.entropy_ema or num_unlocked < 2:
            return 0.0
        h_limit = self.config.entropy_ratio * np.log(num_unlocked)
        hard = [
            fid
            for fid in self.entropy_ema
            if self.entropy_ema[fid] > h_limit and self.gap_ema[fid] < self.config.gap_threshold
        ]
        return len(hard) / len(self.entropy_ema)

    def close_window(self, num_unlocked: int) -> float:
        """End one observation window; returns the hard-file fraction."""
        fraction = self.hard_fraction(num_unlocked)
        if fraction >= self.config.hard_file_fraction:
            self.consecutive_hard_windows += 1
        else:
            self.consecutive_hard_windows = 0
        return fraction


def update_diagnostics(diag: RoutingDiagnostics, file_id: str, weights: np.ndarray) -> RoutingDiagnostics:
    diag.update(file_id, weights)
    return diag


def should_add_expert(diag: RoutingDiagnostics) -> bool:
    """True when enough files stayed persistently hard for the full window."""
    return diag.consecutive_hard_windows >= diag.config.required_windows


def unlock_next_expert(pool: ExpertPool) -> int:
    """Stage-I promotion: clone the newest unlocked expert and unlock it."""
    if pool.num_experts >= pool.capacity:
        raise ConfigError("expert pool is at capacity")
    source = pool.unlocked_count - 1
    pool.experts.append(clone_mlp(pool.experts[source]))
    pool.lr_multipliers.append(1.0)
    pool.unlocked_count += 1
    return pool.num_experts - 1


def add_expert(
    pool: ExpertPool,
    state: RouterState,
    source_index: int | None = None,
) -> int:
    """Stage-II dynamic addition: clone a source expert, cap its routing mass
    for the cold-start budget, and bias learning rates toward it."""
    if pool.num_experts >= pool.capacity:
        raise ConfigError("expert pool is at capacity")
    cfg = state.config
    source = pool.num_experts - 1 if source_index is None else source_index
    pool.experts.append(clone_mlp(pool.experts[source]))
    pool.lr_multipliers = [cfg.old_expert_lr_multiplier * m for m in pool.lr_multipliers]
    pool.lr_multipliers.append(cfg.new_expert_lr_multiplier)
    pool.unlocked_count += 1
    new_index = pool.num_experts - 1
    state.cold_expert = new_index
    state.cold_steps_remaining = cfg.cold_start_steps
    return new_index


# ---------------------------------------------------------------------------
# Serialization (expert pools and router state as JSON-ready dicts)


def mlp_to_dict(params: MLPParams) -> dict:
    return {
        "layers": [
            {"shape": list(w.shape), "w": w.ravel().tolist(), "b": b.tolist()}
            for w, b in params
        ]
    }


def mlp_from_dict(data: dict) -> MLPParams:
    params: MLPParams = []
    for layer in data["layers"]:
        shape = tuple(layer["shape"])
        w = np.asarray(layer["w"], dtype=np.float64).reshape(shape)
        b = np.asarray(layer["b"], dtype=np.float64)
        params.append((w, b))
    return params


def pool_to_dict(pool: ExpertPool) -> dict:
    return {
        "input_dim": pool.input_dim,
        "output_dim": pool.output_dim,
        "hidden": list(pool.hidden),
        "capacity": pool.capacity,
        "unlocked_count": pool.unlocked_count,
        "lr_multipliers": pool.lr_multipliers,
        "experts": [mlp_to_dict(e) for e in pool.experts],
    }


def pool_from_dict(data: dict) -> ExpertPool:
    return ExpertPool(
        experts=[mlp_from_dict(e) for e in data["experts"]],
        input_dim=int(data["input_dim"]),
        output_dim=int(data["output_dim"]),
        hidden=tuple(data["hidden"]),
        capacity=int(data["capacity"]),
        unlocked_count=int(data["unlocked_count"]),
        lr_multipliers=[float(x) for x in data["lr_multipliers"]],
    )
