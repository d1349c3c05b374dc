"""Generation-side kernels: TP-MoE mixing, diffusion sampling, ASFO.

TP-MoE blends experts in *parameter* space, one mixed expert per text
token: the gate maps a token embedding to a softmax over K experts, every
parameter tensor is averaged under those weights, and the mixed expert's
output is gated along the motion timeline by a spatial mask derived from
cross-attention (sharpness gamma, threshold ratio beta against each token's
column maximum).  The per-token contributions sum into a residual update.

Diffusion uses ancestral sampling with a clean-sample parameterization: the
pluggable denoiser predicts the clean window from a noisy one, and the
posterior step mixes that prediction with the current iterate.  The final
step has zero posterior variance, so a denoiser that returns a fixed target
reproduces it exactly.  A prefix constraint is re-imposed at every step by
overwriting the prefix rows with a re-noised copy of the known frames
(inpainting-style anchoring); the finished sample carries the prefix
bit-exactly.  Classifier-free guidance is the affine rule
base + s * (cond - base), where base is the unconditional prediction or a
negative-prompt prediction.

ASFO (frequency-aware oversampling) duplicates rare-tag samples: each tag's
multiplier is its frequency deficit against the median tag frequency,
rounded and capped; a sample takes the max multiplier over its tags and is
mirrored with probability min(alpha * (r - 1), 1), so frequent samples are
never mirrored and scarce ones almost always are.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import median
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, DimensionMismatchError

TOKEN_DIM = 768
MODEL_DIM = 512
FFN_HIDDEN = 1024
NUM_EXPERTS = 12
MASK_SHARPNESS = 24.0
MASK_THRESHOLD = 0.25
BALANCE_WEIGHT = 0.01
GUIDANCE_SCALE = 2.5

# Denoiser plug-in contract, version 1:
#   denoiser(noisy_window: (T, D) float array, step: int in [1, num_steps],
#            condition: object) -> predicted clean window, shape (T, D).
Denoiser = Callable[[np.ndarray, int, object], np.ndarray]


def gelu(x: np.ndarray) -> np.ndarray:
    # tanh approximation
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def silu(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / (1.0 + np.exp(-x))


# FFN expert parameters: ((w1, b1), (w2, b2)) with GELU between the layers.
FFNParams = tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def ffn_apply(params: FFNParams, x: np.ndarray) -> np.ndarray:
    (w1, b1), (w2, b2) = params
    return gelu(np.asarray(x, dtype=np.float64) @ w1.T + b1) @ w2.T + b2


@dataclass
class TPMoEParams:
    """Expert pool, gate MLP, and mask constants for one TP-MoE block."""

    experts: list[FFNParams]
    gate_layers: list[tuple[np.ndarray, np.ndarray]]   # SiLU MLP, linear head
    mask_sharpness: float = MASK_SHARPNESS
    mask_threshold: float = MASK_THRESHOLD
    balance_weight: float = BALANCE_WEIGHT

    def __post_init__(self):
        if not self.experts:
            raise ConfigError("need at least one expert")
        if self.mask_sharpness <= 0 or not 0.0 < self.mask_threshold < 1.0:
            raise ConfigError("mask constants out of range")

    @property
    def num_experts(self) -> int:
        return len(self.experts)


def init_tpmoe(
    rng: np.random.Generator,
    token_dim: int = TOKEN_DIM,
    model_dim: int = MODEL_DIM,
    ffn_hidden: int = FFN_HIDDEN,
    num_experts: int = NUM_EXPERTS,
    gate_hidden: int | None = None,
    scale: float = 0.3,
) -> TPMoEParams:
    gate_hidden = model_dim if gate_hidden is None else gate_hidden
    experts = []
    for _ in range(num_experts):
        w1 = rng.normal(0.0, scale / np.sqrt(model_dim), (ffn_hidden, model_dim))
        w2 = rng.normal(0.0, scale / np.sqrt(ffn_hidden), (model_dim, ffn_hidden))
        experts.append(((w1, np.zeros(ffn_hidden)), (w2, np.zeros(model_dim))))
    dims = [token_dim, gate_hidden, gate_hidden, num_experts]
    gate_layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        gate_layers.append((rng.normal(0.0, scale / np.sqrt(d_in), (d_out, d_in)), np.zeros(d_out)))
    return TPMoEParams(experts=experts, gate_layers=gate_layers)


def tpmoe_gate(token_embedding: np.ndarray, params: TPMoEParams) -> np.ndarray:
    """Per-token expert weights: softmax over the gate MLP's K outputs."""
    x = np.asarray(token_embedding, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("token embedding must be finite")
    for i, (w, b) in enumerate(params.gate_layers):
        x = x @ w.T + b
        if i < len(params.gate_layers) - 1:
            x = silu(x)
    x = x - x.max()
    w = np.exp(x)
    return w / w.sum()


def mix_expert_params(weights: np.ndarray, params: TPMoEParams) -> FFNParams:
    """Blend every expert parameter tensor under the gate weights.

    With one-hot weights this returns the selected expert's tensors exactly;
    in general the mixed expert is *not* the output-space mixture because the
    FFN is nonlinear.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (params.num_experts,):
        raise DimensionMismatchError(
            f"expected {params.num_experts} weights, got {weights.shape}"
        )
    mixed = []
    for layer in range(2):
        w = sum(wt * params.experts[k][layer][0] for k, wt in enumerate(weights))
        b = sum(wt * params.experts[k][layer][1] for k, wt in enumerate(weights))
        mixed.append((w, b))
    return (mixed[0], mixed[1])


def spatial_mask(attention: np.ndarray, gamma: float = MASK_SHARPNESS,
                 beta: float = MASK_THRESHOLD) -> np.ndarray:
    """Sigmoid mask per (frame, token) against the token's attention peak."""
    a = np.asarray(attention, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("attention must be finite")
    col_max = a.max(axis=0, keepdims=True)
    return 1.0 / (1.0 + np.exp(-gamma * (a - beta * col_max)))


def tpmoe_apply(
    x: np.ndarray,
    token_embeddings: np.ndarray,
    attention: np.ndarray,
    params: TPMoEParams,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Token-wise mixed experts, masked and summed into a residual.

    x: (T, d) motion features; token_embeddings: (N, token_dim);
    attention: (T, N) cross-attention weights.
    Returns (delta, x + delta, routing_weights (N, K)).
    """
    x = np.asarray(x, dtype=np.float64)
    tokens = np.atleast_2d(np.asarray(token_embeddings, dtype=np.float64))
    attention = np.asarray(attention, dtype=np.float64)
    if attention.shape != (x.shape[0], tokens.shape[0]):
        raise DimensionMismatchError(
            f"attention must be (frames, tokens) = {(x.shape[0], tokens.shape[0])}, "
            f"got {attention.shape}"
        )
    mask = spatial_mask(attention, params.mask_sharpness, params.mask_threshold)
    delta = np.zeros_like(x)
    routing = np.zeros((tokens.shape[0], params.num_experts))
    for i in range(tokens.shape[0]):
        weights = tpmoe_gate(tokens[i], params)
        routing[i] = weights
        mixed = mix_expert_params(weights, params)
        delta += mask[:, i:i + 1] * ffn_apply(mixed, x)
    return delta, x + delta, routing


def generator_balance_loss(routing_means: np.ndarray) -> float:
    """K * sum_j (pbar_j - 1/K)^2; zero exactly at uniform usage."""
    p = np.asarray(routing_means, dtype=np.float64)
    k = p.shape[0]
    return float(k * np.sum((p - 1.0 / k) ** 2))


# ---------------------------------------------------------------------------
# Attention pooling of text tokens


@dataclass
class AttentionPoolParams:
    """Learnable-query multi-head pooling plus the memory projection."""

    query: np.ndarray          # (token_dim,)
    w_k: np.ndarray            # (token_dim, token_dim)
    w_v: np.ndarray
    w_o: np.ndarray
    w_mem: np.ndarray          # (model_dim, token_dim)
    num_heads: int = 4

    def __post_init__(self):
        d = self.query.shape[0]
        if d % self.num_heads != 0:
            raise ConfigError("token dim must divide evenly into heads")
        for name in ("w_k", "w_v", "w_o"):
            if getattr(self, name).shape != (d, d):
                raise ConfigError(f"{name} must be ({d}, {d})")


def init_attention_pool(
    rng: np.random.Generator,
    token_dim: int = TOKEN_DIM,
    model_dim: int = MODEL_DIM,
    num_heads: int = 4,
) -> AttentionPoolParams:
    s = 1.0 / np.sqrt(token_dim)
    return AttentionPoolParams(
        query=rng.normal(0.0, 1.0, token_dim),
        w_k=rng.normal(0.0, s, (token_dim, token_dim)),
        w_v=rng.normal(0.0, s, (token_dim, token_dim)),
        w_o=rng.normal(0.0, s, (token_dim, token_dim)),
        w_mem=rng.normal(0.0, s, (model_dim, token_dim)),
        num_heads=num_heads,
    )


def attention_pool_summary(
    tokens: np.ndarray, params: AttentionPoolParams
) -> tuple[np.ndarray, np.ndarray]:
    """Pool N token embeddings into one summary vector and build the memory.

    The learnable query attends over the tokens per head; the concatenated
    head contexts pass through the output projection.  The memory stacks the
    summary above the tokens and projects everything to the model dim,
    giving an (1 + N, model_dim) array.
    """
    tokens = np.atleast_2d(np.asarray(tokens, dtype=np.float64))
    if tokens.shape[0] < 1:
        raise DimensionMismatchError("need at least one token")
    d = params.query.shape[0]
    if tokens.shape[1] != d:
        raise DimensionMismatchError(f"tokens must have dim {d}")
    h = params.num_heads
    dh = d // h
    keys = tokens @ params.w_k.T          # (N, d)
    values = tokens @ params.w_v.T
    context = np.empty(d)
    for head in range(h):
        sl = slice(head * dh, (head + 1) * dh)
        scores = keys[:, sl] @ params.query[sl] / np.sqrt(dh)
        scores = scores - scores.max()
        alpha = np.exp(scores)
        alpha /= alpha.sum()
        context[sl] = alpha @ values[:, sl]
    summary = context @ params.w_o.T
    memory = np.vstack([summary, tokens]) @ params.w_mem.T
    return summary, memory


# ---------------------------------------------------------------------------
# Diffusion: loss, guidance, ancestral sampling with prefix anchoring


@dataclass(frozen=True)
class DiffusionSchedule:
    """Linear beta schedule; alpha_bar[0] = 1 so the last step is exact."""

    betas: np.ndarray
    guidance_scale: float = GUIDANCE_SCALE

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        object.__setattr__(self, "betas", betas)
        if betas.ndim != 1 or betas.shape[0] < 1:
            raise ConfigError("betas must be a non-empty vector")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ConfigError("betas must lie in (0, 1)")
        alphas = 1.0 - betas
        alpha_bar = np.concatenate([[1.0], np.cumprod(alphas)])
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @property
    def num_steps(self) -> int:
        return self.betas.shape[0]


def make_schedule(
    num_steps: int = 50,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
    guidance_scale: float = GUIDANCE_SCALE,
) -> DiffusionSchedule:
    betas = np.linspace(beta_start, beta_end, num_steps)
    return DiffusionSchedule(betas=betas, guidance_scale=guidance_scale)


def add_noise(
    clean: np.ndarray, step: int, schedule: DiffusionSchedule, rng: np.random.Generator
) -> np.ndarray:
    """Forward process: noise a clean window to diffusion step `step`."""
    ab = schedule.alpha_bar[step]
    noise = rng.standard_normal(np.shape(clean))
    return np.sqrt(ab) * np.asarray(clean) + np.sqrt(1.0 - ab) * noise


def diffusion_loss(
    clean_window: np.ndarray,
    noisy_window: np.ndarray,
    step: int,
    condition: object,
    denoiser: Denoiser,
) -> float:
    """Mean squared error between the clean window and the denoiser output."""
    clean = np.asarray(clean_window, dtype=np.float64)
    pred = np.asarray(denoiser(np.asarray(noisy_window, dtype=np.float64), step, condition))
    if pred.shape != clean.shape:
        raise DimensionMismatchError("denoiser changed the window shape")
    return float(np.mean((clean - pred) ** 2))


def cfg_combine(cond_pred: np.ndarray, uncond_pred: np.ndarray,
                scale: float = GUIDANCE_SCALE) -> np.ndarray:
    """Standard guidance: uncond + s * (cond - uncond), exact at s in {0, 1}."""
    cond_pred = np.asarray(cond_pred, dtype=np.float64)
    uncond_pred = np.asarray(uncond_pred, dtype=np.float64)
    if cond_pred.shape != uncond_pred.shape:
        raise DimensionMismatchError("guidance inputs must have equal shapes")
    if scale == 0.0:
        return uncond_pred.copy()
    if scale == 1.0:
        return cond_pred.copy()
    return uncond_pred + scale * (cond_pred - uncond_pred)


def cfg_negative(cond_pred: np.ndarray, neg_pred: np.ndarray,
                 scale: float = GUIDANCE_SCALE) -> np.ndarray:
    """Negative-prompt guidance: the negative encoding replaces the
    unconditional baseline, steering the sample away from it."""
    return cfg_combine(cond_pred, neg_pred, scale)


def ddpm_sample(
    schedule: DiffusionSchedule,
    denoiser: Denoiser,
    condition: object,
    shape: tuple[int, int],
    rng: np.random.Generator,
    prefix: np.ndarray | None = None,
) -> np.ndarray:
    """Ancestral sampling under the clean-sample parameterization.

    When `prefix` is given, its rows replace the head of the window at every
    step (re-noised to the step's level) and are copied verbatim into the
    result, so prefix frames are returned bit-exactly.
    """
    if prefix is not None:
        prefix = np.asarray(prefix, dtype=np.float64)
        if prefix.ndim != 2 or prefix.shape[0] > shape[0] or prefix.shape[1] != shape[1]:
            raise DimensionMismatchError("prefix must be leading rows of the window shape")
    x = rng.standard_normal(shape)
    for step in range(schedule.num_steps, 0, -1):
        pred = np.asarray(denoiser(x, step, condition), dtype=np.float64)
        if pred.shape != x.shape:
            raise DimensionMismatchError("denoiser changed the window shape")
        ab_t = schedule.alpha_bar[step]
        ab_prev = schedule.alpha_bar[step - 1]
        beta_t = schedule.betas[step - 1]
        alpha_t = schedule.alphas[step - 1]
        coef_clean = np.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
        coef_noisy = np.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
        x = coef_clean * pred + coef_noisy * x
        if step > 1:
            var = beta_t * (1.0 - ab_prev) / (1.0 - ab_t)
            x = x + np.sqrt(var) * rng.standard_normal(shape)
        if prefix is not None:
            noise = rng.standard_normal(prefix.shape)
            x[: prefix.shape[0]] = (
                np.sqrt(ab_prev) * prefix + np.sqrt(1.0 - ab_prev) * noise
            )
    if prefix is not None:
        x[: prefix.shape[0]] = prefix
    return x


def make_oracle_denoiser(target: np.ndarray) -> Denoiser:
    """Denoiser that always predicts a fixed clean window (ground truth)."""
    target = np.asarray(target, dtype=np.float64)

    def denoiser(noisy, step, condition):
        return np.broadcast_to(target, np.shape(noisy)).copy()

    return denoiser


def zero_denoiser(noisy, step, condition) -> np.ndarray:
    return np.zeros_like(np.asarray(noisy, dtype=np.float64))


# ---------------------------------------------------------------------------
# ASFO: frequency-aware oversampling with left-right mirroring


@dataclass
class TagCatalog:
    """Tag frequencies and per-sample tag sets driving the oversampler."""

    tag_counts: dict[str, int]
    sample_tags: dict[str, tuple[str, ...]]
    rho_max: int = 8
    mirror_alpha: float = 0.3

    def __post_init__(self):
        if self.rho_max < 1:
            raise ConfigError("rho_max must be >= 1")
        if any(c < 1 for c in self.tag_counts.values()):
            raise ConfigError("tag counts must be >= 1")

    @classmethod
    def from_samples(
        cls,
        sample_tags: Mapping[str, Sequence[str]],
        rho_max: int = 8,
        mirror_alpha: float = 0.3,
    ) -> "TagCatalog":
        counts: dict[str, int] = {}
        for tags in sample_tags.values():
            for tag in tags:
                counts[tag] = counts.get(tag, 0) + 1
        return cls(
            tag_counts=counts,
            sample_tags={k: tuple(v) for k, v in sample_tags.items()},
            rho_max=rho_max,
            mirror_alpha=mirror_alpha,
        )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def asfo_multipliers(catalog: TagCatalog) -> dict[str, int]:
    """Per-tag oversampling multiplier against the median tag frequency,
    rounded to the nearest integer and clamped to [1, rho_max]."""
    if not catalog.tag_counts:
        raise ConfigError("catalog has no tags")
    tau = median(catalog.tag_counts.values())
    return {
        tag: max(1, min(_round_half_up(tau / count), catalog.rho_max))
        for tag, count in catalog.tag_counts.items()
    }


def sample_multiplier(sample_id: str, catalog: TagCatalog) -> int:
    """Effective multiplier: max over the sample's tags; tagless samples get 1."""
    tags = catalog.sample_tags.get(sample_id, ())
    if not tags:
        return 1
    rho = asfo_multipliers(catalog)
    return max(rho[t] for t in tags)


def mirror_probability(multiplier: int, alpha: float = 0.3) -> float:
    """min(alpha * (r - 1), 1): never mirror frequent samples."""
    return float(min(max(alpha * (multiplier - 1), 0.0), 1.0))


def swap_side_tags(tags: Sequence[str]) -> tuple[str, ...]:
    """Swap the words 'left' and 'right' inside every tag."""
    out = []
    for tag in tags:
        words = [
            "right" if w == "left" else "left" if w == "right" else w
            for w in tag.split()
        ]
        out.append(" ".join(words))
    return tuple(out)


@dataclass(frozen=True)
class PlanEntry:
    sample_id: str
    mirrored: bool
    tags: tuple[str, ...]


def build_epoch_plan(catalog: TagCatalog, rng: np.random.Generator) -> list[PlanEntry]:
    """One training epoch: every sample appears multiplier-many times, each
    copy independently mirrored with its rarity-driven probability.  Samples
    iterate in sorted id order so a fixed seed fixes the plan."""
    rho = asfo_multipliers(catalog)
    plan: list[PlanEntry] = []
    for sample_id in sorted(catalog.sample_tags):
        tags = catalog.sample_tags[sample_id]
        r = max((rho[t] for t in tags), default=1)
        p_mir = mirror_probability(r, catalog.mirror_alpha)
        for _ in range(r):
            mirrored = bool(rng.uniform() < p_mir)
            plan.append(PlanEntry(
                sample_id=sample_id,
                mirrored=mirrored,
                tags=swap_side_tags(tags) if mirrored else tags,
            ))
    return plan
