"""Flow-matching objective and the Euler sampler with text-only guidance.

Training draws a flow time t ~ U[0,1], replaces the target segment's tokens
by the straight-line interpolant between standard normal noise and the clean
tokens, and supervises the model's velocity output against (clean - noise).
Inference integrates the learned velocity field with a fixed-step Euler
scheme; classifier-free guidance combines the velocity of the full sequence
with the velocity of the same sequence stripped of every text segment (all
vision context retained).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import CodecConfig, LatentGrid, VisionTokens, encode_tokens, unpatchify
from .errors import ConfigError, ContractError, InputError
from .model import ModelConfig, forward, loss_and_grad
from .optim import (
    AdamWState,
    OptimConfig,
    adamw_update,
    clip_gradients,
    global_grad_norm,
    lr_at,
)
from .packing import pack
from .seqlayout import (
    LayoutConfig,
    Segment,
    UnifiedSequence,
    assemble,
    embed_text,
    interleave_order,
)
from .synthdata import TaskSample


@dataclass
class FlowState:
    t: float
    x0: np.ndarray  # noise
    x1: np.ndarray  # clean target tokens
    xt: np.ndarray  # interpolant fed to the model
    vt: np.ndarray  # supervision target, x1 - x0


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 50
    cfg_scale: float = 5.0
    text_dropout: float = 0.1

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"sampler needs >= 1 timesteps, got {self.steps}")
        if self.cfg_scale < 0:
            raise ConfigError("cfg_scale must be >= 0")
        if not 0.0 <= self.text_dropout < 1.0:
            raise ConfigError("text_dropout must lie in [0, 1)")


def make_flow_state(x1: np.ndarray, rng: np.random.Generator, t: float) -> FlowState:
    """Interpolant and velocity target for one clean tensor; x0 ~ N(0, 1)."""
    if not 0.0 <= t <= 1.0:
        raise InputError(f"flow time t must lie in [0, 1], got {t}")
    dtype = x1.dtype if x1.dtype in (np.float32, np.float64) else np.float64
    x0 = rng.standard_normal(x1.shape, dtype=dtype)
    xt = t * x1 + (1.0 - t) * x0
    return FlowState(t=float(t), x0=x0, x1=x1, xt=xt, vt=x1 - x0)


@dataclass
class PreparedSegment:
    modality: str
    role: str
    ids: list[int] | None = None
    vision: VisionTokens | None = None


@dataclass
class PreparedExample:
    """A task sample with vision already run through the codec."""

    segments: list[PreparedSegment]
    target_index: int | None
    sample: TaskSample | None = None

    def sequence_length(self, drop_text: bool = False) -> int:
        n = 0
        for seg in self.segments:
            if seg.modality == "text":
                n += 0 if drop_text else len(seg.ids)
            else:
                n += seg.vision.tokens.shape[0] + 2
        return n

    def vision_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.segments) if s.modality != "text"]


def prepare_example(sample: TaskSample, codec_cfg: CodecConfig) -> PreparedExample:
    segments = []
    for seg in sample.segments:
        if seg.modality == "text":
            segments.append(PreparedSegment(modality="text", role=seg.role, ids=list(seg.text_ids)))
        else:
            segments.append(PreparedSegment(
                modality=seg.modality, role=seg.role,
                vision=encode_tokens(seg.pixels, codec_cfg)))
    return PreparedExample(segments=segments, target_index=sample.target_index, sample=sample)


def build_sequence(example: PreparedExample, params, layout: LayoutConfig,
                   target_index: int | None = None,
                   target_payload: np.ndarray | None = None,
                   flow: FlowState | None = None,
                   t: float | None = None,
                   drop_text: bool = False) -> UnifiedSequence:
    """Assemble one example into a unified sequence with current parameters.

    The segment at `target_index` takes role "target" and, when given, the
    replacement payload (the flow interpolant during training, the current
    sampler state during inference).
    """
    target_index = example.target_index if target_index is None else target_index
    segs: list[Segment] = []
    kept_target = None
    for i, ps in enumerate(example.segments):
        if ps.modality == "text":
            if drop_text:
                continue
            segs.append(Segment(modality="text", role="context",
                                payload=embed_text(ps.ids, params)))
        else:
            role = "target" if i == target_index else "context"
            payload = ps.vision
            if role == "target" and target_payload is not None:
                payload = VisionTokens(tokens=target_payload, grid=ps.vision.grid)
            seg = Segment(modality=ps.modality, role=role, payload=payload)
            segs.append(seg)
            if role == "target":
                kept_target = seg
    if target_index is not None and kept_target is None:
        raise ContractError(f"target index {target_index} is not a vision segment")
    seq = assemble(interleave_order(segs, layout.interleave), params, layout)
    seq.flow = flow
    seq.t = t
    return seq


def make_training_sequence(example: PreparedExample, params, layout: LayoutConfig,
                           sampler_cfg: SamplerConfig, rng: np.random.Generator) -> UnifiedSequence:
    """Noise one example for training.

    Draw order (fixed for reproducibility): target choice (only when the
    example does not fix one), flow time t, text-dropout coin, noise x0.
    """
    vision = example.vision_indices()
    if not vision:
        raise InputError("example has no vision segment to use as a target")
    if example.target_index is None:
        target_index = vision[int(rng.integers(len(vision)))]
    else:
        target_index = example.target_index
    t = float(rng.random())
    drop_text = bool(rng.random() < sampler_cfg.text_dropout)
    x1 = example.segments[target_index].vision.tokens
    flow = make_flow_state(x1, rng, t)
    return build_sequence(example, params, layout, target_index=target_index,
                          target_payload=flow.xt, flow=flow, t=t, drop_text=drop_text)


@dataclass
class TrainState:
    params: dict[str, np.ndarray]
    opt: AdamWState
    step: int = 0  # completed optimizer steps


def step_on_sequences(seqs: list[UnifiedSequence], state: TrainState,
                      model_cfg: ModelConfig, optim_cfg: OptimConfig,
                      token_budget: int) -> tuple[float, float, float]:
    """One optimizer step over already-noised sequences; (loss, lr, grad_norm)."""
    batches = pack(seqs, token_budget)
    total_docs = sum(len(b.docs) for b in batches)
    loss_sum = 0.0
    grads_sum: dict[str, np.ndarray] | None = None
    for batch in batches:
        loss, grads = loss_and_grad(batch, state.params, model_cfg)
        w = len(batch.docs) / total_docs
        loss_sum += w * loss
        if grads_sum is None:
            grads_sum = {k: w * g for k, g in grads.items()}
        else:
            for k in grads_sum:
                grads_sum[k] += w * grads[k]
    lr = lr_at(state.step, optim_cfg)
    if state.step >= optim_cfg.warmup_steps:
        grad_norm = clip_gradients(grads_sum, optim_cfg.clip_norm)
    else:
        grad_norm = global_grad_norm(grads_sum)  # clipping disabled during warmup
    adamw_update(state.params, grads_sum, state.opt, lr, optim_cfg)
    state.step += 1
    return loss_sum, lr, grad_norm


def training_batch_step(examples: list[PreparedExample], state: TrainState,
                        rng: np.random.Generator, model_cfg: ModelConfig,
                        layout: LayoutConfig, sampler_cfg: SamplerConfig,
                        optim_cfg: OptimConfig, token_budget: int) -> tuple[float, float, float]:
    """One optimizer step over a packed batch; returns (loss, lr, grad_norm)."""
    seqs = [make_training_sequence(ex, state.params, layout, sampler_cfg, rng)
            for ex in examples]
    return step_on_sequences(seqs, state, model_cfg, optim_cfg, token_budget)


def training_step(example: PreparedExample, state: TrainState, rng: np.random.Generator,
                  model_cfg: ModelConfig, layout: LayoutConfig, sampler_cfg: SamplerConfig,
                  optim_cfg: OptimConfig) -> tuple[float, float, float]:
    """Single-example training step (batch of one document)."""
    budget = example.sequence_length()
    return training_batch_step([example], state, rng, model_cfg, layout,
                               sampler_cfg, optim_cfg, budget)


def guided_velocity(v_uncond: np.ndarray, v_cond: np.ndarray, cfg_scale: float) -> np.ndarray:
    """v_uncond + w * (v_cond - v_uncond), computed so w = 1 is exactly v_cond."""
    return (1.0 - cfg_scale) * v_uncond + cfg_scale * v_cond


def euler_integrate(velocity_fn, x0: np.ndarray, n_steps: int) -> np.ndarray:
    """Euler steps over the uniform grid t_k = k / N, k = 0 .. N-1."""
    if n_steps < 1:
        raise ConfigError(f"euler integration needs >= 1 steps, got {n_steps}")
    x = x0
    dt = 1.0 / n_steps
    for k in range(n_steps):
        x = x + dt * velocity_fn(x, k / n_steps)
    return x


def sample(example: PreparedExample, params, model_cfg: ModelConfig,
           codec_cfg: CodecConfig, layout: LayoutConfig,
           sampler_cfg: SamplerConfig, rng: np.random.Generator) -> LatentGrid:
    """Generate the target segment of `example` from noise; returns its latent grid.

    The context segments (and the instruction text, in the conditional branch)
    are kept verbatim; only the target payload evolves along the ODE.
    """
    target_index = example.target_index
    if target_index is None or example.segments[target_index].modality == "text":
        raise InputError("sampling requires a vision target segment")
    target = example.segments[target_index].vision
    x0 = rng.standard_normal(target.tokens.shape, dtype=np.float32)

    has_text = any(s.modality == "text" for s in example.segments)

    def velocity(x, t):
        seq_c = build_sequence(example, params, layout, target_payload=x, t=t)
        batch_c = pack([seq_c], seq_c.length)[0]
        out_c = forward(batch_c, params, model_cfg)
        lo, hi = batch_c.docs[0].target_span
        v_cond = out_c.velocities[lo:hi]
        if not has_text:
            return v_cond
        seq_u = build_sequence(example, params, layout, target_payload=x, t=t,
                               drop_text=True)
        batch_u = pack([seq_u], seq_u.length)[0]
        out_u = forward(batch_u, params, model_cfg)
        lo_u, hi_u = batch_u.docs[0].target_span
        v_uncond = out_u.velocities[lo_u:hi_u]
        return guided_velocity(v_uncond, v_cond, sampler_cfg.cfg_scale)

    x1 = euler_integrate(velocity, x0, sampler_cfg.steps)
    return unpatchify(VisionTokens(tokens=x1, grid=target.grid))
