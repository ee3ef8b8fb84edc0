import numpy as np
import pytest

from mixdit.codec import CodecConfig, encode_tokens
from mixdit.flow import FlowState, PreparedExample, PreparedSegment, build_sequence
from mixdit.model import ModelConfig, init
from mixdit.packing import pack
from mixdit.rope import RopeConfig
from mixdit.seqlayout import LayoutConfig

CODEC = CodecConfig(r_t=1, r_h=2, r_w=2)


def small_model_cfg(**kw) -> ModelConfig:
    base = dict(
        hidden=32, layers=2, heads=2, head_dim=16, mlp_ratio=2,
        vocab_size=40, text_width=8, vision_width=48,
        rope=RopeConfig(d_h=6, d_w=6, d_s=2, d_tau=2), seed=0,
    )
    base.update(kw)
    return ModelConfig(**base)


def perturbed_params(cfg: ModelConfig, rng=None, dtype=np.float32, scale=0.05):
    """Init params nudged off the zero-init blocks so signals flow everywhere."""
    rng = rng or np.random.default_rng(9)
    params = init(cfg, dtype=dtype)
    for p in params.values():
        p += np.asarray(scale * rng.standard_normal(p.shape), dtype=dtype)
    return params


def vision_segment(rng, shape, role, dtype=np.float32):
    pixels = rng.random(shape).astype(dtype)
    return PreparedSegment(
        modality="video" if shape[0] > 1 else "image",
        role=role,
        vision=encode_tokens(pixels, CODEC),
    )


def text_segment(ids):
    return PreparedSegment(modality="text", role="context", ids=list(ids))


def random_example(rng, dtype=np.float32, video_frames=2) -> PreparedExample:
    """text + optional context vision + vision target, with random extents."""
    segs = [text_segment(rng.integers(0, 16, size=int(rng.integers(1, 5))))]
    if rng.random() < 0.6:
        shape = (1, 4, 4, 3) if rng.random() < 0.5 else (video_frames, 4, 4, 3)
        segs.append(vision_segment(rng, shape, "context", dtype))
    tgt_shape = (1, 4, 4, 3) if rng.random() < 0.5 else (video_frames, 4, 4, 3)
    segs.append(vision_segment(rng, tgt_shape, "target", dtype))
    return PreparedExample(segments=segs, target_index=len(segs) - 1)


def noised_sequence(example, params, layout=None, t=0.5, seed=5):
    layout = layout or LayoutConfig()
    rng = np.random.default_rng(seed)
    x1 = example.segments[example.target_index].vision.tokens
    x0 = rng.standard_normal(x1.shape).astype(x1.dtype)
    flow = FlowState(t=t, x0=x0, x1=x1, xt=t * x1 + (1 - t) * x0, vt=x1 - x0)
    return build_sequence(example, params, layout, target_payload=flow.xt,
                          flow=flow, t=t)


def single_batch(seqs):
    return pack(seqs, sum(s.length for s in seqs))[0]
