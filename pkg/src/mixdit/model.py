"""Dense transformer over packed unified sequences, with exact gradients.

Pre-norm residual blocks (RMS norm, multi-head attention with the 4-axis
rotary embedding, gated-SiLU MLP), timestep conditioning through per-block
scale/shift modulation of the normalized activations, and a zero-initialized
linear head emitting per-token velocities. The backward pass is written by
hand so every parameter block has an exact analytic gradient, verified
against central finite differences.

Attention is evaluated block-by-block over the packed documents, which makes
the packing-isolation property structural rather than mask-enforced.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rope as rope_mod
from .errors import CheckpointError, ConfigError, ContractError, InputError
from .packing import PackedBatch, doc_loss_weights
from .rope import RopeConfig

EPS_NORM = 1e-6
TIME_SCALE = 1000.0  # flow time in [0,1] is stretched before the sinusoid


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 128
    layers: int = 4
    heads: int = 4
    head_dim: int = 32
    mlp_ratio: int = 4
    vocab_size: int = 128
    text_width: int = 64
    vision_width: int = 48
    rope: RopeConfig = field(default_factory=RopeConfig)
    seed: int = 0
    final_norm: bool = False  # velocity is scale-linear in the input; a final
    # RMS norm is scale-invariant per row and measurably slows convergence

    def __post_init__(self):
        if min(self.hidden, self.layers, self.heads, self.head_dim,
               self.mlp_ratio, self.vocab_size, self.text_width, self.vision_width) < 1:
            raise ConfigError("all model dimensions must be >= 1")
        if self.heads * self.head_dim != self.hidden:
            raise ConfigError(
                f"heads * head_dim = {self.heads * self.head_dim} != hidden {self.hidden}"
            )
        if self.rope.head_dim != self.head_dim:
            raise ConfigError(
                f"rope dims sum to {self.rope.head_dim}, head_dim is {self.head_dim}"
            )
        if self.hidden % 2 != 0:
            raise ConfigError("hidden must be even (sinusoidal time embedding)")

    @property
    def mlp_width(self) -> int:
        return self.mlp_ratio * self.hidden


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Stable name -> shape map; the checkpoint block order follows it."""
    c, m = cfg.hidden, cfg.mlp_width
    shapes: dict[str, tuple[int, ...]] = {
        "embed.table": (cfg.vocab_size, cfg.text_width),
        "proj.text.w": (cfg.text_width, c),
        "proj.text.b": (c,),
        "proj.vision.w": (cfg.vision_width, c),
        "proj.vision.b": (c,),
        "boundary.start": (c,),
        "boundary.end": (c,),
        "time.w1": (c, c),
        "time.b1": (c,),
        "time.w2": (c, c),
        "time.b2": (c,),
    }
    for i in range(cfg.layers):
        p = f"layers.{i}."
        shapes[p + "attn.norm"] = (c,)
        shapes[p + "attn.mod.w"] = (c, 2 * c)
        shapes[p + "attn.mod.b"] = (2 * c,)
        shapes[p + "attn.wq"] = (c, c)
        shapes[p + "attn.wk"] = (c, c)
        shapes[p + "attn.wv"] = (c, c)
        shapes[p + "attn.wo"] = (c, c)
        shapes[p + "mlp.norm"] = (c,)
        shapes[p + "mlp.mod.w"] = (c, 2 * c)
        shapes[p + "mlp.mod.b"] = (2 * c,)
        shapes[p + "mlp.w_gate"] = (c, m)
        shapes[p + "mlp.w_up"] = (c, m)
        shapes[p + "mlp.w_down"] = (m, c)
    shapes["final.norm"] = (c,)
    shapes["head.w"] = (c, cfg.vision_width)
    shapes["head.b"] = (cfg.vision_width,)
    return shapes


def init(cfg: ModelConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    """Seeded init.

    Matrices are fan-in scaled, the embedding table and boundary tokens use
    std 0.02, norm gains start at one, and the output head plus every
    modulation projection start at zero so the model emits zero velocities
    and ignores the timestep until trained.
    """
    rng = np.random.default_rng([cfg.seed, 311])
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".norm"):
            block = np.ones(shape)
        elif name.endswith((".b", ".b1", ".b2")) or ".mod." in name or name.startswith("head."):
            block = np.zeros(shape)
        elif name == "embed.table" or name.startswith("boundary."):
            block = 0.02 * rng.standard_normal(shape)
        else:
            block = rng.standard_normal(shape) / math.sqrt(shape[0])
        params[name] = np.ascontiguousarray(block, dtype=dtype)
    return params


def num_params(params: dict[str, np.ndarray]) -> int:
    return sum(p.size for p in params.values())


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def dsilu(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def time_embedding(t: np.ndarray, width: int, dtype) -> np.ndarray:
    """Sinusoidal features of the flow time, (n_docs, width)."""
    half = width // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    args = (np.asarray(t, dtype=np.float64) * TIME_SCALE)[:, None] * freqs
    return np.concatenate([np.cos(args), np.sin(args)], axis=1).astype(dtype)


@dataclass
class ForwardOutput:
    velocities: np.ndarray  # (L, vision_width); meaningful on target vision rows
    activations: list[np.ndarray] | None = None  # per-layer residual streams


def _validate_batch(batch: PackedBatch, cfg: ModelConfig):
    t = batch.t
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise InputError(f"per-document t must lie in [0, 1], got {t}")
    if batch.tokens.shape[1] != cfg.hidden:
        raise ContractError(
            f"batch width {batch.tokens.shape[1]} != model hidden {cfg.hidden}"
        )
    for d in batch.docs:
        if (np.any(batch.attn_start[d.start:d.end] != d.start)
                or np.any(batch.attn_end[d.start:d.end] != d.end)):
            raise ContractError(f"attention spec of doc {d.doc_id} mismatches its span")


def _doc_index(batch: PackedBatch) -> np.ndarray:
    idx = np.empty(batch.length, dtype=np.intp)
    for pos, d in enumerate(batch.docs):
        idx[d.start:d.end] = pos
    return idx


def _norm_mod_forward(x, gain, shift_rows, scale_rows):
    ms = np.mean(x * x, axis=1)
    inv = 1.0 / np.sqrt(ms + EPS_NORM)
    n = x * inv[:, None]
    g = n * gain[None, :]
    u = g * (1.0 + scale_rows) + shift_rows
    return u, (x, inv, n, g)


def _norm_mod_backward(du, cache, gain, scale_rows, doc_slices):
    x, inv, n, g = cache
    c = x.shape[1]
    dshift = np.stack([du[sl].sum(axis=0) for sl in doc_slices])
    dscale = np.stack([(du[sl] * g[sl]).sum(axis=0) for sl in doc_slices])
    dg_rows = du * (1.0 + scale_rows)
    dgain = (dg_rows * n).sum(axis=0)
    dn = dg_rows * gain[None, :]
    dot = np.sum(dn * x, axis=1)
    dx = dn * inv[:, None] - x * ((inv ** 3) * dot / c)[:, None]
    return dx, dgain, dshift, dscale


def forward(batch: PackedBatch, params: dict[str, np.ndarray], cfg: ModelConfig,
            want_cache: bool = False, return_activations: bool = False):
    """Velocity predictions for every row; full attention inside each document."""
    _validate_batch(batch, cfg)
    dtype = batch.tokens.dtype
    n_heads, hd = cfg.heads, cfg.head_dim
    inv_sqrt_hd = 1.0 / math.sqrt(hd)
    doc_idx = _doc_index(batch)
    doc_slices = [slice(d.start, d.end) for d in batch.docs]

    tables = rope_mod.build_tables(cfg.rope)
    theta = rope_mod.pair_angles(tables, batch.coords.as_tuple())
    cos = np.cos(theta).astype(dtype)[:, None, :]  # (L, 1, hd/2) broadcast over heads
    sin = np.sin(theta).astype(dtype)[:, None, :]

    t_phi = time_embedding(batch.t, cfg.hidden, dtype)
    z1 = t_phi @ params["time.w1"] + params["time.b1"]
    a1 = silu(z1)
    tvec = a1 @ params["time.w2"] + params["time.b2"]

    x = batch.tokens.astype(dtype, copy=True)
    cache: dict = {
        "doc_idx": doc_idx, "doc_slices": doc_slices,
        "cos": cos, "sin": sin, "t_phi": t_phi, "z1": z1, "a1": a1, "tvec": tvec,
        "layers": [],
    }
    activations = [] if return_activations else None

    for i in range(cfg.layers):
        p = f"layers.{i}."
        lc: dict = {}

        # attention sub-block
        mod = tvec @ params[p + "attn.mod.w"] + params[p + "attn.mod.b"]
        shift, scale = mod[:, : cfg.hidden], mod[:, cfg.hidden:]
        shift_rows, scale_rows = shift[doc_idx], scale[doc_idx]
        u, norm_cache = _norm_mod_forward(x, params[p + "attn.norm"], shift_rows, scale_rows)
        q = (u @ params[p + "attn.wq"]).reshape(-1, n_heads, hd)
        k = (u @ params[p + "attn.wk"]).reshape(-1, n_heads, hd)
        v = (u @ params[p + "attn.wv"]).reshape(-1, n_heads, hd)
        qr = rope_mod.rotate_pairs(q, cos, sin, tables)
        kr = rope_mod.rotate_pairs(k, cos, sin, tables)

        ctx = np.empty_like(v)
        probs = []
        for sl in doc_slices:
            qb = qr[sl].transpose(1, 0, 2)  # (H, n, hd)
            kb = kr[sl].transpose(1, 0, 2)
            vb = v[sl].transpose(1, 0, 2)
            scores = np.matmul(qb, kb.transpose(0, 2, 1)) * inv_sqrt_hd
            scores -= scores.max(axis=-1, keepdims=True)
            e = np.exp(scores)
            pb = e / e.sum(axis=-1, keepdims=True)
            probs.append(pb)
            ctx[sl] = np.matmul(pb, vb).transpose(1, 0, 2)
        ctx_flat = ctx.reshape(-1, cfg.hidden)
        attn_out = ctx_flat @ params[p + "attn.wo"]
        lc["attn"] = dict(norm=norm_cache, u=u, qr=qr, kr=kr, v=v, probs=probs,
                          ctx_flat=ctx_flat, scale_rows=scale_rows)
        x = x + attn_out

        # mlp sub-block
        mod = tvec @ params[p + "mlp.mod.w"] + params[p + "mlp.mod.b"]
        shift, scale = mod[:, : cfg.hidden], mod[:, cfg.hidden:]
        shift_rows, scale_rows = shift[doc_idx], scale[doc_idx]
        u, norm_cache = _norm_mod_forward(x, params[p + "mlp.norm"], shift_rows, scale_rows)
        zg = u @ params[p + "mlp.w_gate"]
        zu = u @ params[p + "mlp.w_up"]
        act = silu(zg)
        hm = act * zu
        mlp_out = hm @ params[p + "mlp.w_down"]
        lc["mlp"] = dict(norm=norm_cache, u=u, zg=zg, zu=zu, act=act, hm=hm,
                         scale_rows=scale_rows)
        x = x + mlp_out

        cache["layers"].append(lc)
        if return_activations:
            activations.append(x.copy())

    if cfg.final_norm:
        ms = np.mean(x * x, axis=1)
        inv = 1.0 / np.sqrt(ms + EPS_NORM)
        n_f = x * inv[:, None]
        g_f = n_f * params["final.norm"][None, :]
    else:
        g_f = x * params["final.norm"][None, :]
    out = g_f @ params["head.w"] + params["head.b"]
    cache["final"] = dict(x=x, inv=None if not cfg.final_norm else inv,
                          n=None if not cfg.final_norm else n_f, g=g_f)

    result = ForwardOutput(velocities=out, activations=activations)
    return (result, cache) if want_cache else result


def backward(batch: PackedBatch, params: dict[str, np.ndarray], cfg: ModelConfig,
             cache: dict, d_out: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss with upstream d_out = dL/d velocities."""
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    dtype = d_out.dtype
    n_heads, hd = cfg.heads, cfg.head_dim
    inv_sqrt_hd = 1.0 / math.sqrt(hd)
    doc_idx = cache["doc_idx"]
    doc_slices = cache["doc_slices"]
    cos, sin = cache["cos"], cache["sin"]
    tables = rope_mod.build_tables(cfg.rope)
    dtvec = np.zeros_like(cache["tvec"])

    # head and final gain (optionally RMS-normalized)
    fin = cache["final"]
    grads["head.w"] += fin["g"].T @ d_out
    grads["head.b"] += d_out.sum(axis=0)
    dg = d_out @ params["head.w"].T
    if cfg.final_norm:
        grads["final.norm"] += (dg * fin["n"]).sum(axis=0)
        dn = dg * params["final.norm"][None, :]
        dot = np.sum(dn * fin["x"], axis=1)
        dx = dn * fin["inv"][:, None] - fin["x"] * ((fin["inv"] ** 3) * dot / cfg.hidden)[:, None]
    else:
        grads["final.norm"] += (dg * fin["x"]).sum(axis=0)
        dx = dg * params["final.norm"][None, :]

    for i in reversed(range(cfg.layers)):
        p = f"layers.{i}."
        lc = cache["layers"][i]

        # mlp sub-block
        mc = lc["mlp"]
        d_mlp_out = dx  # residual: dx flows to both branch and skip
        grads[p + "mlp.w_down"] += mc["hm"].T @ d_mlp_out
        dhm = d_mlp_out @ params[p + "mlp.w_down"].T
        dact = dhm * mc["zu"]
        dzu = dhm * mc["act"]
        dzg = dact * dsilu(mc["zg"])
        grads[p + "mlp.w_gate"] += mc["u"].T @ dzg
        grads[p + "mlp.w_up"] += mc["u"].T @ dzu
        du = dzg @ params[p + "mlp.w_gate"].T + dzu @ params[p + "mlp.w_up"].T
        dxn, dgain, dshift, dscale = _norm_mod_backward(
            du, mc["norm"], params[p + "mlp.norm"], mc["scale_rows"], doc_slices)
        grads[p + "mlp.norm"] += dgain
        dmod = np.concatenate([dshift, dscale], axis=1)
        grads[p + "mlp.mod.w"] += cache["tvec"].T @ dmod
        grads[p + "mlp.mod.b"] += dmod.sum(axis=0)
        dtvec += dmod @ params[p + "mlp.mod.w"].T
        dx = dx + dxn

        # attention sub-block
        ac = lc["attn"]
        d_attn_out = dx
        grads[p + "attn.wo"] += ac["ctx_flat"].T @ d_attn_out
        dctx = (d_attn_out @ params[p + "attn.wo"].T).reshape(-1, n_heads, hd)
        dqr = np.empty_like(ac["qr"])
        dkr = np.empty_like(ac["kr"])
        dv = np.empty_like(ac["v"])
        for sl, pb in zip(doc_slices, ac["probs"]):
            dctx_b = dctx[sl].transpose(1, 0, 2)  # (H, n, hd)
            vb = ac["v"][sl].transpose(1, 0, 2)
            qb = ac["qr"][sl].transpose(1, 0, 2)
            kb = ac["kr"][sl].transpose(1, 0, 2)
            dpb = np.matmul(dctx_b, vb.transpose(0, 2, 1))
            dv[sl] = np.matmul(pb.transpose(0, 2, 1), dctx_b).transpose(1, 0, 2)
            dscores = pb * (dpb - np.sum(dpb * pb, axis=-1, keepdims=True))
            dscores *= inv_sqrt_hd
            dqr[sl] = np.matmul(dscores, kb).transpose(1, 0, 2)
            dkr[sl] = np.matmul(dscores.transpose(0, 2, 1), qb).transpose(1, 0, 2)
        dq = rope_mod.rotate_pairs(dqr, cos, -sin, tables).reshape(-1, cfg.hidden)
        dk = rope_mod.rotate_pairs(dkr, cos, -sin, tables).reshape(-1, cfg.hidden)
        dv_flat = dv.reshape(-1, cfg.hidden)
        grads[p + "attn.wq"] += ac["u"].T @ dq
        grads[p + "attn.wk"] += ac["u"].T @ dk
        grads[p + "attn.wv"] += ac["u"].T @ dv_flat
        du = (dq @ params[p + "attn.wq"].T
              + dk @ params[p + "attn.wk"].T
              + dv_flat @ params[p + "attn.wv"].T)
        dxn, dgain, dshift, dscale = _norm_mod_backward(
            du, ac["norm"], params[p + "attn.norm"], ac["scale_rows"], doc_slices)
        grads[p + "attn.norm"] += dgain
        dmod = np.concatenate([dshift, dscale], axis=1)
        grads[p + "attn.mod.w"] += cache["tvec"].T @ dmod
        grads[p + "attn.mod.b"] += dmod.sum(axis=0)
        dtvec += dmod @ params[p + "attn.mod.w"].T
        dx = dx + dxn

    # timestep MLP
    grads["time.w2"] += cache["a1"].T @ dtvec
    grads["time.b2"] += dtvec.sum(axis=0)
    da1 = dtvec @ params["time.w2"].T
    dz1 = da1 * dsilu(cache["z1"])
    grads["time.w1"] += cache["t_phi"].T @ dz1
    grads["time.b1"] += dz1.sum(axis=0)

    # into the assembled tokens: projectors, embedder, boundary tokens
    for d in batch.docs:
        for sp in d.spans:
            seg = sp.segment
            rows = dx[sp.start:sp.end]
            if seg.modality == "text":
                emb = seg.payload.embeddings
                grads["proj.text.w"] += emb.T @ rows
                grads["proj.text.b"] += rows.sum(axis=0)
                demb = rows @ params["proj.text.w"].T
                np.add.at(grads["embed.table"],
                          np.asarray(seg.payload.ids, dtype=np.intp), demb)
            else:
                raw = seg.payload.tokens
                grads["proj.vision.w"] += raw.T @ rows
                grads["proj.vision.b"] += rows.sum(axis=0)
            if sp.bound_start is not None:
                grads["boundary.start"] += dx[sp.bound_start]
                grads["boundary.end"] += dx[sp.bound_end]
    return grads


def _target_losses(velocities: np.ndarray, batch: PackedBatch):
    """Per-doc mean squared errors on target rows, their equal-weight mean, d_out."""
    for d in batch.docs:
        if d.target_span is None or d.flow is None:
            raise ContractError(f"document {d.doc_id} has no noised target segment")
    weights = doc_loss_weights(batch)
    d_out = np.zeros_like(velocities)
    losses = []
    for d, w in zip(batch.docs, weights):
        lo, hi = d.target_span
        err = velocities[lo:hi] - d.flow.vt.astype(velocities.dtype)
        losses.append(float(np.mean(err * err)))
        d_out[lo:hi] = (2.0 * w / err.size) * err
    loss = math.fsum(w * l for w, l in zip(weights, losses))
    return loss, d_out


def loss_only(batch: PackedBatch, params: dict[str, np.ndarray], cfg: ModelConfig) -> float:
    out = forward(batch, params, cfg)
    loss, _ = _target_losses(out.velocities, batch)
    return loss


def loss_and_grad(batch: PackedBatch, params: dict[str, np.ndarray], cfg: ModelConfig):
    """Mean over documents of the MSE over target vision rows, plus exact grads."""
    out, cache = forward(batch, params, cfg, want_cache=True)
    loss, d_out = _target_losses(out.velocities, batch)
    grads = backward(batch, params, cfg, cache, d_out)
    return loss, grads


# --- checkpoint io ---------------------------------------------------------

MAGIC = b"MXD1"
FORMAT_VERSION = 1


def config_digest(cfg: ModelConfig) -> str:
    payload = {
        "hidden": cfg.hidden, "layers": cfg.layers, "heads": cfg.heads,
        "head_dim": cfg.head_dim, "mlp_ratio": cfg.mlp_ratio,
        "vocab_size": cfg.vocab_size, "text_width": cfg.text_width,
        "vision_width": cfg.vision_width, "final_norm": cfg.final_norm,
        "rope": {
            "dims": list(cfg.rope.dims), "base": cfg.rope.base,
            "trained_extent": list(cfg.rope.trained_extent),
            "target_extent": list(cfg.rope.target_extent),
            "ntk_axes": list(cfg.rope.ntk_axes),
        },
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def write_blocks(path: str, digest: str, blocks: dict[str, np.ndarray]) -> None:
    """Header (magic, version, digest) + length-prefixed float32-LE blocks."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(digest.encode("ascii"))
        f.write(struct.pack("<I", len(blocks)))
        for name, arr in blocks.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_blocks(path: str) -> tuple[str, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    digest = raw[8:72].decode("ascii")
    (n_blocks,) = struct.unpack_from("<I", raw, 72)
    pos = 76
    blocks: dict[str, np.ndarray] = {}
    for _ in range(n_blocks):
        (name_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}q", raw, pos)
        pos += 8 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=pos).reshape(shape)
        pos += 4 * n
        blocks[name] = arr.copy()
    return digest, blocks


def save_checkpoint(path: str, params: dict[str, np.ndarray], cfg: ModelConfig) -> None:
    write_blocks(path, config_digest(cfg), params)


def load_checkpoint(path: str, cfg: ModelConfig) -> dict[str, np.ndarray]:
    digest, blocks = read_blocks(path)
    if digest != config_digest(cfg):
        raise CheckpointError(f"{path}: config digest mismatch")
    expected = param_shapes(cfg)
    if set(blocks) != set(expected):
        raise CheckpointError(f"{path}: parameter names do not match the config")
    for name, shape in expected.items():
        if blocks[name].shape != shape:
            raise CheckpointError(
                f"{path}: block {name} has shape {blocks[name].shape}, wanted {shape}"
            )
    return blocks
