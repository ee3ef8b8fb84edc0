"""Exactly invertible pixel <-> token codec.

A stand-in for a learned video autoencoder: pixels are folded
space-to-channel by the downsampling ratios (r_t, r_h, r_w), mixed by a
fixed orthogonal channel matrix derived from the config, and then patchified
with a 1x2x2 kernel into a flat token sequence. Every stage has an exact
inverse, so reconstruction error never confounds downstream metrics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError

PATCH_T, PATCH_H, PATCH_W = 1, 2, 2


@dataclass(frozen=True)
class CodecConfig:
    """Downsampling ratios and latent width; c_vae is forced square-invertible."""

    r_t: int = 1
    r_h: int = 2
    r_w: int = 2
    c_vae: int = -1  # -1 resolves to 3 * r_t * r_h * r_w

    def __post_init__(self):
        if self.r_t < 1 or self.r_h < 1 or self.r_w < 1:
            raise DimensionError("downsample factors must be >= 1")
        required = 3 * self.r_t * self.r_h * self.r_w
        if self.c_vae == -1:
            object.__setattr__(self, "c_vae", required)
        elif self.c_vae != required:
            raise DimensionError(
                f"c_vae must equal 3*r_t*r_h*r_w = {required}, got {self.c_vae}"
            )

    @property
    def tokens_width(self) -> int:
        """Channel width of one vision token (1x2x2 patch of latent cells)."""
        return PATCH_T * PATCH_H * PATCH_W * self.c_vae


@dataclass
class LatentGrid:
    t: int
    h: int
    w: int
    data: np.ndarray  # (t, h, w, c_vae)


@dataclass
class VisionTokens:
    tokens: np.ndarray  # (L_vision, 4 * c_vae)
    grid: tuple[int, int, int]  # (t, h', w') with h' = h/2, w' = w/2

    def __post_init__(self):
        t, hh, ww = self.grid
        if self.tokens.shape[0] != t * hh * ww:
            raise DimensionError(
                f"token count {self.tokens.shape[0]} does not match grid {self.grid}"
            )


_MIX_CACHE: dict[tuple[int, int, int, int], np.ndarray] = {}


def mix_matrix(cfg: CodecConfig) -> np.ndarray:
    """Fixed orthogonal channel mix, deterministic in the config fields."""
    key = (cfg.r_t, cfg.r_h, cfg.r_w, cfg.c_vae)
    cached = _MIX_CACHE.get(key)
    if cached is None:
        rng = np.random.default_rng([7041, cfg.r_t, cfg.r_h, cfg.r_w, cfg.c_vae])
        a = rng.standard_normal((cfg.c_vae, cfg.c_vae))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))  # unique orthogonal factor
        cached = _MIX_CACHE.setdefault(key, q)
    return cached


def _check_divisible(extent: int, factor: int, axis: str) -> int:
    if extent % factor != 0:
        raise DimensionError(f"axis {axis}: extent {extent} not divisible by {factor}")
    return extent // factor


def encode(pixels: np.ndarray, cfg: CodecConfig) -> LatentGrid:
    """Fold (T, H, W, 3) pixels into a (T/r_t, H/r_h, W/r_w, c_vae) latent grid."""
    if pixels.ndim != 4 or pixels.shape[-1] != 3:
        raise DimensionError(f"expected (T, H, W, 3) pixels, got {pixels.shape}")
    big_t, big_h, big_w, _ = pixels.shape
    t = _check_divisible(big_t, cfg.r_t * PATCH_T, "T")
    h = _check_divisible(big_h, cfg.r_h * PATCH_H, "H") * PATCH_H
    w = _check_divisible(big_w, cfg.r_w * PATCH_W, "W") * PATCH_W
    if not np.all(np.isfinite(pixels)):
        raise InputError("pixel values must be finite")
    folded = (
        pixels.reshape(t, cfg.r_t, h, cfg.r_h, w, cfg.r_w, 3)
        .transpose(0, 2, 4, 1, 3, 5, 6)
        .reshape(t, h, w, cfg.c_vae)
    )
    mixed = folded.astype(np.float64) @ mix_matrix(cfg)
    return LatentGrid(t, h, w, mixed.astype(pixels.dtype))


def decode(latent: LatentGrid, cfg: CodecConfig) -> np.ndarray:
    """Exact inverse of :func:`encode` up to floating accumulation."""
    if latent.data.shape != (latent.t, latent.h, latent.w, cfg.c_vae):
        raise DimensionError(
            f"latent data shape {latent.data.shape} inconsistent with "
            f"extents ({latent.t}, {latent.h}, {latent.w}) and c_vae {cfg.c_vae}"
        )
    unmixed = latent.data.astype(np.float64) @ mix_matrix(cfg).T
    pixels = (
        unmixed.reshape(latent.t, latent.h, latent.w, cfg.r_t, cfg.r_h, cfg.r_w, 3)
        .transpose(0, 3, 1, 4, 2, 5, 6)
        .reshape(latent.t * cfg.r_t, latent.h * cfg.r_h, latent.w * cfg.r_w, 3)
    )
    return pixels.astype(latent.data.dtype)


def patchify(latent: LatentGrid) -> VisionTokens:
    """Flatten the grid with a 1x2x2 kernel, frame-major then row-major."""
    if latent.h % PATCH_H != 0:
        raise DimensionError(f"axis h: extent {latent.h} not divisible by {PATCH_H}")
    if latent.w % PATCH_W != 0:
        raise DimensionError(f"axis w: extent {latent.w} not divisible by {PATCH_W}")
    t, hh, ww = latent.t, latent.h // PATCH_H, latent.w // PATCH_W
    c = latent.data.shape[-1]
    tokens = (
        latent.data.reshape(t, hh, PATCH_H, ww, PATCH_W, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(t * hh * ww, PATCH_H * PATCH_W * c)
    )
    return VisionTokens(tokens=tokens, grid=(t, hh, ww))


def unpatchify(vt: VisionTokens) -> LatentGrid:
    """Exact inverse of :func:`patchify`."""
    t, hh, ww = vt.grid
    if vt.tokens.shape[0] != t * hh * ww:
        raise DimensionError(
            f"token count {vt.tokens.shape[0]} does not match grid {vt.grid}"
        )
    if vt.tokens.shape[1] % (PATCH_H * PATCH_W) != 0:
        raise DimensionError(f"token width {vt.tokens.shape[1]} not divisible by 4")
    c = vt.tokens.shape[1] // (PATCH_H * PATCH_W)
    data = (
        vt.tokens.reshape(t, hh, ww, PATCH_H, PATCH_W, c)
        .transpose(0, 1, 3, 2, 4, 5)
        .reshape(t, hh * PATCH_H, ww * PATCH_W, c)
    )
    return LatentGrid(t, hh * PATCH_H, ww * PATCH_W, data)


def encode_tokens(pixels: np.ndarray, cfg: CodecConfig) -> VisionTokens:
    """Pixels straight to vision tokens (encode + patchify)."""
    return patchify(encode(pixels, cfg))


def decode_tokens(vt: VisionTokens, cfg: CodecConfig) -> np.ndarray:
    """Vision tokens straight to pixels (unpatchify + decode)."""
    return decode(unpatchify(vt), cfg)
