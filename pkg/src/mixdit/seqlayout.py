"""Unified interleaved sequence construction.

An ordered list of text/image/video segments becomes one token matrix:
per-modality linear projectors map payloads to the model width, every vision
segment is wrapped in learnable start/end boundary tokens, and each token
gets four position coordinates (pixel row, pixel column, sequential index,
frame index). The sequential index advances by one per text token and by one
per image/video frame; all tokens of a frame share it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import VisionTokens
from .errors import ContractError, DimensionError, InputError

SEQ_MODES = ("per_frame", "per_segment")


@dataclass(frozen=True)
class LayoutConfig:
    seq_mode: str = "per_frame"  # "per_segment": one s value per vision segment
    interleave: bool = True  # False: all text first, vision at the end
    use_seq_pe: bool = True  # False: sequential coordinate forced to zero
    stride_h: int = 4  # pixels per token-grid row (r_h * patch_h)
    stride_w: int = 4

    def __post_init__(self):
        if self.seq_mode not in SEQ_MODES:
            raise InputError(f"seq_mode must be one of {SEQ_MODES}, got {self.seq_mode!r}")
        if self.stride_h < 1 or self.stride_w < 1:
            raise DimensionError("strides must be >= 1")


@dataclass
class TextTokens:
    ids: list[int]
    embeddings: np.ndarray  # (L_text, C_text)


@dataclass
class Segment:
    modality: str  # "text" | "image" | "video"
    role: str  # "context" | "target"
    payload: TextTokens | VisionTokens
    grid: tuple[int, int, int] | None = None  # (t, h', w'), vision only

    def __post_init__(self):
        if self.modality == "text":
            if not isinstance(self.payload, TextTokens):
                raise ContractError("text segment requires a TextTokens payload")
            self.grid = None
        else:
            if not isinstance(self.payload, VisionTokens):
                raise ContractError("vision segment requires a VisionTokens payload")
            if self.grid is None:
                self.grid = self.payload.grid
            if self.modality == "image" and self.grid[0] != 1:
                raise ContractError(f"image segment must have t = 1, got {self.grid[0]}")

    @property
    def length(self) -> int:
        """Content token count (boundary tokens excluded)."""
        if self.modality == "text":
            return len(self.payload.ids)
        return self.payload.tokens.shape[0]


@dataclass
class Coords:
    h: np.ndarray
    w: np.ndarray
    s: np.ndarray
    tau: np.ndarray

    def as_tuple(self):
        return (self.h, self.w, self.s, self.tau)

    def take(self, index) -> "Coords":
        return Coords(self.h[index], self.w[index], self.s[index], self.tau[index])

    @staticmethod
    def concat(parts: list["Coords"]) -> "Coords":
        return Coords(*(np.concatenate([getattr(p, n) for p in parts])
                        for n in ("h", "w", "s", "tau")))


@dataclass
class SegmentSpan:
    start: int  # first content row
    end: int  # one past the last content row
    segment: Segment
    bound_start: int | None = None  # boundary-token rows, vision only
    bound_end: int | None = None


@dataclass
class UnifiedSequence:
    tokens: np.ndarray  # (L, C) projected, boundaries inserted
    coords: Coords
    spans: list[SegmentSpan]
    target_index: int | None  # index into spans
    flow: "object | None" = None  # FlowState of the target segment, if noised
    t: float | None = None  # flow time of this example

    @property
    def length(self) -> int:
        return self.tokens.shape[0]


def embed_text(ids, params) -> TextTokens:
    """Look up learnable embeddings for a token-id list."""
    table = params["embed.table"]
    if len(ids) == 0:
        raise InputError("empty text segment")
    for pos, i in enumerate(ids):
        if not 0 <= i < table.shape[0]:
            raise InputError(f"id {i} at position {pos} outside vocabulary of {table.shape[0]}")
    return TextTokens(ids=list(ids), embeddings=table[np.asarray(ids, dtype=np.intp)])


def project(seg: Segment, params) -> np.ndarray:
    """Map a segment payload to the model width with its modality's projector."""
    if seg.modality == "text":
        w, b = params["proj.text.w"], params["proj.text.b"]
        x = seg.payload.embeddings
    else:
        w, b = params["proj.vision.w"], params["proj.vision.b"]
        x = seg.payload.tokens
    if x.shape[1] != w.shape[0]:
        raise DimensionError(
            f"{seg.modality} payload width {x.shape[1]} != projector input {w.shape[0]}"
        )
    return x @ w + b


def interleave_order(segments: list[Segment], interleave: bool) -> list[Segment]:
    """Identity, or the ablation order with every vision segment at the end."""
    if interleave:
        return list(segments)
    texts = [s for s in segments if s.modality == "text"]
    visions = [s for s in segments if s.modality != "text"]
    return texts + visions


def assign_coords(segments: list[Segment], layout: LayoutConfig) -> tuple[Coords, list[tuple]]:
    """Coordinates for every token including boundary rows.

    Returns the coords plus per-segment row layout entries
    (start, end, bound_start, bound_end) in segment order.
    """
    parts: list[Coords] = []
    layout_rows = []
    cursor = 0
    s_counter = 0

    def scalar(h, w, s, tau):
        return Coords(*(np.asarray([v], dtype=np.int64) for v in (h, w, s, tau)))

    for seg in segments:
        if seg.modality == "text":
            n = seg.length
            zero = np.zeros(n, dtype=np.int64)
            parts.append(Coords(h=zero, w=zero.copy(),
                                s=np.arange(s_counter, s_counter + n, dtype=np.int64),
                                tau=zero.copy()))
            s_counter += n
            layout_rows.append((cursor, cursor + n, None, None))
            cursor += n
        else:
            t, hh, ww = seg.grid
            n = hh * ww
            if layout.seq_mode == "per_frame":
                frame_s = np.arange(s_counter, s_counter + t, dtype=np.int64)
                s_counter += t
            else:
                frame_s = np.full(t, s_counter, dtype=np.int64)
                s_counter += 1
            bound_start = cursor
            parts.append(scalar(0, 0, int(frame_s[0]), 0))  # start-of-vision
            grid_h = np.repeat(np.arange(hh, dtype=np.int64) * layout.stride_h, ww)
            grid_w = np.tile(np.arange(ww, dtype=np.int64) * layout.stride_w, hh)
            parts.append(Coords(
                h=np.tile(grid_h, t),
                w=np.tile(grid_w, t),
                s=np.repeat(frame_s, n),
                tau=np.repeat(np.arange(t, dtype=np.int64), n),
            ))
            bound_end = cursor + 1 + t * n
            parts.append(scalar(0, 0, int(frame_s[-1]), 0))  # end-of-vision
            layout_rows.append((cursor + 1, bound_end, bound_start, bound_end))
            cursor = bound_end + 1

    coords = Coords.concat(parts)
    if not layout.use_seq_pe:
        coords.s = np.zeros_like(coords.s)
    return coords, layout_rows


def assemble(segments: list[Segment], params, layout: LayoutConfig = LayoutConfig()) -> UnifiedSequence:
    """Project, wrap vision segments in boundary tokens, and assign coordinates."""
    if len(segments) == 0:
        raise InputError("assemble requires at least one segment")
    targets = [i for i, s in enumerate(segments) if s.role == "target"]
    if len(targets) > 1:
        raise ContractError(f"at most one target segment allowed, got {len(targets)}")
    for i in targets:
        if segments[i].modality == "text":
            raise ContractError("the target segment can never be text")

    coords, layout_rows = assign_coords(segments, layout)
    width = params["boundary.start"].shape[0]
    dtype = params["boundary.start"].dtype
    tokens = np.empty((coords.h.shape[0], width), dtype=dtype)

    spans: list[SegmentSpan] = []
    target_index = targets[0] if targets else None
    for seg, (start, end, bound_start, bound_end) in zip(segments, layout_rows):
        tokens[start:end] = project(seg, params)
        if bound_start is not None:
            tokens[bound_start] = params["boundary.start"]
            tokens[bound_end] = params["boundary.end"]
        spans.append(SegmentSpan(start=start, end=end, segment=seg,
                                 bound_start=bound_start, bound_end=bound_end))
    return UnifiedSequence(tokens=tokens, coords=coords, spans=spans,
                           target_index=target_index)
