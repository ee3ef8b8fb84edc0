"""Variable-length sequence packing with block-diagonal attention.

Sequences are binned first-fit-decreasing into a fixed token budget. Inside a
packed batch every row may attend exactly to the half-open row interval of
its own document, so forward results are independent of co-packed neighbors,
and per-document losses are averaged with equal weight regardless of length.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, InputError
from .seqlayout import Coords, SegmentSpan, UnifiedSequence


@dataclass
class PackedDoc:
    doc_id: int  # index into the original sequence list
    start: int
    end: int
    t: float | None
    target_span: tuple[int, int] | None  # absolute rows of the target content
    flow: "object | None"
    spans: list[SegmentSpan]  # row-shifted copies


@dataclass
class PackedBatch:
    tokens: np.ndarray  # (L, C)
    coords: Coords
    docs: list[PackedDoc]
    attn_start: np.ndarray  # (L,) int: first row each row may attend to
    attn_end: np.ndarray  # (L,) int: one past the last row

    @property
    def doc_spans(self) -> list[tuple[int, int, int]]:
        return [(d.start, d.end, d.doc_id) for d in self.docs]

    @property
    def t(self) -> np.ndarray:
        return np.asarray([np.nan if d.t is None else d.t for d in self.docs])

    @property
    def length(self) -> int:
        return self.tokens.shape[0]


def build_mask(doc_spans: list[tuple[int, int, int]], length: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row attention intervals from document spans.

    Spans must be disjoint, ordered, and cover [0, length) exactly.
    """
    attn_start = np.empty(length, dtype=np.int64)
    attn_end = np.empty(length, dtype=np.int64)
    cursor = 0
    for start, end, _ in doc_spans:
        if start != cursor or end <= start:
            raise ContractError(
                f"doc spans must be ordered, disjoint and contiguous; got span "
                f"({start}, {end}) at cursor {cursor}"
            )
        attn_start[start:end] = start
        attn_end[start:end] = end
        cursor = end
    if cursor != length:
        raise ContractError(f"doc spans cover {cursor} rows of {length}")
    return attn_start, attn_end


def _materialize(sequences: list[UnifiedSequence], ids: list[int]) -> PackedBatch:
    docs = []
    tokens_parts, coords_parts = [], []
    cursor = 0
    for doc_id in ids:
        seq = sequences[doc_id]
        tokens_parts.append(seq.tokens)
        coords_parts.append(seq.coords)
        spans = [
            replace(
                sp,
                start=sp.start + cursor,
                end=sp.end + cursor,
                bound_start=None if sp.bound_start is None else sp.bound_start + cursor,
                bound_end=None if sp.bound_end is None else sp.bound_end + cursor,
            )
            for sp in seq.spans
        ]
        target_span = None
        if seq.target_index is not None:
            tsp = spans[seq.target_index]
            target_span = (tsp.start, tsp.end)
        docs.append(PackedDoc(
            doc_id=doc_id,
            start=cursor,
            end=cursor + seq.length,
            t=seq.t,
            target_span=target_span,
            flow=seq.flow,
            spans=spans,
        ))
        cursor += seq.length
    tokens = np.concatenate(tokens_parts, axis=0)
    coords = Coords.concat(coords_parts)
    attn_start, attn_end = build_mask([(d.start, d.end, d.doc_id) for d in docs], cursor)
    return PackedBatch(tokens=tokens, coords=coords, docs=docs,
                       attn_start=attn_start, attn_end=attn_end)


def pack(sequences: list[UnifiedSequence], budget: int) -> list[PackedBatch]:
    """First-fit-decreasing packing into batches of at most `budget` tokens."""
    if budget < 1:
        raise InputError("token budget must be >= 1")
    for i, seq in enumerate(sequences):
        if seq.length > budget:
            raise InputError(
                f"sequence {i} has {seq.length} tokens, over the budget of {budget}"
            )
    order = sorted(range(len(sequences)), key=lambda i: (-sequences[i].length, i))
    bins: list[list[int]] = []
    room: list[int] = []
    for i in order:
        n = sequences[i].length
        for b, r in enumerate(room):
            if n <= r:
                bins[b].append(i)
                room[b] -= n
                break
        else:
            bins.append([i])
            room.append(budget - n)
    return [_materialize(sequences, ids) for ids in bins]


def doc_loss_weights(batch: PackedBatch) -> np.ndarray:
    """Equal per-document weights over per-document mean losses."""
    for d in batch.docs:
        if d.target_span is None:
            raise ContractError(f"document {d.doc_id} has no target span")
    n = len(batch.docs)
    return np.full(n, 1.0 / n)


def unpack(batch: PackedBatch) -> list[tuple[int, np.ndarray, Coords]]:
    """Recover (doc_id, tokens, coords) per document, for no-token-loss checks."""
    out = []
    for d in batch.docs:
        sl = slice(d.start, d.end)
        out.append((d.doc_id, batch.tokens[sl], batch.coords.take(sl)))
    return out
