"""Tiny closed vocabulary for instructions.

Task words, attribute words and connectives; the embedder table is sized
with headroom (default 128 slots) so the vocabulary can grow without
changing model shapes.
"""

from __future__ import annotations

from .errors import InputError

TASK_WORDS = ("t2i", "t2v", "recolor", "remove", "add", "propagate")
CONNECTIVES = ("to", "at", "size", "move")
COLOR_WORDS = ("red", "green", "blue", "yellow", "magenta", "cyan", "orange", "purple")
SHAPE_WORDS = ("square", "circle", "triangle")
SIZE_WORDS = ("small", "large")
POSITION_WORDS = ("p0", "p1", "p2", "p3")
MOTION_WORDS = ("still", "left", "right", "up", "down")

WORDS: tuple[str, ...] = (
    TASK_WORDS + CONNECTIVES + COLOR_WORDS + SHAPE_WORDS + SIZE_WORDS
    + POSITION_WORDS + MOTION_WORDS
)

WORD_TO_ID = {w: i for i, w in enumerate(WORDS)}


def encode_words(words) -> list[int]:
    ids = []
    for pos, w in enumerate(words):
        if w not in WORD_TO_ID:
            raise InputError(f"unknown word {w!r} at position {pos}")
        ids.append(WORD_TO_ID[w])
    return ids


def decode_ids(ids) -> list[str]:
    out = []
    for pos, i in enumerate(ids):
        if not 0 <= i < len(WORDS):
            raise InputError(f"id {i} at position {pos} outside the vocabulary")
        out.append(WORDS[i])
    return out
