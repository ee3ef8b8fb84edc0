"""Dataset container: a JSON-lines manifest plus one float32 blob.

Each manifest line is one sample record:

    {"id": int, "task": str, "instruction": [int, ...], "target_index": int,
     "segments": [{"modality": str, "role": str,
                   "shape": [T, H, W, 3] | null,   # vision only
                   "offset": int | null,           # byte offset into the blob
                   "ids": [int, ...] | null}, ...],# text only
     "mask": {"offset": int, "shape": [T, H, W]}}

The blob holds little-endian float32 values laid out back to back at the
recorded offsets (masks are stored as 0.0/1.0). Writing is append-ordered and
fully deterministic, so regenerating with the same seed is byte-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .synthdata import DataParams, RawSegment, TaskSample, TASKS, gen_sample


def _blob_append(blob, arr: np.ndarray) -> int:
    offset = blob.tell()
    blob.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return offset


def write_dataset(samples, manifest_path: str, blob_path: str) -> None:
    """Write samples to the manifest/blob pair, overwriting existing files."""
    os.makedirs(os.path.dirname(os.path.abspath(manifest_path)), exist_ok=True)
    with open(blob_path, "wb") as blob, open(manifest_path, "w") as man:
        for i, s in enumerate(samples):
            segs = []
            for seg in s.segments:
                if seg.modality == "text":
                    segs.append({
                        "modality": "text", "role": seg.role,
                        "shape": None, "offset": None, "ids": list(seg.text_ids),
                    })
                else:
                    segs.append({
                        "modality": seg.modality, "role": seg.role,
                        "shape": list(seg.pixels.shape),
                        "offset": _blob_append(blob, seg.pixels), "ids": None,
                    })
            record = {
                "id": i,
                "task": s.task,
                "instruction": list(s.instruction),
                "target_index": s.target_index,
                "segments": segs,
                "mask": {
                    "offset": _blob_append(blob, s.edit_mask.astype(np.float32)),
                    "shape": list(s.edit_mask.shape),
                },
            }
            man.write(json.dumps(record, sort_keys=True) + "\n")


@dataclass
class Dataset:
    """Loaded dataset; sample tensors are read-only views into the blob."""

    samples: list[TaskSample]
    by_task: dict[str, list[int]]

    def __len__(self) -> int:
        return len(self.samples)


def _read_array(blob: bytes, offset: int, shape) -> np.ndarray:
    n = int(np.prod(shape))
    arr = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
    return arr.reshape(shape)


def load_dataset(manifest_path: str, blob_path: str) -> Dataset:
    with open(blob_path, "rb") as f:
        blob = f.read()
    samples: list[TaskSample] = []
    by_task: dict[str, list[int]] = {}
    with open(manifest_path) as man:
        for line in man:
            rec = json.loads(line)
            segments = []
            for seg in rec["segments"]:
                if seg["modality"] == "text":
                    segments.append(RawSegment(
                        modality="text", role=seg["role"], text_ids=list(seg["ids"])))
                else:
                    segments.append(RawSegment(
                        modality=seg["modality"], role=seg["role"],
                        pixels=_read_array(blob, seg["offset"], seg["shape"])))
            mask = _read_array(blob, rec["mask"]["offset"], rec["mask"]["shape"]) > 0.5
            samples.append(TaskSample(
                task=rec["task"],
                instruction=list(rec["instruction"]),
                segments=segments,
                target_index=rec["target_index"],
                edit_mask=mask,
            ))
            by_task.setdefault(rec["task"], []).append(rec["id"])
    return Dataset(samples=samples, by_task=by_task)


def make_dataset(counts: dict[str, int], seed: int, out_dir: str,
                 params: DataParams = DataParams(), prefix: str = "train",
                 stream: int = 0) -> tuple[str, str]:
    """Generate `counts[task]` samples per task and write the container files.

    Tasks are generated in canonical TASKS order from a single seeded stream,
    so the output bytes are a pure function of (counts, seed, stream, params);
    `stream` separates train/val/ablation draws under one run seed.
    """
    for task in counts:
        if task not in TASKS:
            raise InputError(f"unknown task {task!r} in counts")
        if counts[task] < 0:
            raise InputError(f"negative count for task {task!r}")
    rng = np.random.default_rng([seed, 905, stream])
    samples = []
    for task in TASKS:
        for _ in range(counts.get(task, 0)):
            samples.append(gen_sample(task, rng, params))
    manifest = os.path.join(out_dir, f"{prefix}.manifest.jsonl")
    blob = os.path.join(out_dir, f"{prefix}.blob.bin")
    os.makedirs(out_dir, exist_ok=True)
    write_dataset(samples, manifest, blob)
    return manifest, blob
