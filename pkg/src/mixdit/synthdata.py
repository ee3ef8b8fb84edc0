"""Procedural miniature task suite with exact ground truth.

Scenes are 1-3 hard-edged shapes (square/circle/triangle) from an 8-color
palette on a dark background, optionally drifting linearly over video frames.
Editing samples are pairs of renders of the same scene with one object
recolored, removed or added, so the pixel support of an edit is known
exactly; generation samples carry an instruction that fully determines the
scene. Edit/preservation quality is scored in pixel space with PSNR inside
and outside the edit mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import vocab
from .errors import DimensionError, InputError

TASKS = (
    "t2i",
    "t2v",
    "img_recolor",
    "img_remove",
    "img_add",
    "vid_recolor",
    "vid_remove",
    "vid_add",
    "propagate",
)
IMAGE_TASKS = ("t2i", "img_recolor", "img_remove", "img_add")
VIDEO_GEN_TASKS = ("t2v",)
VIDEO_EDIT_TASKS = ("vid_recolor", "vid_remove", "vid_add", "propagate")
EDIT_TASKS = ("img_recolor", "img_remove", "img_add") + VIDEO_EDIT_TASKS

PALETTE = {
    "red": (1.0, 0.1, 0.1),
    "green": (0.1, 0.9, 0.1),
    "blue": (0.15, 0.25, 1.0),
    "yellow": (1.0, 0.9, 0.1),
    "magenta": (0.9, 0.1, 0.9),
    "cyan": (0.1, 0.85, 0.9),
    "orange": (1.0, 0.55, 0.1),
    "purple": (0.55, 0.1, 0.9),
}
BACKGROUNDS = ((0.0, 0.0, 0.0), (0.18, 0.18, 0.18))

MOTIONS = {  # (dy, dx) pixels per frame
    "still": (0, 0),
    "left": (0, -1),
    "right": (0, 1),
    "up": (-1, 0),
    "down": (1, 0),
}

PSNR_CAP = 99.0


@dataclass(frozen=True)
class ObjectSpec:
    shape: str
    color: str
    size: str  # "small" | "large"
    cy: int  # center at frame 0
    cx: int
    motion: str = "still"


@dataclass(frozen=True)
class SceneSpec:
    canvas: tuple[int, int]
    frames: int
    objects: tuple[ObjectSpec, ...]
    background: int = 0  # index into BACKGROUNDS


@dataclass
class RawSegment:
    modality: str  # "text" | "image" | "video"
    role: str  # "context" | "target"
    text_ids: list[int] | None = None
    pixels: np.ndarray | None = None  # (T, H, W, 3) float32


@dataclass
class TaskSample:
    task: str
    instruction: list[int]
    segments: list[RawSegment]
    target_index: int
    edit_mask: np.ndarray  # (T, H, W) bool over the target pixels
    context_scene: SceneSpec | None = None
    target_scene: SceneSpec | None = None


@dataclass
class EditMetrics:
    edit_psnr: float
    preserve_psnr: float
    exact_outside: bool


def geometry(canvas: int):
    """Position grid, half-extents and per-frame motion step for a canvas."""
    centers = [round(canvas * f) for f in (0.25, 0.40, 0.60, 0.75)]
    sizes = {"small": max(2, canvas // 8), "large": max(3, canvas // 6)}
    return centers, sizes


def object_support(obj: ObjectSpec, canvas: tuple[int, int], frames: int) -> np.ndarray:
    """Boolean (frames, H, W) pixel support of one object over time."""
    hh, ww = canvas
    _, sizes = geometry(hh)
    s = sizes[obj.size]
    dy, dx = MOTIONS[obj.motion]
    ys = np.arange(hh)[:, None]
    xs = np.arange(ww)[None, :]
    out = np.zeros((frames, hh, ww), dtype=bool)
    for f in range(frames):
        cy, cx = obj.cy + f * dy, obj.cx + f * dx
        if obj.shape == "square":
            m = (np.abs(ys - cy) <= s) & (np.abs(xs - cx) <= s)
        elif obj.shape == "circle":
            m = (ys - cy) ** 2 + (xs - cx) ** 2 <= s * s
        elif obj.shape == "triangle":
            m = (np.abs(ys - cy) <= s) & (2 * np.abs(xs - cx) <= (ys - cy) + s)
        else:
            raise InputError(f"unknown shape {obj.shape!r}")
        out[f] = m
    return out


def in_canvas(obj: ObjectSpec, canvas: tuple[int, int], frames: int) -> bool:
    hh, ww = canvas
    _, sizes = geometry(hh)
    s = sizes[obj.size]
    dy, dx = MOTIONS[obj.motion]
    for f in (0, frames - 1):
        cy, cx = obj.cy + f * dy, obj.cx + f * dx
        if not (s <= cy <= hh - 1 - s and s <= cx <= ww - 1 - s):
            return False
    return True


def render(scene: SceneSpec) -> np.ndarray:
    """Rasterize a scene to (frames, H, W, 3) float32 pixels in [0, 1]."""
    hh, ww = scene.canvas
    out = np.empty((scene.frames, hh, ww, 3), dtype=np.float32)
    out[...] = np.asarray(BACKGROUNDS[scene.background], dtype=np.float32)
    for obj in scene.objects:
        sup = object_support(obj, scene.canvas, scene.frames)
        out[sup] = np.asarray(PALETTE[obj.color], dtype=np.float32)
    return out


def _disjoint(objs, canvas, frames) -> bool:
    sups = [object_support(o, canvas, frames) for o in objs]
    return not any(
        np.any(sups[i] & sups[j]) for i in range(len(sups)) for j in range(i + 1, len(sups))
    )


def _sample_object(rng, canvas, frames, shape, color, moving) -> ObjectSpec | None:
    """One rejection draw; None if the draw leaves the canvas."""
    centers, sizes = geometry(canvas[0])
    size = str(rng.choice(vocab.SIZE_WORDS))
    motion = str(rng.choice(vocab.MOTION_WORDS)) if moving and frames > 1 else "still"
    cy = centers[int(rng.integers(len(centers)))]
    cx = centers[int(rng.integers(len(centers)))]
    obj = ObjectSpec(shape=shape, color=color, size=size, cy=cy, cx=cx, motion=motion)
    return obj if in_canvas(obj, canvas, frames) else None


def sample_scene(rng, canvas, frames, n_objects, moving) -> SceneSpec:
    """Rejection-sample a scene with distinct shapes/colors and disjoint supports."""
    shapes = list(rng.permutation(vocab.SHAPE_WORDS))[:n_objects]
    colors = list(rng.permutation(vocab.COLOR_WORDS))[:n_objects]
    background = int(rng.integers(len(BACKGROUNDS)))
    objects: list[ObjectSpec] = []
    for shape, color in zip(shapes, colors):
        for _ in range(200):
            obj = _sample_object(rng, canvas, frames, shape, color, moving)
            if obj is not None and _disjoint(objects + [obj], canvas, frames):
                objects.append(obj)
                break
        # an exhausting draw simply yields a scene with fewer objects
    return SceneSpec(canvas=canvas, frames=frames, objects=tuple(objects), background=background)


def _place_new_object(rng, scene: SceneSpec, moving) -> ObjectSpec:
    """A new object with unused shape/color placed disjointly into `scene`."""
    shape = str(rng.choice([s for s in vocab.SHAPE_WORDS if s not in {o.shape for o in scene.objects}]))
    color = str(rng.choice([c for c in vocab.COLOR_WORDS if c not in {o.color for o in scene.objects}]))
    for _ in range(500):
        obj = _sample_object(rng, scene.canvas, scene.frames, shape, color, moving)
        if obj is not None and _disjoint(list(scene.objects) + [obj], scene.canvas, scene.frames):
            return obj
    raise InputError("could not place a new object; scene too crowded")


def _words_for_object(obj: ObjectSpec, canvas: int, with_motion: bool) -> list[str]:
    centers, _ = geometry(canvas)
    words = [obj.color, obj.shape, "size", obj.size, "at",
             vocab.POSITION_WORDS[centers.index(obj.cx)],
             vocab.POSITION_WORDS[centers.index(obj.cy)]]
    if with_motion:
        words += ["move", obj.motion]
    return words


@dataclass(frozen=True)
class DataParams:
    canvas: int = 32
    frames: int = 8


def gen_sample(task: str, rng, params: DataParams = DataParams()) -> TaskSample:
    """Generate one sample of `task`; deterministic given the rng state."""
    if task not in TASKS:
        raise InputError(f"unknown task {task!r}")
    canvas = (params.canvas, params.canvas)
    video_frames = params.frames

    def text(words):
        return RawSegment(modality="text", role="context", text_ids=vocab.encode_words(words))

    def vision(pixels, role):
        modality = "image" if pixels.shape[0] == 1 else "video"
        return RawSegment(modality=modality, role=role, pixels=pixels)

    if task in ("t2i", "t2v"):
        frames = 1 if task == "t2i" else video_frames
        scene = sample_scene(rng, canvas, frames, n_objects=1, moving=task == "t2v")
        obj = scene.objects[0]
        words = [task] + _words_for_object(obj, params.canvas, with_motion=task == "t2v")
        target = render(scene)
        mask = np.ones(target.shape[:3], dtype=bool)
        seg_text = text(words)
        return TaskSample(
            task=task,
            instruction=seg_text.text_ids,
            segments=[seg_text, vision(target, "target")],
            target_index=1,
            edit_mask=mask,
            context_scene=None,
            target_scene=scene,
        )

    if task == "propagate":
        base_task = str(rng.choice(["vid_recolor", "vid_remove"]))
        base = gen_sample(base_task, rng, params)
        ctx_video = base.segments[0].pixels
        tgt_video = base.segments[2].pixels
        edited_frame0 = tgt_video[:1].copy()
        seg_text = text(["propagate"])
        return TaskSample(
            task="propagate",
            instruction=seg_text.text_ids,
            segments=[
                vision(ctx_video, "context"),
                vision(edited_frame0, "context"),
                seg_text,
                vision(tgt_video, "target"),
            ],
            target_index=3,
            edit_mask=base.edit_mask,
            context_scene=base.context_scene,
            target_scene=base.target_scene,
        )

    # single-edit tasks
    is_video = task.startswith("vid_")
    frames = video_frames if is_video else 1
    kind = task.split("_")[1]
    n_objects = 1 + int(rng.integers(2)) if kind != "add" else 1
    scene = sample_scene(rng, canvas, frames, n_objects=n_objects, moving=is_video)

    if kind == "recolor":
        idx = int(rng.integers(len(scene.objects)))
        obj = scene.objects[idx]
        new_color = str(rng.choice([c for c in vocab.COLOR_WORDS if c not in {o.color for o in scene.objects}]))
        edited = replace(obj, color=new_color)
        target_scene = replace(scene, objects=tuple(
            edited if i == idx else o for i, o in enumerate(scene.objects)))
        words = ["recolor", obj.shape, "to", new_color]
        mask = object_support(obj, canvas, frames)
    elif kind == "remove":
        idx = int(rng.integers(len(scene.objects)))
        obj = scene.objects[idx]
        target_scene = replace(scene, objects=tuple(
            o for i, o in enumerate(scene.objects) if i != idx))
        words = ["remove", obj.shape]
        mask = object_support(obj, canvas, frames)
    elif kind == "add":
        obj = _place_new_object(rng, scene, moving=is_video)
        target_scene = replace(scene, objects=scene.objects + (obj,))
        words = ["add"] + _words_for_object(obj, params.canvas, with_motion=is_video)
        mask = object_support(obj, canvas, frames)
    else:  # pragma: no cover
        raise InputError(f"unknown edit kind {kind!r}")

    seg_text = text(words)
    return TaskSample(
        task=task,
        instruction=seg_text.text_ids,
        segments=[vision(render(scene), "context"), seg_text, vision(render(target_scene), "target")],
        target_index=2,
        edit_mask=mask,
        context_scene=scene,
        target_scene=target_scene,
    )


def parse_instruction(ids, params: DataParams = DataParams()) -> dict:
    """Parse instruction ids back into template fields (inverse of gen templates)."""
    words = vocab.decode_ids(ids)
    if not words:
        raise InputError("empty instruction")
    head = words[0]
    fields: dict = {"template": head}
    rest = words[1:]
    if head in ("t2i", "t2v", "add"):
        if len(rest) not in (7, 9) or rest[2] != "size" or rest[4] != "at":
            raise InputError(f"malformed {head} instruction: {words}")
        fields.update(color=rest[0], shape=rest[1], size=rest[3], px=rest[5], py=rest[6])
        if len(rest) == 9:
            if rest[7] != "move":
                raise InputError(f"malformed {head} instruction: {words}")
            fields["motion"] = rest[8]
    elif head == "recolor":
        if len(rest) != 3:
            raise InputError(f"malformed recolor instruction: {words}")
        fields.update(shape=rest[0], color=rest[2])
    elif head == "remove":
        if len(rest) != 1:
            raise InputError(f"malformed remove instruction: {words}")
        fields.update(shape=rest[0])
    elif head == "propagate":
        if rest:
            raise InputError(f"malformed propagate instruction: {words}")
    else:
        raise InputError(f"unknown instruction template {head!r}")
    return fields


def render_from_instruction(ids, params: DataParams = DataParams()) -> np.ndarray:
    """Template-renderer oracle for generation instructions (t2i / t2v)."""
    f = parse_instruction(ids, params)
    if f["template"] not in ("t2i", "t2v"):
        raise InputError(f"not a generation instruction: {f['template']}")
    centers, _ = geometry(params.canvas)
    obj = ObjectSpec(
        shape=f["shape"],
        color=f["color"],
        size=f["size"],
        cy=centers[vocab.POSITION_WORDS.index(f["py"])],
        cx=centers[vocab.POSITION_WORDS.index(f["px"])],
        motion=f.get("motion", "still"),
    )
    frames = 1 if f["template"] == "t2i" else params.frames
    scene = SceneSpec(canvas=(params.canvas, params.canvas), frames=frames,
                      objects=(obj,), background=0)
    return render(scene)


def psnr(mse: float) -> float:
    """PSNR in dB against a unit dynamic range, capped at PSNR_CAP."""
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, float(10.0 * np.log10(1.0 / mse)))


def eval_edit(pred: np.ndarray, gt: np.ndarray, edit_mask: np.ndarray) -> EditMetrics:
    """Edit PSNR inside the mask, preservation PSNR outside, exact-match flag."""
    if pred.shape != gt.shape:
        raise DimensionError(f"pred shape {pred.shape} != gt shape {gt.shape}")
    if edit_mask.shape != gt.shape[:3]:
        raise DimensionError(
            f"edit_mask shape {edit_mask.shape} does not match pixels {gt.shape[:3]}"
        )
    err = (pred.astype(np.float64) - gt.astype(np.float64)) ** 2
    inside = edit_mask
    outside = ~edit_mask
    edit_mse = float(err[inside].mean()) if inside.any() else 0.0
    preserve_mse = float(err[outside].mean()) if outside.any() else 0.0
    exact = bool(np.array_equal(pred[outside], gt[outside])) if outside.any() else True
    return EditMetrics(
        edit_psnr=psnr(edit_mse),
        preserve_psnr=psnr(preserve_mse),
        exact_outside=exact,
    )
