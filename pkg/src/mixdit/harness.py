"""Command implementations: dataset generation, training, sampling,
evaluation, the two ablation grids, gradient checking and packer benchmarks.

Every command is deterministic given (config, seed), including output file
bytes: data draws, flow noise and sampler noise all come from explicitly
seeded generators whose states are checkpointed for bit-identical resume.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from . import flow as flow_mod
from . import vocab
from .codec import CodecConfig, decode
from .config import AblateConfig, DataConfig, RunConfig, save as save_config, to_dict
from .datasetio import Dataset, load_dataset, make_dataset
from .errors import CheckpointError, ConfigError, InputError
from .flow import (
    PreparedExample,
    PreparedSegment,
    TrainState,
    make_training_sequence,
    prepare_example,
    sample as flow_sample,
    step_on_sequences,
)
from .gradcheck import TOLERANCE, run_check
from .model import (
    config_digest,
    init,
    load_checkpoint,
    read_blocks,
    save_checkpoint,
    write_blocks,
)
from .optim import AdamWState, OptimConfig
from .packing import pack
from .seqlayout import LayoutConfig
from .synthdata import (
    DataParams,
    TASKS,
    VIDEO_EDIT_TASKS,
    eval_edit,
    psnr,
)

TRAIN_STREAM, VAL_STREAM, ABLATE_TRAIN_STREAM, ABLATE_VAL_STREAM = 0, 1, 2, 3


def data_params(cfg: RunConfig) -> DataParams:
    return DataParams(canvas=cfg.data.canvas, frames=cfg.data.frames)


# --- rng checkpointing -------------------------------------------------------

def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


# --- make-data ---------------------------------------------------------------

def cmd_make_data(cfg: RunConfig, out_dir: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    params = data_params(cfg)
    train = make_dataset(cfg.data.train_counts, cfg.seed, out_dir, params,
                         prefix="train", stream=TRAIN_STREAM)
    val = make_dataset(cfg.data.val_counts, cfg.seed, out_dir, params,
                       prefix="val", stream=VAL_STREAM)
    save_config(cfg, os.path.join(out_dir, "data_config.json"))
    return {"train_manifest": train[0], "train_blob": train[1],
            "val_manifest": val[0], "val_blob": val[1]}


def _load_split(data_dir: str, split: str) -> Dataset:
    manifest = os.path.join(data_dir, f"{split}.manifest.jsonl")
    blob = os.path.join(data_dir, f"{split}.blob.bin")
    if not (os.path.exists(manifest) and os.path.exists(blob)):
        raise FileNotFoundError(f"dataset split {split!r} not found under {data_dir}")
    return load_dataset(manifest, blob)


# --- train -------------------------------------------------------------------

@dataclass
class TaskPool:
    tasks: list[str]
    probs: np.ndarray
    examples: dict[str, list[PreparedExample]]


def build_task_pool(ds: Dataset, cfg: RunConfig, data_cfg: DataConfig,
                    codec_cfg: CodecConfig) -> TaskPool:
    included = [t for t in data_cfg.included_tasks() if ds.by_task.get(t)]
    if not included:
        raise InputError("no training tasks are both included and present in the dataset")
    weights = np.array([data_cfg.weights.get(t, 1.0) for t in included], dtype=np.float64)
    if weights.sum() <= 0:
        raise ConfigError("task weights must have positive mass")
    examples = {
        t: [prepare_example(ds.samples[i], codec_cfg) for i in ds.by_task[t]]
        for t in included
    }
    return TaskPool(tasks=included, probs=weights / weights.sum(), examples=examples)


def draw_step_sequences(pool: TaskPool, params, cfg: RunConfig, layout: LayoutConfig,
                        rng: np.random.Generator):
    """Fill the token budget: draw (task, example) pairs, noise them, stop at
    the first sequence that would overflow (that draw is discarded)."""
    budget = cfg.train.token_budget
    seqs, total = [], 0
    while True:
        task = pool.tasks[int(rng.choice(len(pool.tasks), p=pool.probs))]
        bucket = pool.examples[task]
        ex = bucket[int(rng.integers(len(bucket)))]
        seq = make_training_sequence(ex, params, layout, cfg.sampler, rng)
        if not seqs and seq.length > budget:
            raise ConfigError(
                f"token budget {budget} is below a single {task} sequence "
                f"({seq.length} tokens)"
            )
        if seqs and total + seq.length > budget:
            return seqs
        seqs.append(seq)
        total += seq.length
        if total >= budget:
            return seqs


def _state_paths(out_dir: str, step: int) -> tuple[str, str, str]:
    return (
        os.path.join(out_dir, f"ckpt_{step:06d}.bin"),
        os.path.join(out_dir, f"state_{step:06d}.bin"),
        os.path.join(out_dir, f"state_{step:06d}.json"),
    )


def save_train_state(out_dir: str, step: int, state: TrainState,
                     rng: np.random.Generator, cfg: RunConfig) -> None:
    ckpt, opt_path, meta_path = _state_paths(out_dir, step)
    save_checkpoint(ckpt, state.params, cfg.model)
    opt_blocks = {f"m.{k}": v for k, v in state.opt.m.items()}
    opt_blocks.update({f"v.{k}": v for k, v in state.opt.v.items()})
    write_blocks(opt_path, config_digest(cfg.model), opt_blocks)
    with open(meta_path, "w") as f:
        json.dump({"step": step, "opt_step": state.opt.step, "rng": rng_state(rng)},
                  f, sort_keys=True)
        f.write("\n")


def load_train_state(out_dir: str, step: int, cfg: RunConfig):
    ckpt, opt_path, meta_path = _state_paths(out_dir, step)
    params = load_checkpoint(ckpt, cfg.model)
    digest, blocks = read_blocks(opt_path)
    if digest != config_digest(cfg.model):
        raise CheckpointError(f"{opt_path}: config digest mismatch")
    m = {k[2:]: v for k, v in blocks.items() if k.startswith("m.")}
    v = {k[2:]: v for k, v in blocks.items() if k.startswith("v.")}
    with open(meta_path) as f:
        meta = json.load(f)
    state = TrainState(params=params, opt=AdamWState(m=m, v=v, step=meta["opt_step"]),
                       step=meta["step"])
    return state, rng_from_state(meta["rng"])


def latest_checkpoint_step(out_dir: str) -> int:
    steps = [int(name[5:11]) for name in os.listdir(out_dir)
             if name.startswith("ckpt_") and name.endswith(".bin")]
    if not steps:
        raise CheckpointError(f"no checkpoints under {out_dir}")
    return max(steps)


def cmd_train(cfg: RunConfig, data_dir: str, out_dir: str,
              resume: int | str | None = None, quiet: bool = False) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.json"))
    ds = _load_split(data_dir, "train")
    pool = build_task_pool(ds, cfg, cfg.data, cfg.codec)
    optim = cfg.train.optim

    if resume is not None:
        step0 = latest_checkpoint_step(out_dir) if resume == "latest" else int(resume)
        state, rng = load_train_state(out_dir, step0, cfg)
        metrics_f = open(os.path.join(out_dir, "metrics.jsonl"), "a")
    else:
        params = init(cfg.model)
        state = TrainState(params=params, opt=AdamWState.init(params))
        rng = np.random.default_rng([cfg.seed, 17])
        step0 = 0
        metrics_f = open(os.path.join(out_dir, "metrics.jsonl"), "w")

    t_start = time.perf_counter()
    last_loss = math.nan
    with metrics_f:
        for step in range(step0, optim.total_steps):
            seqs = draw_step_sequences(pool, state.params, cfg, cfg.layout, rng)
            loss, lr, grad_norm = step_on_sequences(
                seqs, state, cfg.model, optim, cfg.train.token_budget)
            last_loss = loss
            metrics_f.write(json.dumps(
                {"step": step, "loss": loss, "lr": lr, "grad_norm": grad_norm},
                sort_keys=True) + "\n")
            done = step + 1
            if done % cfg.train.checkpoint_every == 0 or done == optim.total_steps:
                metrics_f.flush()
                save_train_state(out_dir, done, state, rng, cfg)
            if not quiet and (done % 200 == 0 or done == optim.total_steps):
                rate = done - step0
                elapsed = time.perf_counter() - t_start
                print(f"step {done}/{optim.total_steps} loss {loss:.4f} "
                      f"lr {lr:.2e} ({rate / max(elapsed, 1e-9):.1f} steps/s)")
    return {"final_step": optim.total_steps, "final_loss": last_loss,
            "checkpoint": _state_paths(out_dir, optim.total_steps)[0]}


# --- sample ------------------------------------------------------------------

def write_ppm(path: str, frame: np.ndarray) -> None:
    """Binary portable pixmap from one (H, W, 3) float frame in [0, 1]."""
    u8 = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
    h, w, _ = u8.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(u8.tobytes())


def prompt_example(prompt: str, cfg: RunConfig) -> PreparedExample:
    """An example with a zero target placeholder built from a prompt string."""
    words = prompt.split()
    if not words or words[0] not in ("t2i", "t2v"):
        raise InputError(
            f"unknown prompt template {words[0] if words else ''!r}; use t2i or t2v"
        )
    ids = vocab.encode_words(words)
    from .synthdata import parse_instruction

    parse_instruction(ids)  # validates the template shape
    frames = 1 if words[0] == "t2i" else cfg.data.frames
    grid = (
        frames // cfg.codec.r_t,
        cfg.data.canvas // (2 * cfg.codec.r_h),
        cfg.data.canvas // (2 * cfg.codec.r_w),
    )
    n = grid[0] * grid[1] * grid[2]
    from .codec import VisionTokens

    placeholder = VisionTokens(
        tokens=np.zeros((n, 4 * cfg.codec.c_vae), dtype=np.float32), grid=grid)
    return PreparedExample(
        segments=[
            PreparedSegment(modality="text", role="context", ids=ids),
            PreparedSegment(modality="video" if frames > 1 else "image",
                            role="target", vision=placeholder),
        ],
        target_index=1,
    )


def generate_pixels(ex: PreparedExample, params, cfg: RunConfig, seed,
                    sampler_cfg=None):
    """Sample the target segment and decode it; returns (pixels, latent)."""
    rng = np.random.default_rng(seed)
    lat = flow_sample(ex, params, cfg.model, cfg.codec, cfg.layout,
                      sampler_cfg or cfg.sampler, rng)
    return np.clip(decode(lat, cfg.codec), 0.0, 1.0), lat


def cmd_sample(cfg: RunConfig, checkpoint: str, out_dir: str, seed: int,
               prompt: str | None = None, data_dir: str | None = None,
               split: str = "val", index: int | None = None,
               name: str = "sample") -> dict:
    os.makedirs(out_dir, exist_ok=True)
    params = load_checkpoint(checkpoint, cfg.model)
    if prompt is not None:
        ex = prompt_example(prompt, cfg)
    else:
        if data_dir is None or index is None:
            raise InputError("need either --prompt or --data with --index")
        ds = _load_split(data_dir, split)
        if not 0 <= index < len(ds.samples):
            raise InputError(f"sample index {index} outside split of {len(ds.samples)}")
        ex = prepare_example(ds.samples[index], cfg.codec)
    pixels, lat = generate_pixels(ex, params, cfg, seed=[seed, 23])

    frames = []
    for f in range(pixels.shape[0]):
        frame_path = os.path.join(out_dir, f"{name}_f{f:03d}.ppm")
        write_ppm(frame_path, pixels[f])
        frames.append(os.path.basename(frame_path))
    with open(os.path.join(out_dir, f"{name}.frames.txt"), "w") as f:
        f.write("\n".join(frames) + "\n")
    lat_path = os.path.join(out_dir, f"{name}.latent.bin")
    write_blocks(lat_path, config_digest(cfg.model), {"latent": lat.data})
    return {"frames": frames, "pixels": pixels}


# --- eval --------------------------------------------------------------------

def frame_consistency(pred: np.ndarray) -> float:
    """Mean PSNR between adjacent predicted frames (videos only)."""
    if pred.shape[0] < 2:
        return float("nan")
    vals = []
    for f in range(pred.shape[0] - 1):
        mse = float(np.mean((pred[f + 1].astype(np.float64) - pred[f].astype(np.float64)) ** 2))
        vals.append(psnr(mse))
    return float(np.mean(vals))


def evaluate_split(cfg: RunConfig, params, ds: Dataset, max_per_task: int,
                   seed: int, sampler_cfg=None, tasks=None):
    rows = []
    per_sample = []
    for task in tasks or TASKS:
        ids = ds.by_task.get(task, [])[:max_per_task]
        if not ids:
            continue
        metrics = []
        for idx in ids:
            s = ds.samples[idx]
            ex = prepare_example(s, cfg.codec)
            pred, _ = generate_pixels(ex, params, cfg, seed=[seed, 29, idx],
                                      sampler_cfg=sampler_cfg)
            gt = s.segments[s.target_index].pixels
            m = eval_edit(pred, gt, s.edit_mask)
            cons = frame_consistency(pred)
            metrics.append((m.edit_psnr, m.preserve_psnr, m.exact_outside, cons))
            per_sample.append({"task": task, "index": idx,
                               "edit_psnr": m.edit_psnr,
                               "preserve_psnr": m.preserve_psnr})
        edit = float(np.mean([m[0] for m in metrics]))
        preserve = float(np.mean([m[1] for m in metrics]))
        exact = float(np.mean([1.0 if m[2] else 0.0 for m in metrics]))
        cons_vals = [m[3] for m in metrics if not math.isnan(m[3])]
        rows.append({
            "task": task,
            "n": len(ids),
            "edit_psnr": edit,
            "preserve_psnr": preserve,
            "exact_preserve_rate": exact,
            "frame_consistency": float(np.mean(cons_vals)) if cons_vals else None,
        })
    if not rows:
        raise InputError("evaluation split is empty")
    return rows, per_sample


def cmd_eval(cfg: RunConfig, checkpoint: str, data_dir: str, out_path: str | None,
             split: str = "val", max_per_task: int = 4, seed: int = 0) -> list[dict]:
    params = load_checkpoint(checkpoint, cfg.model)
    ds = _load_split(data_dir, split)
    rows, _ = evaluate_split(cfg, params, ds, max_per_task, seed)
    lines = [json.dumps(r, sort_keys=True) for r in rows]
    if out_path:
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        with open(out_path, "w") as f:
            f.write("\n".join(lines) + "\n")
    header = f"{'task':<14} {'n':>3} {'edit_psnr':>10} {'preserve':>10} {'exact%':>7} {'consis':>8}"
    print(header)
    for r in rows:
        cons = f"{r['frame_consistency']:8.2f}" if r["frame_consistency"] is not None else "       -"
        print(f"{r['task']:<14} {r['n']:>3} {r['edit_psnr']:>10.2f} "
              f"{r['preserve_psnr']:>10.2f} {r['exact_preserve_rate'] * 100:>6.1f} {cons}")
    return rows


# --- ablate ------------------------------------------------------------------

DATA_GRID = [  # (image, video_gen, video_edit); full row last
    (True, True, False),
    (False, False, True),
    (True, False, True),
    (False, True, True),
    (True, True, True),
]
TRANSFER_CONTROL = (False, True, False)  # video-gen only: never saw any editing
DESIGN_GRID = [  # (interleave, seq_pe); full row last
    (True, False),
    (False, True),
    (True, True),
]


def ablation_run_config(cfg: RunConfig) -> RunConfig:
    ab = cfg.ablate
    return replace(
        cfg,
        data=replace(cfg.data, canvas=ab.canvas, frames=ab.frames,
                     train_counts=dict(ab.train_counts)),
        train=replace(cfg.train, token_budget=ab.token_budget,
                      checkpoint_every=ab.steps,
                      optim=replace(cfg.train.optim, peak_lr=ab.peak_lr,
                                    min_lr=ab.peak_lr / 8,
                                    warmup_steps=ab.warmup_steps,
                                    total_steps=ab.steps)),
    )


def _train_in_memory(cfg: RunConfig, ds: Dataset, rng_tag: int) -> TrainState:
    pool = build_task_pool(ds, cfg, cfg.data, cfg.codec)
    params = init(cfg.model)
    state = TrainState(params=params, opt=AdamWState.init(params))
    rng = np.random.default_rng([cfg.seed, 17, rng_tag])
    optim = cfg.train.optim
    for _ in range(optim.total_steps):
        seqs = draw_step_sequences(pool, state.params, cfg, cfg.layout, rng)
        step_on_sequences(seqs, state, cfg.model, optim, cfg.train.token_budget)
    return state


def _eval_video_edit(cfg: RunConfig, params, val: Dataset) -> dict:
    ab = cfg.ablate
    sampler_cfg = replace(cfg.sampler, steps=ab.sampler_steps)
    rows, per_sample = evaluate_split(
        cfg, params, val, max_per_task=ab.eval_samples, seed=cfg.seed,
        sampler_cfg=sampler_cfg, tasks=[t for t in VIDEO_EDIT_TASKS if val.by_task.get(t)])
    edit = float(np.mean([r["edit_psnr"] for r in rows]))
    preserve = float(np.mean([r["preserve_psnr"] for r in rows]))
    success = float(np.mean([
        1.0 if s["edit_psnr"] > ab.success_edit_db else 0.0 for s in per_sample]))
    return {"edit_psnr": edit, "preserve_psnr": preserve, "success_rate": success}


def cmd_ablate(cfg: RunConfig, out_dir: str, quiet: bool = False) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    run_cfg = ablation_run_config(cfg)
    data_dir = os.path.join(out_dir, "data")
    os.makedirs(data_dir, exist_ok=True)
    params = data_params(run_cfg)
    make_dataset(run_cfg.data.train_counts, cfg.seed, data_dir, params,
                 prefix="train", stream=ABLATE_TRAIN_STREAM)
    val_counts = {t: run_cfg.ablate.eval_samples for t in ("vid_recolor", "vid_remove")}
    make_dataset(val_counts, cfg.seed, data_dir, params,
                 prefix="val", stream=ABLATE_VAL_STREAM)
    train_ds = _load_split(data_dir, "train")
    val_ds = _load_split(data_dir, "val")

    results = {"data": [], "design": [], "transfer": {}}

    def one_run(tag, image, video_gen, video_edit, interleave, seq_pe):
        rc = replace(
            run_cfg,
            data=replace(run_cfg.data, include_image=image,
                         include_video_gen=video_gen, include_video_edit=video_edit),
            layout=replace(run_cfg.layout, interleave=interleave, use_seq_pe=seq_pe),
        )
        t0 = time.perf_counter()
        state = _train_in_memory(rc, train_ds, rng_tag=tag)
        metrics = _eval_video_edit(rc, state.params, val_ds)
        if not quiet:
            print(f"run {tag}: img={image} vgen={video_gen} vedit={video_edit} "
                  f"il={interleave} spe={seq_pe} -> edit {metrics['edit_psnr']:.2f} dB "
                  f"success {metrics['success_rate']:.2f} "
                  f"[{time.perf_counter() - t0:.0f}s]")
        return metrics

    full_metrics = None
    for i, (img, vgen, vedit) in enumerate(DATA_GRID):
        m = one_run(i, img, vgen, vedit, True, True)
        if (img, vgen, vedit) == (True, True, True):
            full_metrics = m
        results["data"].append({"image": img, "video_gen": vgen,
                                "video_edit": vedit, **m})
    ctrl = one_run(len(DATA_GRID), *TRANSFER_CONTROL, True, True)
    results["transfer"] = {
        "transfer_run": next(r for r in results["data"]
                             if (r["image"], r["video_gen"], r["video_edit"]) == (True, True, False)),
        "control_run": {"image": TRANSFER_CONTROL[0], "video_gen": TRANSFER_CONTROL[1],
                        "video_edit": TRANSFER_CONTROL[2], **ctrl},
    }
    for j, (il, spe) in enumerate(DESIGN_GRID):
        if (il, spe) == (True, True):
            m = full_metrics  # same configuration as the full data row
        else:
            m = one_run(100 + j, True, True, True, il, spe)
        results["design"].append({"interleave": il, "seq_pe": spe, **m})

    _write_ablation_report(results, out_dir)
    return results


def _fmt_flag(x: bool) -> str:
    return "yes" if x else "no "


def _write_ablation_report(results: dict, out_dir: str) -> None:
    with open(os.path.join(out_dir, "report.jsonl"), "w") as f:
        for row in results["data"]:
            f.write(json.dumps({"grid": "data", **row}, sort_keys=True) + "\n")
        for row in results["design"]:
            f.write(json.dumps({"grid": "design", **row}, sort_keys=True) + "\n")
        f.write(json.dumps({"grid": "transfer", **results["transfer"]}, sort_keys=True) + "\n")
    lines = []
    lines.append("Ablation: training data mix (held-out video editing)")
    lines.append(f"{'image':<7} {'vid-gen':<9} {'vid-edit':<9} "
                 f"{'edit_psnr':>10} {'preserve':>10} {'success':>8}")
    for r in results["data"]:
        lines.append(f"{_fmt_flag(r['image']):<7} {_fmt_flag(r['video_gen']):<9} "
                     f"{_fmt_flag(r['video_edit']):<9} {r['edit_psnr']:>10.2f} "
                     f"{r['preserve_psnr']:>10.2f} {r['success_rate']:>8.2f}")
    lines.append("")
    lines.append("Ablation: interleaved formation and sequential coordinate")
    lines.append(f"{'interleave':<11} {'seq-pe':<7} "
                 f"{'edit_psnr':>10} {'preserve':>10} {'success':>8}")
    for r in results["design"]:
        lines.append(f"{_fmt_flag(r['interleave']):<11} {_fmt_flag(r['seq_pe']):<7} "
                     f"{r['edit_psnr']:>10.2f} {r['preserve_psnr']:>10.2f} "
                     f"{r['success_rate']:>8.2f}")
    lines.append("")
    t = results["transfer"]
    lines.append("Transfer: video-edit success without video-edit training data")
    lines.append(f"  image+video-gen (transfer): {t['transfer_run']['success_rate']:.2f}")
    lines.append(f"  video-gen only (control):   {t['control_run']['success_rate']:.2f}")
    with open(os.path.join(out_dir, "report.txt"), "w") as f:
        f.write("\n".join(lines) + "\n")


# --- gradcheck / bench-pack --------------------------------------------------

def cmd_gradcheck(seed: int = 0) -> bool:
    t0 = time.perf_counter()
    reports = run_check(seed=seed)
    elapsed = time.perf_counter() - t0
    worst = reports[0]
    print(f"{'block':<24} {'rel_err':>10} {'analytic':>12}")
    for r in sorted(reports, key=lambda r: r.name):
        print(f"{r.name:<24} {r.rel_err:>10.2e} {r.analytic:>12.4e}")
    ok = worst.rel_err < TOLERANCE
    status = "PASS" if ok else "FAIL"
    print(f"{status}: worst block {worst.name} rel err {worst.rel_err:.2e} "
          f"(tolerance {TOLERANCE:.0e}, {elapsed:.1f}s)")
    return ok


def cmd_bench_pack(budget: int = 512, n_sequences: int = 2000) -> list[dict]:
    from .packing import pack as pack_fn
    from .seqlayout import Coords, UnifiedSequence

    def stub(n):
        zero = np.zeros(n, dtype=np.int64)
        return UnifiedSequence(
            tokens=np.zeros((n, 1), dtype=np.float32),
            coords=Coords(h=zero, w=zero.copy(), s=zero.copy(), tau=zero.copy()),
            spans=[], target_index=None)

    rows = []
    suites = [("uniform", s) for s in range(5)] + [("full", None)]
    for dist, s in suites:
        if dist == "uniform":
            rng = np.random.default_rng([97, s])
            lengths = [int(x) for x in rng.integers(16, budget + 1, size=n_sequences)]
        else:
            lengths = [budget] * 64
        seqs = [stub(n) for n in lengths]
        t0 = time.perf_counter()
        batches = pack_fn(seqs, budget)
        dt = time.perf_counter() - t0
        total = sum(lengths)
        lower = math.ceil(total / budget)
        rows.append({
            "dist": f"{dist}[{s}]" if s is not None else dist,
            "sequences": len(lengths),
            "bins": len(batches),
            "efficiency": total / (len(batches) * budget),
            "lower_bound_ratio": len(batches) / lower,
            "seq_per_s": len(lengths) / max(dt, 1e-9),
        })
    print(f"{'dist':<12} {'seqs':>6} {'bins':>6} {'eff':>7} {'lb_ratio':>9} {'seq/s':>10}")
    for r in rows:
        print(f"{r['dist']:<12} {r['sequences']:>6} {r['bins']:>6} "
              f"{r['efficiency']:>7.3f} {r['lower_bound_ratio']:>9.3f} "
              f"{r['seq_per_s']:>10.0f}")
    return rows
