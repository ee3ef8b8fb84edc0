import numpy as np
import pytest

from mixdit.codec import VisionTokens
from mixdit.errors import ContractError, DimensionError, InputError
from mixdit.seqlayout import (
    Coords,
    LayoutConfig,
    Segment,
    TextTokens,
    assemble,
    assign_coords,
    embed_text,
    interleave_order,
    project,
)

C_TEXT, C_VISION, C = 6, 8, 10


def tiny_params(rng=None, dtype=np.float64):
    rng = rng or np.random.default_rng(0)
    return {
        "embed.table": rng.standard_normal((16, C_TEXT)).astype(dtype),
        "proj.text.w": rng.standard_normal((C_TEXT, C)).astype(dtype),
        "proj.text.b": rng.standard_normal(C).astype(dtype),
        "proj.vision.w": rng.standard_normal((C_VISION, C)).astype(dtype),
        "proj.vision.b": rng.standard_normal(C).astype(dtype),
        "boundary.start": rng.standard_normal(C).astype(dtype),
        "boundary.end": rng.standard_normal(C).astype(dtype),
    }


def text_seg(params, ids, role="context"):
    return Segment(modality="text", role=role, payload=embed_text(ids, params))


def vision_seg(grid, role="context", modality=None, rng=None, dtype=np.float64):
    rng = rng or np.random.default_rng(1)
    t, hh, ww = grid
    tokens = rng.standard_normal((t * hh * ww, C_VISION)).astype(dtype)
    modality = modality or ("image" if t == 1 else "video")
    return Segment(modality=modality, role=role, payload=VisionTokens(tokens, grid))


def test_embed_text_basic():
    p = tiny_params()
    tt = embed_text([5, 9, 2], p)
    assert tt.embeddings.shape == (3, C_TEXT)
    tt2 = embed_text([5, 9, 2, 5], p)
    assert np.array_equal(tt2.embeddings[0], tt2.embeddings[3])
    assert np.array_equal(tt.embeddings, embed_text([5, 9, 2], p).embeddings)


def test_embed_text_rejects():
    p = tiny_params()
    with pytest.raises(InputError):
        embed_text([], p)
    with pytest.raises(InputError, match="position 1"):
        embed_text([3, 99], p)


def test_project_widths_and_linearity():
    p = tiny_params()
    seg = vision_seg((1, 2, 2))
    out = project(seg, p)
    assert out.shape == (4, C)
    zero = Segment(
        modality="image", role="context",
        payload=VisionTokens(np.zeros((4, C_VISION)), (1, 2, 2)),
    )
    p0 = dict(p, **{"proj.vision.b": np.zeros(C)})
    assert np.all(project(zero, p0) == 0.0)


def test_project_identity_square():
    p = tiny_params()
    p = dict(p)
    p["proj.text.w"] = np.eye(C_TEXT, C_TEXT)
    p["proj.text.b"] = np.zeros(C_TEXT)
    tt = embed_text([1, 2, 3], p)
    seg = Segment(modality="text", role="context", payload=tt)
    assert np.array_equal(project(seg, p), tt.embeddings)


def test_project_width_mismatch():
    p = tiny_params()
    bad = Segment(
        modality="image", role="context",
        payload=VisionTokens(np.zeros((4, C_VISION + 1)), (1, 2, 2)),
    )
    with pytest.raises(DimensionError):
        project(bad, p)


def test_project_gradient_matches_finite_differences():
    # d sum(project) / d W against central differences, float64, step 1e-3
    p = tiny_params()
    seg = vision_seg((1, 2, 2))
    raw = seg.payload.tokens
    analytic = raw.T @ np.ones((raw.shape[0], C))
    eps = 1e-3
    rng = np.random.default_rng(2)
    for _ in range(10):
        i, j = rng.integers(C_VISION), rng.integers(C)
        for sign in (+1, -1):
            q = dict(p)
            w = p["proj.vision.w"].copy()
            w[i, j] += sign * eps
            q["proj.vision.w"] = w
            if sign > 0:
                hi = project(seg, q).sum()
            else:
                lo = project(seg, q).sum()
        fd = (hi - lo) / (2 * eps)
        assert abs(fd - analytic[i, j]) <= 1e-4 * max(1.0, abs(analytic[i, j]))


def test_assemble_lengths_and_spans():
    p = tiny_params()
    seq = assemble([text_seg(p, [1, 2, 3]), vision_seg((1, 2, 2))], p)
    assert seq.length == 3 + 1 + 4 + 1

    seq2 = assemble([vision_seg((1, 2, 2))], p)
    assert seq2.length == 6
    assert (seq2.spans[0].start, seq2.spans[0].end) == (1, 5)
    assert (seq2.spans[0].bound_start, seq2.spans[0].bound_end) == (0, 5)

    seq3 = assemble(
        [text_seg(p, [1, 2]), vision_seg((2, 2, 2)), text_seg(p, [3])], p
    )
    assert seq3.length == 2 + 1 + 8 + 1 + 1
    starts = [sp.start for sp in seq3.spans]
    assert starts == sorted(starts) and len(seq3.spans) == 3


def test_assemble_boundary_rows_and_projection():
    p = tiny_params()
    vis = vision_seg((1, 2, 2))
    seq = assemble([vis], p)
    assert np.array_equal(seq.tokens[0], p["boundary.start"])
    assert np.array_equal(seq.tokens[5], p["boundary.end"])
    assert np.allclose(seq.tokens[1:5], project(vis, p))


def test_assemble_rejects():
    p = tiny_params()
    with pytest.raises(InputError):
        assemble([], p)
    with pytest.raises(ContractError):
        assemble([text_seg(p, [1], role="target")], p)
    with pytest.raises(ContractError):
        assemble([vision_seg((1, 2, 2), role="target"),
                  vision_seg((1, 2, 2), role="target")], p)


def test_coords_text_then_video_spec_example():
    p = tiny_params()
    segs = [text_seg(p, [1, 2, 3]), vision_seg((2, 2, 2))]
    coords, rows = assign_coords(segs, LayoutConfig())
    assert list(coords.s[:3]) == [0, 1, 2]
    start, end, b0, b1 = rows[1]
    frame0 = coords.s[start : start + 4]
    frame1 = coords.s[start + 4 : end]
    assert np.all(frame0 == 3) and np.all(frame1 == 4)
    assert coords.s[b0] == 3 and coords.s[b1] == 4
    assert coords.h[b0] == coords.w[b0] == coords.tau[b0] == 0


def test_coords_pixel_stride_rule():
    # grid cell (row 2, col 3) with stride 4 -> h = 8, w = 12, tau = 1 on frame 1
    p = tiny_params()
    seg = vision_seg((2, 4, 4))
    coords, rows = assign_coords([seg], LayoutConfig(stride_h=4, stride_w=4))
    start = rows[0][0]
    idx = start + 1 * 16 + 2 * 4 + 3
    assert coords.h[idx] == 8 and coords.w[idx] == 12 and coords.tau[idx] == 1


def test_coords_lone_image():
    p = tiny_params()
    coords, rows = assign_coords([vision_seg((1, 2, 3))], LayoutConfig())
    start, end, _, _ = rows[0]
    assert np.all(coords.tau[start:end] == 0)
    assert np.all(coords.s[start:end] == 0)
    assert list(coords.h[start : start + 3]) == [0, 0, 0]
    assert list(coords.w[start : start + 3]) == [0, 4, 8]


def test_coords_per_segment_mode():
    p = tiny_params()
    segs = [text_seg(p, [1]), vision_seg((3, 2, 2)), text_seg(p, [2])]
    coords, rows = assign_coords(segs, LayoutConfig(seq_mode="per_segment"))
    start, end, b0, b1 = rows[1]
    assert np.all(coords.s[start:end] == 1)
    assert coords.s[b0] == 1 and coords.s[b1] == 1
    assert coords.s[rows[2][0]] == 2
    assert list(coords.tau[start:end:4]) == [0, 1, 2]


def test_video_triples_enumerate_grid():
    p = tiny_params()
    grid = (3, 2, 4)
    seg = vision_seg(grid)
    coords, rows = assign_coords([text_seg(p, [4, 5]), seg], LayoutConfig())
    start, end, _, _ = rows[1]
    triples = {
        (int(coords.tau[i]), int(coords.h[i]), int(coords.w[i]))
        for i in range(start, end)
    }
    expected = {
        (f, r * 4, c * 4) for f in range(3) for r in range(2) for c in range(4)
    }
    assert triples == expected and end - start == len(expected)


def test_permuting_context_changes_only_s():
    p = tiny_params()
    a = vision_seg((2, 2, 2), rng=np.random.default_rng(10))
    b = vision_seg((1, 2, 2), rng=np.random.default_rng(11))
    txt = text_seg(p, [1, 2])
    c1, r1 = assign_coords([txt, a, b], LayoutConfig())
    c2, r2 = assign_coords([txt, b, a], LayoutConfig())

    def per_segment(coords, rows, i):
        s, e, b0, b1 = rows[i]
        lo = b0 if b0 is not None else s
        hi = (b1 + 1) if b1 is not None else e
        return coords.take(slice(lo, hi))

    # segment `a` keeps its h/w/tau wherever it sits in the order
    a1, a2 = per_segment(c1, r1, 1), per_segment(c2, r2, 2)
    assert np.array_equal(a1.h, a2.h)
    assert np.array_equal(a1.w, a2.w)
    assert np.array_equal(a1.tau, a2.tau)
    assert not np.array_equal(a1.s, a2.s)


def test_token_count_law_random_segments():
    p = tiny_params()
    rng = np.random.default_rng(12)
    for trial in range(20):
        segs = []
        expected = 0
        for _ in range(int(rng.integers(1, 6))):
            if rng.random() < 0.4:
                n = int(rng.integers(1, 5))
                segs.append(text_seg(p, list(rng.integers(0, 16, size=n))))
                expected += n
            else:
                grid = (int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 4)))
                segs.append(vision_seg(grid, rng=rng))
                expected += grid[0] * grid[1] * grid[2] + 2
        seq = assemble(segs, p)
        assert seq.length == expected


def test_assemble_deterministic():
    p = tiny_params()
    segs = [text_seg(p, [1, 2]), vision_seg((2, 2, 2), rng=np.random.default_rng(3))]
    s1 = assemble(segs, p)
    s2 = assemble(segs, p)
    assert np.array_equal(s1.tokens, s2.tokens)
    assert np.array_equal(s1.coords.s, s2.coords.s)


def test_no_seq_pe_zeroes_s():
    p = tiny_params()
    coords, _ = assign_coords(
        [text_seg(p, [1, 2]), vision_seg((2, 2, 2))], LayoutConfig(use_seq_pe=False)
    )
    assert np.all(coords.s == 0)


def test_interleave_order():
    p = tiny_params()
    v1, v2 = vision_seg((1, 2, 2)), vision_seg((2, 2, 2), role="target")
    t1 = text_seg(p, [1])
    segs = [v1, t1, v2]
    assert interleave_order(segs, True) == segs
    flat = interleave_order(segs, False)
    assert [s.modality for s in flat] == ["text", "image", "video"]
    assert flat[1] is v1 and flat[2] is v2
