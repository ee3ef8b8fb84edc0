import numpy as np
import pytest

from mixdit.errors import ConfigError, DimensionError
from mixdit.rope import RopeConfig, apply, build_tables, ntk_scale, pair_angles


FULL = RopeConfig(d_h=56, d_w=56, d_s=12, d_tau=4)
TOY = RopeConfig()  # 14/14/2/2


def test_table_lengths_paper_split():
    tables = build_tables(FULL)
    assert tuple(f.size for f in tables.freqs) == (28, 28, 6, 2)
    assert tables.head_dim == 128


def test_frequency_formula_d4():
    cfg = RopeConfig(d_h=4, d_w=4, d_s=4, d_tau=4, base=10000.0)
    tables = build_tables(cfg)
    for f in tables.freqs:
        assert np.allclose(f, [1.0, 10000.0 ** (-0.5)])


def test_frequencies_strictly_decreasing():
    tables = build_tables(FULL)
    for f in tables.freqs:
        assert np.all(np.diff(f) < 0) or f.size <= 1


def test_zero_coords_identity():
    tables = build_tables(TOY)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(32)
    assert np.array_equal(apply(v, (0, 0, 0, 0), tables), v)


def test_norm_preserved():
    tables = build_tables(TOY)
    rng = np.random.default_rng(1)
    for _ in range(50):
        v = rng.standard_normal(32).astype(np.float32)
        c = tuple(int(x) for x in rng.integers(0, 100, size=4))
        r = apply(v, c, tables)
        assert abs(np.linalg.norm(r) - np.linalg.norm(v)) < 1e-6 * max(1.0, np.linalg.norm(v))


def test_relative_shift_law_1000_draws():
    tables = build_tables(TOY)
    rng = np.random.default_rng(2)
    n = 1000
    q = rng.standard_normal((n, 32))
    k = rng.standard_normal((n, 32))
    c1 = rng.integers(0, 64, size=(n, 4))
    c2 = rng.integers(0, 64, size=(n, 4))
    delta = rng.integers(0, 32, size=(n, 4))
    logits = np.einsum(
        "nd,nd->n",
        apply(q, tuple(c1.T), tables),
        apply(k, tuple(c2.T), tables),
    )
    shifted = np.einsum(
        "nd,nd->n",
        apply(q, tuple((c1 + delta).T), tables),
        apply(k, tuple((c2 + delta).T), tables),
    )
    assert np.max(np.abs(logits - shifted)) < 1e-5


def test_axis_isolation():
    # zero coordinate on one axis leaves that axis's slice unrotated
    tables = build_tables(TOY)
    rng = np.random.default_rng(3)
    v = rng.standard_normal(32)
    r = apply(v, (0, 5, 7, 3), tables)  # h coordinate zero, others not
    assert np.array_equal(r[:14], v[:14])  # h slice untouched
    assert not np.allclose(r[14:28], v[14:28])  # w slice rotated
    # changing a foreign coordinate never touches another axis's slice
    r2 = apply(v, (0, 5, 7, 9), tables)
    assert np.array_equal(r2[:28], r[:28])


def test_apply_linear_in_vec():
    tables = build_tables(TOY)
    rng = np.random.default_rng(4)
    v1 = rng.standard_normal(32)
    v2 = rng.standard_normal(32)
    c = (3, 9, 2, 1)
    lhs = apply(2.5 * v1 - 0.5 * v2, c, tables)
    rhs = 2.5 * apply(v1, c, tables) - 0.5 * apply(v2, c, tables)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_width_mismatch_rejected():
    tables = build_tables(TOY)
    with pytest.raises(DimensionError):
        apply(np.zeros(31), (0, 0, 0, 0), tables)


def test_odd_axis_dim_rejected():
    with pytest.raises(ConfigError):
        RopeConfig(d_h=13, d_w=15, d_s=2, d_tau=2)


def test_ntk_scale_identity_and_formula():
    assert ntk_scale(10000.0, 64, 64, 8) == 10000.0
    assert ntk_scale(10000.0, 64, 32, 8) == 10000.0
    assert np.isclose(ntk_scale(10000.0, 64, 128, 8), 10000.0 * 2.0 ** (8.0 / 6.0))


def test_ntk_scale_singular_dim_rejected():
    with pytest.raises(ConfigError):
        ntk_scale(10000.0, 64, 128, 2)


def test_ntk_angle_bounded_sweep():
    # After scaling, the lowest frequency's angle at the extended window stays
    # within the pre-scaling angle at the trained window.
    rng = np.random.default_rng(5)
    for _ in range(50):
        d = 2 * int(rng.integers(2, 16))
        base = float(rng.uniform(100.0, 50000.0))
        trained = int(rng.integers(8, 512))
        target = trained * int(rng.integers(2, 8))
        scaled = ntk_scale(base, trained, target, d)
        assert scaled > base
        low_freq = lambda b: b ** (-(d - 2.0) / d)
        angle_before_at_trained = trained * low_freq(base)
        assert trained * low_freq(scaled) < angle_before_at_trained
        assert target * low_freq(scaled) <= angle_before_at_trained * (1 + 1e-9)


def test_build_tables_applies_ntk_per_axis():
    cfg = RopeConfig(
        d_h=8, d_w=8, d_s=8, d_tau=8,
        trained_extent=(16, 16, 16, 16),
        target_extent=(32, 16, 16, 16),
    )
    tables = build_tables(cfg)
    plain = build_tables(RopeConfig(d_h=8, d_w=8, d_s=8, d_tau=8))
    assert np.all(tables.freqs[0][1:] < plain.freqs[0][1:])
    for a in (1, 2, 3):
        assert np.array_equal(tables.freqs[a], plain.freqs[a])
    restricted = build_tables(
        RopeConfig(
            d_h=8, d_w=8, d_s=8, d_tau=8,
            trained_extent=(16, 16, 16, 16),
            target_extent=(32, 16, 16, 16),
            ntk_axes=(False, True, True, True),
        )
    )
    assert np.array_equal(restricted.freqs[0], plain.freqs[0])


def test_pair_angles_layout():
    tables = build_tables(TOY)
    theta = pair_angles(tables, (1, 0, 0, 0))
    assert theta.shape == (16,)
    assert np.allclose(theta[:7], tables.freqs[0])
    assert np.all(theta[7:] == 0.0)
