import pytest

from mixdit.config import (
    DataConfig,
    RunConfig,
    apply_overrides,
    from_dict,
    parse,
    serialize,
    to_dict,
)
from mixdit.errors import ConfigError


def test_round_trip_default():
    cfg = RunConfig()
    assert parse(serialize(cfg)) == cfg


def test_round_trip_modified():
    cfg = apply_overrides(RunConfig(), [
        ("seed", "7"),
        ("model.layers", "3"),
        ("model.rope.trained_extent", "32,32,32,8"),
        ("data.weights", "t2i=3.5,vid_add=0.25"),
        ("layout.seq_mode", "per_segment"),
        ("train.optim.peak_lr", "0.004"),
    ])
    again = parse(serialize(cfg))
    assert again == cfg
    assert again.model.rope.trained_extent == (32, 32, 32, 8)
    assert again.data.weights["t2i"] == 3.5
    assert again.layout.seq_mode == "per_segment"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), [("model.depth", "3")])
    with pytest.raises(ConfigError):
        from_dict(RunConfig, {"modle": {}})


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), [("model.layers", "deep")])
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), [("layout.interleave", "maybe")])


def test_consistency_validation():
    from mixdit.errors import MixditError

    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), [("model.vision_width", "24")])
    with pytest.raises(MixditError):  # c_vae and strides no longer match
        apply_overrides(RunConfig(), [("codec.r_h", "1")])


def test_included_tasks_toggles():
    d = DataConfig()
    assert set(d.included_tasks()) == {
        "t2i", "t2v", "img_recolor", "img_remove", "img_add",
        "vid_recolor", "vid_remove", "vid_add", "propagate",
    }
    no_vid_edit = DataConfig(include_video_edit=False)
    assert set(no_vid_edit.included_tasks()) == {
        "t2i", "t2v", "img_recolor", "img_remove", "img_add"}
    only_video = DataConfig(include_image=False, include_video_edit=False)
    assert only_video.included_tasks() == ["t2v"]


def test_to_dict_tuples_as_lists():
    d = to_dict(RunConfig())
    assert d["model"]["rope"]["d_h"] == 14
    assert isinstance(d["model"]["rope"]["trained_extent"], list)
