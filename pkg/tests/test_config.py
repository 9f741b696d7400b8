import pytest

from radodom.config import OdomConfig, parse_kv_text
from radodom.errors import ConfigError


def test_defaults_round_trip_through_text():
    cfg = OdomConfig()
    assert OdomConfig.from_text(cfg.to_text()) == cfg


def test_derived_radii():
    cfg = OdomConfig(voxel_size=2.0)
    assert cfg.neighborhood_radius == 2.0
    assert cfg.association_radius == 4.0
    assert cfg.association_radius_min == 1.0
    assert OdomConfig(assoc_radius=0.3).association_radius_min == 0.3


def test_parse_values_and_comments():
    cfg = OdomConfig.from_text("""
        # comment
        voxel_size = 0.5   # trailing comment
        w_thre = auto
        max_outer_iters = 12
        remove_dynamic = false
        fit_mode = fixed_axis
        doppler_sign = -1
    """)
    assert cfg.voxel_size == 0.5 and cfg.w_thre is None
    assert cfg.max_outer_iters == 12 and isinstance(cfg.max_outer_iters, int)
    assert cfg.remove_dynamic is False and cfg.fit_mode == "fixed_axis" and cfg.doppler_sign == -1


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="voxelsize"):
        OdomConfig.from_text("voxelsize = 1\n")


@pytest.mark.parametrize("text", [
    "voxel_size = -1",
    "voxel_size = abc",
    "max_gn_iters = 2.5",
    "doppler_sign = 2",
    "z_thre = 1.5",
    "fit_mode = circle",
    "remove_dynamic = maybe",
    "voxel_size 1",
    "voxel_size = 1\nvoxel_size = 2",
    "assoc_shrink = 0",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        OdomConfig.from_text(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        OdomConfig.from_file(tmp_path / "missing.cfg")


def test_repeatable_keys():
    entries = parse_kv_text("patch = 1\npatch = 2\n", repeatable=("patch",))
    assert [e[1] for e in entries] == ["1", "2"]
