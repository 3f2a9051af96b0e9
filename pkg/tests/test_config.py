"""Pipeline configuration: defaults, validation, TOML round trip."""

import pytest

from artifact.config import (
    PipelineConfig,
    dump_config,
    load_config,
    loads_config,
    save_config,
)
from artifact.errors import ConfigError


class TestDefaults:
    def test_defaults_validate(self):
        PipelineConfig().validate()

    def test_default_seed_operating_points(self):
        cfg = PipelineConfig()
        assert cfg.run.seeds == [8, 11]
        assert cfg.canny.sigma == 1.4
        assert cfg.detector.confidence_threshold == 0.5

    def test_scale_rows_in_unit_interval(self):
        cfg = PipelineConfig()
        for row in (cfg.scales.cloth_design, cfg.scales.deformation, cfg.scales.color_texture):
            for v in (row.canny, row.pose, row.segmentation, row.ip_adapter):
                assert 0.0 <= v <= 1.0


class TestValidation:
    def test_bad_canny_thresholds(self):
        cfg = PipelineConfig()
        cfg.canny.low = 0.5
        cfg.canny.high = 0.1
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_bad_sigma(self):
        cfg = PipelineConfig()
        cfg.canny.sigma = 0.0
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_bad_scale_value(self):
        cfg = PipelineConfig()
        cfg.scales.deformation.pose = 1.5
        with pytest.raises(ConfigError):
            cfg.validate()


class TestSerialization:
    def test_dump_load_dump_byte_identical(self):
        text1 = dump_config(PipelineConfig())
        text2 = dump_config(loads_config(text1))
        assert text1 == text2

    def test_round_trip_preserves_values(self):
        cfg = PipelineConfig()
        cfg.detector.palette_tau = 42.5
        cfg.run.seeds = [3, 5, 7]
        back = loads_config(dump_config(cfg))
        assert back.detector.palette_tau == 42.5
        assert back.run.seeds == [3, 5, 7]

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            loads_config("[detector]\nnot_a_real_knob = 1\n")

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "pipeline.toml"
        cfg = PipelineConfig()
        cfg.backend.endpoint = "http://127.0.0.1:7777"
        save_config(cfg, path)
        assert load_config(path).backend.endpoint == "http://127.0.0.1:7777"
