import pytest

from config import (Config, DevelopmentConfig, PipelineConfig, build_pipeline_config, get_config,
                    load_pipeline_config)
from src.exceptions import ConfigurationError, ParseError
from src.tracker import AdaptiveNoiseConfig, LifecycleConfig, MotionModelConfig


def _write(tmp_path, text):
    path = tmp_path / 'pipeline.ini'
    path.write_text(text)
    return path


def test_defaults():
    config = load_pipeline_config()
    assert config == PipelineConfig()
    assert config.features.n_max == 150 and config.features.d_min == 20.0
    assert config.tracker.noise.window_len == 10
    assert config.ablation.mask_enabled and config.ablation.sort_enabled


def test_load_sections(tmp_path):
    path = _write(tmp_path, """
# full pipeline, tighter budget
[features]
n_max = 80
d_min = 12.5

[tracker]
steepness = 0.2   # lambda
per_track = false

[ablation]
compensation_enabled = no
""")
    config = load_pipeline_config(path)
    assert config.features.n_max == 80 and config.features.d_min == 12.5
    assert config.tracker.noise.steepness == 0.2 and not config.tracker.noise.per_track
    assert not config.ablation.compensation_enabled
    assert config.masking.r_dilate == 5


@pytest.mark.parametrize('text', [
    '[features]\nn_maximum = 3\n',
    '[telemetry]\nenabled = true\n',
    '[features]\nn_max = 0\n',
    '[tracker]\nsteepness = fast\n',
    '[masking]\nr_erode = 4\nr_dilate = 3\n',
    '[masking]\nsegmenter = neural\n',
])
def test_invalid_values(tmp_path, text):
    with pytest.raises(ConfigurationError):
        load_pipeline_config(_write(tmp_path, text))


def test_parse_error_reports_line(tmp_path):
    path = _write(tmp_path, '[features]\nn_max = 10\nthis line is not a setting\n')
    with pytest.raises(ParseError) as excinfo:
        load_pipeline_config(path)
    assert excinfo.value.line_number == 3


def test_missing_section_header(tmp_path):
    with pytest.raises(ParseError):
        load_pipeline_config(_write(tmp_path, 'n_max = 10\n'))


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        load_pipeline_config(tmp_path / 'absent.ini')


def test_switch_and_budget_copies():
    base = build_pipeline_config({})
    off = base.with_switches(mask_enabled=False)
    assert not off.ablation.mask_enabled and base.ablation.mask_enabled
    resized = base.with_budget(50, 10.0)
    assert resized.features.budget().n_max == 50 and resized.features.budget().d_min == 10.0


def test_tracker_settings_build_models():
    settings = build_pipeline_config({'tracker': {'window_len': 4, 'max_age': 2, 'r_init': 3.0}}).tracker
    assert settings.noise.window_len == 4 and settings.noise.steepness == AdaptiveNoiseConfig().steepness
    assert settings.lifecycle.max_age == 2
    assert settings.motion.model().R_init[0, 0] == 3.0


def test_tracker_defaults_come_from_the_tracker():
    settings = PipelineConfig().tracker
    assert settings.noise == AdaptiveNoiseConfig()
    assert settings.lifecycle == LifecycleConfig()
    assert settings.motion == MotionModelConfig()


def test_tracker_flat_keys_merge_into_groups(tmp_path):
    path = _write(tmp_path, '[tracker]\nmagnitude = 4.0\nfloor_eps = 0.5\nmin_hits = 1\nq_velocity = 0.5\n')
    settings = load_pipeline_config(path).tracker
    assert settings.noise.magnitude == 4.0 and settings.noise.floor_eps == 0.5
    assert settings.lifecycle.min_hits == 1 and settings.motion.q_velocity == 0.5
    with pytest.raises(ConfigurationError):
        load_pipeline_config(_write(tmp_path, '[tracker]\nmagnitude = 0.5\nfloor_eps = 0.5\n'))


def test_environment_config():
    assert get_config('development') is DevelopmentConfig
    assert get_config('unknown') is Config
    assert isinstance(Config.validate_config(), bool)
