import configparser
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.exceptions import ConfigurationError, ParseError
from src.features import FeatureBudget
from src.masking import SEGMENTER_NAMES
from src.metrics import DEFAULT_EPSILON
from src.tracker import AdaptiveNoiseConfig, LifecycleConfig, MotionModelConfig
from src.utils import LOG_LEVELS

load_dotenv()


class Config:
    """Environment configuration"""

    LOG_LEVEL = os.getenv('ADUGS_LOG', 'warn')
    OUTPUT_DIR = os.getenv('ADUGS_OUTPUT_DIR', 'results')
    MAX_WORKERS = int(os.getenv('ADUGS_MAX_WORKERS', '1'))

    @classmethod
    def validate_config(cls) -> bool:
        """Validate environment settings"""
        return cls.LOG_LEVEL.strip().lower() in LOG_LEVELS


class DevelopmentConfig(Config):
    LOG_LEVEL = os.getenv('ADUGS_LOG', 'debug')


class ProductionConfig(Config):
    LOG_LEVEL = os.getenv('ADUGS_LOG', 'warn')


config_map = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'default': Config,
}


def get_config(env: str = None) -> Config:
    """Get configuration for environment"""
    env = env or os.getenv('ENVIRONMENT', 'default')
    return config_map.get(env, Config)


# --- Pipeline configuration ----------------------------------------------------

class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class TrackerSettings(_Section):
    """
    Tracker parameters grouped as the tracker takes them. Config files list
    them flat under [tracker]; each key is routed to the group that owns it.
    """

    noise: AdaptiveNoiseConfig = AdaptiveNoiseConfig()
    lifecycle: LifecycleConfig = LifecycleConfig()
    motion: MotionModelConfig = MotionModelConfig()

    @model_validator(mode='before')
    @classmethod
    def _group_flat_keys(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        for group, model in (('noise', AdaptiveNoiseConfig), ('lifecycle', LifecycleConfig),
                             ('motion', MotionModelConfig)):
            flat = {key: data.pop(key) for key in list(data) if key in model.model_fields}
            if not flat:
                continue
            nested = data.get(group, {})
            if isinstance(nested, BaseModel):
                nested = nested.model_dump()
            data[group] = {**nested, **flat}
        return data


class MaskingSettings(_Section):
    segmenter: str = 'noisy-oracle'
    r_erode: int = Field(2, ge=0)
    r_dilate: int = Field(5, ge=1)
    refine: bool = True

    @model_validator(mode='after')
    def _check(self) -> 'MaskingSettings':
        if self.segmenter not in SEGMENTER_NAMES:
            raise ValueError(f"segmenter must be one of {', '.join(SEGMENTER_NAMES)}")
        if self.r_dilate <= self.r_erode:
            raise ValueError('r_dilate must be greater than r_erode')
        return self


class FeatureSettings(_Section):
    n_max: int = Field(150, ge=1)
    d_min: float = Field(20.0, ge=0)
    sigma_track: Optional[float] = Field(None, ge=0)
    p_loss: Optional[float] = Field(None, ge=0, le=1)

    def budget(self) -> FeatureBudget:
        return FeatureBudget(n_max=self.n_max, d_min=self.d_min)


class OdometrySettings(_Section):
    trimmed: bool = False


class MetricsSettings(_Section):
    epsilon: float = Field(DEFAULT_EPSILON, gt=0)
    with_scale: bool = False


class AblationSettings(_Section):
    mask_enabled: bool = True
    adaptive_r_enabled: bool = True
    compensation_enabled: bool = True
    sort_enabled: bool = True


class PipelineConfig(_Section):
    tracker: TrackerSettings = TrackerSettings()
    masking: MaskingSettings = MaskingSettings()
    features: FeatureSettings = FeatureSettings()
    odometry: OdometrySettings = OdometrySettings()
    metrics: MetricsSettings = MetricsSettings()
    ablation: AblationSettings = AblationSettings()

    def with_switches(self, **switches: bool) -> 'PipelineConfig':
        """Copy with some ablation switches replaced"""
        ablation = self.ablation.model_copy(update=switches)
        return self.model_copy(update={'ablation': ablation})

    def with_budget(self, n_max: int, d_min: float) -> 'PipelineConfig':
        features = self.features.model_copy(update={'n_max': n_max, 'd_min': d_min})
        return self.model_copy(update={'features': features})


def build_pipeline_config(sections: Dict[str, Dict[str, Any]]) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(sections)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid pipeline configuration: {e}") from e


def load_pipeline_config(path: Optional[Union[str, Path]] = None) -> PipelineConfig:
    """Read `[section]` / `key = value` text; unknown sections or keys are errors"""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    parser = configparser.ConfigParser(comment_prefixes=('#', ';'), inline_comment_prefixes=('#',),
                                       interpolation=None, default_section='__none__')
    parser.optionxform = str
    try:
        with open(path, encoding='utf-8') as handle:
            parser.read_file(handle)
    except OSError as e:
        raise ParseError(f"Cannot read config: {e}", 0, str(path)) from e
    except configparser.Error as e:
        line_number = getattr(e, 'lineno', 0) or 0
        if not line_number and getattr(e, 'errors', None):
            line_number = e.errors[0][0]
        raise ParseError(str(e).splitlines()[0], line_number, str(path)) from e

    sections = {name: dict(parser.items(name)) for name in parser.sections()}
    return build_pipeline_config(sections)
