import yaml
import os
import logging
from pathlib import Path
from typing import Dict, Any, Optional, List
from dataclasses import dataclass, field, asdict, fields
from dotenv import load_dotenv

from .errors import ConfigError


@dataclass
class LoggingConfig:
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file: Optional[str] = "oisa.log"


@dataclass
class RuntimeConfig:
    seed: int = 0
    device: str = "cpu"
    output_dir: str = "runs"


@dataclass
class SynthConfig:
    height: int = 64
    width: int = 64
    min_duration: float = 2.0
    max_duration: float = 3.0
    fps_min: int = 3
    fps_max: int = 15
    sample_rate: int = 16000
    min_sprites: int = 2
    max_sprites: int = 4
    sprite_size_min: int = 6
    sprite_size_max: int = 10
    expression_budget: int = 12
    no_target_frac: float = 0.1
    multi_target_frac: float = 0.1
    preset: str = "random"  # random, crossing, sync
    speech_symbol_samples: int = 800
    payload_seconds: float = 1.0
    form_weights: Optional[List[float]] = None  # I..VIII, uniform when unset


@dataclass
class EncoderConfig:
    d: int = 64
    patch: int = 8
    height: int = 64
    width: int = 64
    audio_window: int = 800
    n_layers: int = 2
    n_heads: int = 4
    init_seed: int = 0

    @property
    def grid(self) -> int:
        return self.height // self.patch

    @property
    def L_v(self) -> int:
        return (self.height // self.patch) * (self.width // self.patch)


@dataclass
class LMConfig:
    d: int = 64
    n_layers: int = 2
    n_heads: int = 4
    vocab_size: int = 256
    context: int = 1280
    max_new_tokens: int = 24
    init_seed: int = 0
    d_q: Optional[int] = None

    @property
    def query_dim(self) -> int:
        return self.d_q or self.d


@dataclass
class MaskHeadConfig:
    n_blocks: int = 3
    channels: int = 64
    n_heads: int = 4
    ffn_dim: int = 128
    self_attention: bool = False
    threshold: float = 0.0
    pixel_stem: bool = True  # full-resolution detail features from the RGB frame


@dataclass
class AssemblyConfig:
    layout: str = "AVI_CONCAT"  # AVI, AVI_CONCAT, CONCAT, WEIGHTED_SUM, ATTENTION
    frame_separator: bool = True
    sparse_pool: int = 4
    system_prompt: str = "segment the referred object ."
    content_first: bool = True


@dataclass
class TrainConfig:
    stage: str = "tune"  # align, tune
    frames_train: int = 10
    dense_train: int = 4
    frames_infer: int = 32
    dense_infer: int = 4
    lambda_text: float = 1.0
    lambda_dice: float = 1.0
    lambda_bce: float = 1.0
    dice_eps: float = 1.0
    lr: float = 3e-4
    mask_lr_scale: float = 1.0  # mask decoder lr = lr * mask_lr_scale
    weight_decay: float = 0.0
    steps: int = 2000
    batch_size: int = 4
    grad_clip: float = 1.0
    regime: str = "joint"  # QP, OTSA, joint
    log_every: int = 50
    align_pairs: int = 50


@dataclass
class EvalConfig:
    tolerance_frac: float = 0.008
    tolerance_floor: float = 1.0
    meteor_alpha: float = 0.9
    meteor_beta: float = 3.0
    meteor_gamma: float = 0.5


@dataclass
class Config:
    logging: LoggingConfig = field(default_factory=LoggingConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    lm: LMConfig = field(default_factory=LMConfig)
    mask_head: MaskHeadConfig = field(default_factory=MaskHeadConfig)
    assembly: AssemblyConfig = field(default_factory=AssemblyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> "Config":
        """Check cross-section invariants, raising ConfigError on the first violation"""
        enc = self.encoder
        if enc.height % enc.patch or enc.width % enc.patch:
            raise ConfigError(f"frame size {enc.height}x{enc.width} not divisible by patch {enc.patch}")
        if enc.d % enc.n_heads:
            raise ConfigError(f"encoder d={enc.d} not divisible by n_heads={enc.n_heads}")
        if self.lm.d != enc.d:
            raise ConfigError(f"lm d={self.lm.d} must equal encoder d={enc.d}")
        if self.lm.d % self.lm.n_heads:
            raise ConfigError(f"lm d={self.lm.d} not divisible by n_heads={self.lm.n_heads}")
        if (self.synth.height, self.synth.width) != (enc.height, enc.width):
            raise ConfigError("synth canvas must match encoder frame size")
        if self.mask_head.self_attention:
            raise ConfigError("mask decoder blocks carry a single query; self_attention must be false")
        if self.mask_head.channels % self.mask_head.n_heads:
            raise ConfigError("mask head channels not divisible by n_heads")
        if self.train.dense_train > self.train.frames_train or self.train.dense_infer > self.train.frames_infer:
            raise ConfigError("dense frame count exceeds sampled frame count")
        if min(self.train.lambda_text, self.train.lambda_dice, self.train.lambda_bce) <= 0:
            raise ConfigError("loss weights must be positive")
        if self.train.lr <= 0 or self.train.mask_lr_scale <= 0:
            raise ConfigError("learning rates must be positive")
        if not 3 <= self.synth.fps_min <= self.synth.fps_max <= 15:
            raise ConfigError(f"fps range {self.synth.fps_min}:{self.synth.fps_max} outside [3,15]")
        if self.assembly.layout not in ("AVI", "AVI_CONCAT", "CONCAT", "WEIGHTED_SUM", "ATTENTION"):
            raise ConfigError(f"unknown layout {self.assembly.layout}")
        if self.train.regime not in ("QP", "OTSA", "joint"):
            raise ConfigError(f"unknown regime {self.train.regime}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


SECTIONS = {
    "logging": LoggingConfig,
    "runtime": RuntimeConfig,
    "synth": SynthConfig,
    "encoder": EncoderConfig,
    "lm": LMConfig,
    "mask_head": MaskHeadConfig,
    "assembly": AssemblyConfig,
    "train": TrainConfig,
    "eval": EvalConfig,
}


class ConfigManager:
    """Manages configuration loading from YAML files and environment variables"""

    def __init__(self, config_path: str = "config.yaml"):
        self.config_path = Path(config_path)
        load_dotenv()  # Load environment variables from .env file

    def load_config(self) -> Config:
        """Load configuration from YAML file and environment variables"""
        config_data = {}
        if self.config_path.exists():
            with open(self.config_path, 'r') as f:
                config_data = yaml.safe_load(f) or {}

        config_data = self._apply_env_overrides(config_data)
        return self.from_dict(config_data)

    @staticmethod
    def from_dict(config_data: Dict[str, Any]) -> Config:
        unknown = set(config_data) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"Unknown config sections: {sorted(unknown)}")

        sections = {}
        for name, section_cls in SECTIONS.items():
            try:
                sections[name] = section_cls(**(config_data.get(name) or {}))
            except TypeError as e:
                raise ConfigError(f"Invalid '{name}' section: {e}") from e

        return Config(**sections).validate()

    def _apply_env_overrides(self, config_data: Dict[str, Any]) -> Dict[str, Any]:
        """Apply environment variable overrides to config data"""
        env_mappings = {
            # Runtime configuration
            "OISA_SEED": ("runtime", "seed"),
            "OISA_DEVICE": ("runtime", "device"),
            "OISA_OUTPUT_DIR": ("runtime", "output_dir"),

            # Training configuration
            "OISA_TRAIN_STEPS": ("train", "steps"),
            "OISA_BATCH_SIZE": ("train", "batch_size"),
            "OISA_LR": ("train", "lr"),
            "OISA_REGIME": ("train", "regime"),

            # Model configuration
            "OISA_CONTEXT": ("lm", "context"),
            "OISA_LAYOUT": ("assembly", "layout"),

            # Logging configuration
            "LOG_LEVEL": ("logging", "level"),
            "LOG_FORMAT": ("logging", "format"),
            "LOG_FILE": ("logging", "file"),
        }

        for env_var, (section, key) in env_mappings.items():
            env_value = os.getenv(env_var)
            if env_value is not None:
                if section not in config_data or config_data[section] is None:
                    config_data[section] = {}

                # Type conversion from the dataclass field type
                field_types = {f.name: f.type for f in fields(SECTIONS[section])}
                field_type = str(field_types.get(key, "str"))
                if field_type in ("int", "<class 'int'>"):
                    config_data[section][key] = int(env_value)
                elif field_type in ("float", "<class 'float'>"):
                    config_data[section][key] = float(env_value)
                elif field_type in ("bool", "<class 'bool'>"):
                    config_data[section][key] = env_value.lower() in ("true", "1", "yes", "on")
                else:
                    config_data[section][key] = env_value

        return config_data

    def save_config(self, config: Config, path: Optional[Path] = None) -> Path:
        """Save configuration to YAML file"""
        target = Path(path) if path else self.config_path
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, 'w') as f:
            yaml.dump(config.to_dict(), f, default_flow_style=False, indent=2, sort_keys=True)
        return target


def setup_logging(config: LoggingConfig):
    """Setup logging configuration"""
    level = getattr(logging, config.level.upper(), logging.INFO)

    handlers = [logging.StreamHandler()]
    if config.file:
        handlers.append(logging.FileHandler(config.file))

    logging.basicConfig(level=level, format=config.format, handlers=handlers, force=True)

    # Set specific logger levels
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("PIL").setLevel(logging.WARNING)
