"""Run configuration: one flat, strictly-validated document per run.

A ``RunConfig`` is the union of the data spec, the model shape, and the
optimizer/schedule settings, so a run directory can carry one JSON file
that reproduces it exactly. Every field has a default, and the defaults
ARE the toy reference run; unknown keys are rejected by name rather than
ignored, so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .dataset import SynthSpec
from .errors import ConfigError
from .model import ModelConfig
from .training import TrainSettings

__all__ = ["RunConfig", "load_config", "DEFAULT_DATA_DIR", "DEFAULT_OUT_DIR"]

DEFAULT_DATA_DIR = "data/synth"
DEFAULT_OUT_DIR = "runs/ref"


@dataclass
class RunConfig:
    # data
    n_classes: int = 6
    samples_per_class: int = 32
    frames: int = 8
    channels: int = 1
    height: int = 16
    width: int = 16
    noise_sigma: float = 0.05
    shuffle_frames: bool = False
    # model
    patch_h: int = 4
    patch_w: int = 4
    d_model: int = 32
    d_state: int = 8
    n_layers: int = 4
    d_ifg: int = 16
    d_ifs: int = 8
    n_ifs: int = 3
    regenerate_depth: int | None = None
    strategy: str = "last_forward"
    use_ifg: bool = True
    use_ifs: bool = True
    use_entropy_gate: bool = True
    use_variance_gate: bool = True
    beta_init: float = 0.1
    # optimizer / schedule
    epochs: int = 50
    batch_size: int = 8
    peak_lr: float = 3e-3
    min_lr: float = 0.0
    warmup_epochs: int = 5
    weight_decay: float = 0.05
    clip_norm: float = 1.0
    policy: str = "full"
    # run plumbing
    seed: int = 0
    data_dir: str = DEFAULT_DATA_DIR
    out: str = DEFAULT_OUT_DIR

    # ------------------------------------------------------------- builders

    def synth_spec(self) -> SynthSpec:
        return SynthSpec(
            n_classes=self.n_classes,
            samples_per_class=self.samples_per_class,
            frames=self.frames,
            channels=self.channels,
            height=self.height,
            width=self.width,
            noise_sigma=self.noise_sigma,
            seed=self.seed,
            shuffle_frames=self.shuffle_frames,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            frames=self.frames,
            channels=self.channels,
            height=self.height,
            width=self.width,
            patch_h=self.patch_h,
            patch_w=self.patch_w,
            d_model=self.d_model,
            d_state=self.d_state,
            n_layers=self.n_layers,
            d_ifg=self.d_ifg,
            d_ifs=self.d_ifs,
            n_ifs=self.n_ifs,
            regenerate_depth=self.regenerate_depth,
            strategy=self.strategy,
            n_classes=self.n_classes,
            use_ifg=self.use_ifg,
            use_ifs=self.use_ifs,
            use_entropy_gate=self.use_entropy_gate,
            use_variance_gate=self.use_variance_gate,
            beta_init=self.beta_init,
        )

    def train_settings(self) -> TrainSettings:
        return TrainSettings(
            epochs=self.epochs,
            batch_size=self.batch_size,
            peak_lr=self.peak_lr,
            min_lr=self.min_lr,
            warmup_epochs=self.warmup_epochs,
            weight_decay=self.weight_decay,
            clip_norm=self.clip_norm,
            policy=self.policy,
            shuffle_seed=self.seed,
        )

    # ----------------------------------------------------------- validation

    def validate(self) -> "RunConfig":
        """Cross-check by building every sub-config; raises ConfigError."""
        self.synth_spec()
        self.model_config().validate()
        self.train_settings()
        return self

    # -------------------------------------------------------------- (de)ser

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError(f"config must be a JSON object, got {type(doc).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_config(path) -> RunConfig:
    """Parse and validate a JSON config file; empty object = reference run."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"config file {path} is not valid JSON: {err}")
    return RunConfig.from_dict(doc)
