"""Estimator facade: fit/predict video classification in one object.

``VideoPromptClassifier`` wraps model construction, the training loop, and
prediction behind the familiar estimator protocol — constructor stores
hyperparameters verbatim, ``fit`` learns from arrays and returns self,
fitted state lives in trailing-underscore attributes, ``get_params`` /
``set_params`` round-trip the constructor arguments. No external ML
framework is involved; the protocol is implemented directly.
"""

from __future__ import annotations

import inspect

import numpy as np

from .errors import ConfigError, DimensionError, NotFittedError
from .model import ModelConfig, VideoModel, build_model
from .training import TrainSettings, evaluate, train

__all__ = ["VideoPromptClassifier"]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


class VideoPromptClassifier:
    """Selective state-space video classifier with trainable prompt modules.

    Parameters mirror the model/optimizer configuration; video geometry
    (frames, channels, height, width) is inferred from the data at fit
    time. ``policy`` picks what trains: "full" (the default) trains
    everything, "ssp_peft" adapts only the prompt modules and head over a
    frozen backbone, "head_only" trains the classifier head alone.
    """

    def __init__(self, *, patch_h: int = 4, patch_w: int = 4, d_model: int = 32,
                 d_state: int = 8, n_layers: int = 4, d_ifg: int = 16,
                 d_ifs: int = 8, n_ifs: int = 3, regenerate_depth: int | None = None,
                 strategy: str = "last_forward", use_ifg: bool = True,
                 use_ifs: bool = True, use_entropy_gate: bool = True,
                 use_variance_gate: bool = True, beta_init: float = 0.1,
                 epochs: int = 50, batch_size: int = 8, peak_lr: float = 3e-3,
                 min_lr: float = 0.0, warmup_epochs: int = 5,
                 weight_decay: float = 0.05, clip_norm: float = 1.0,
                 policy: str = "full", seed: int = 0):
        self.patch_h = patch_h
        self.patch_w = patch_w
        self.d_model = d_model
        self.d_state = d_state
        self.n_layers = n_layers
        self.d_ifg = d_ifg
        self.d_ifs = d_ifs
        self.n_ifs = n_ifs
        self.regenerate_depth = regenerate_depth
        self.strategy = strategy
        self.use_ifg = use_ifg
        self.use_ifs = use_ifs
        self.use_entropy_gate = use_entropy_gate
        self.use_variance_gate = use_variance_gate
        self.beta_init = beta_init
        self.epochs = epochs
        self.batch_size = batch_size
        self.peak_lr = peak_lr
        self.min_lr = min_lr
        self.warmup_epochs = warmup_epochs
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.policy = policy
        self.seed = seed

    # ------------------------------------------------------------ protocol

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [n for n in sig.parameters if n != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "VideoPromptClassifier":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ConfigError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters: {sorted(valid)}")
            setattr(self, name, value)
        return self

    # ---------------------------------------------------------- validation

    def _validate_videos(self, x: np.ndarray, *, fitted_shape=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 5:
            raise DimensionError(
                f"X must be [n, frames, channels, height, width], got {x.shape}")
        if fitted_shape is not None and x.shape[1:] != fitted_shape:
            raise DimensionError(
                f"X videos are shaped {x.shape[1:]} but fit saw {fitted_shape}")
        return x

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError(
                f"{type(self).__name__} instance is not fitted yet; call fit() first")

    # ----------------------------------------------------------------- fit

    def fit(self, x, y, x_val=None, y_val=None) -> "VideoPromptClassifier":
        """Train on videos x [n, T, C, H, W] and integer labels y [n].

        When a validation set is given, the best-epoch weights (by val
        accuracy) are kept; otherwise the training set doubles as the
        validation set for checkpoint selection.
        """
        x = self._validate_videos(x)
        y = np.asarray(y)
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DimensionError(f"y must be [n] matching X, got {y.shape} vs {x.shape}")
        classes = np.unique(y)
        if classes.size < 2:
            raise ConfigError("fit needs at least two distinct classes")
        class_index = {c: k for k, c in enumerate(classes)}
        y_enc = np.array([class_index[v] for v in y], dtype=np.int64)

        if x_val is None:
            x_val, y_val_enc = x, y_enc
        else:
            x_val = self._validate_videos(x_val, fitted_shape=x.shape[1:])
            y_val = np.asarray(y_val)
            unseen = sorted(set(y_val.tolist()) - set(classes.tolist()))
            if unseen:
                raise ConfigError(f"validation labels {unseen} never appear in y")
            y_val_enc = np.array([class_index[v] for v in y_val], dtype=np.int64)

        n, frames, channels, height, width = x.shape
        cfg = ModelConfig(
            frames=frames, channels=channels, height=height, width=width,
            patch_h=self.patch_h, patch_w=self.patch_w, d_model=self.d_model,
            d_state=self.d_state, n_layers=self.n_layers, d_ifg=self.d_ifg,
            d_ifs=self.d_ifs, n_ifs=self.n_ifs,
            regenerate_depth=self.regenerate_depth, strategy=self.strategy,
            n_classes=int(classes.size), use_ifg=self.use_ifg,
            use_ifs=self.use_ifs, use_entropy_gate=self.use_entropy_gate,
            use_variance_gate=self.use_variance_gate, beta_init=self.beta_init,
        )
        settings = TrainSettings(
            epochs=self.epochs, batch_size=self.batch_size, peak_lr=self.peak_lr,
            min_lr=self.min_lr, warmup_epochs=self.warmup_epochs,
            weight_decay=self.weight_decay, clip_norm=self.clip_norm,
            policy=self.policy, shuffle_seed=self.seed,
        )
        model = build_model(cfg, seed=self.seed)
        result = train(model, x, y_enc, x_val, y_val_enc, settings, keep="best")

        self.model_: VideoModel = model
        self.config_ = cfg
        self.classes_ = classes
        self.history_ = result.history
        self.best_val_top1_ = result.best_val_top1
        self.best_epoch_ = result.best_epoch
        self.n_features_in_ = int(np.prod(x.shape[1:]))
        return self

    # ------------------------------------------------------------- predict

    def decision_function(self, x) -> np.ndarray:
        """Raw logits [n, n_classes] in classes_ order."""
        self._check_fitted()
        x = self._validate_videos(
            x, fitted_shape=(self.config_.frames, self.config_.channels,
                             self.config_.height, self.config_.width))
        return np.stack([self.model_.logits(v) for v in x])

    def predict_proba(self, x) -> np.ndarray:
        return _softmax(self.decision_function(x))

    def predict(self, x) -> np.ndarray:
        scores = self.decision_function(x)
        return self.classes_[np.argmax(scores, axis=1)]

    def score(self, x, y) -> float:
        """Mean accuracy of predict(x) against y."""
        y = np.asarray(y)
        return float(np.mean(self.predict(x) == y))

    # ---------------------------------------------------------------- repr

    def __repr__(self) -> str:
        defaults = {n: p.default for n, p in
                    inspect.signature(type(self).__init__).parameters.items()
                    if n != "self"}
        shown = {k: v for k, v in self.get_params().items() if v != defaults[k]}
        args = ", ".join(f"{k}={v!r}" for k, v in sorted(shown.items()))
        return f"{type(self).__name__}({args})"
