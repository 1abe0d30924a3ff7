"""Scikit-learn style front door for training conditioned classifiers.

``NoisyTargetClassifier`` wraps the model/training machinery behind the usual
fit/predict/predict_proba/score surface. y may be a 1-d label vector or a 2-d
(n, L) array for multi-head problems (each column one head).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .autodiff import stable_softmax
from .errors import ConfigError, UsageError
from .models import Model, ModelConfig
from .noise import NoiseSchedule
from .rngs import substream
from .tasks import encode_targets
from .training import train_model


class NoisyTargetClassifier(BaseEstimator, ClassifierMixin):
    """Classifier regularized by conditioning on noise-corrupted targets.

    In ``cnt`` mode the model sees (y(t), t) during training through
    conditional normalization layers and pure noise at prediction time.
    ``baseline`` trains the same backbone unconditioned; ``only-noise`` is the
    ablation where the conditioning input never carries target information.
    """

    def __init__(
        self,
        mode: str = "cnt",
        backbone: str = "mlp",
        channels: int = 8,
        num_blocks: int = 2,
        activation: str = "mish",
        norm_kind: str = "group",
        num_groups: int = 2,
        dropout_p: float = 0.1,
        embed_width: int = 128,
        num_frequencies: int = 16,
        noise_family: str = "gaussian",
        beta_min: float = 0.2,
        beta_max: float = 20.0,
        epochs: int = 50,
        batch_size: int = 128,
        learning_rate: float = 0.1,
        momentum: float = 0.9,
        weight_decay: float = 1e-4,
        mixup_alpha: float = 0.0,
        input_shape=None,
        random_state: int = 0,
    ):
        self.mode = mode
        self.backbone = backbone
        self.channels = channels
        self.num_blocks = num_blocks
        self.activation = activation
        self.norm_kind = norm_kind
        self.num_groups = num_groups
        self.dropout_p = dropout_p
        self.embed_width = embed_width
        self.num_frequencies = num_frequencies
        self.noise_family = noise_family
        self.beta_min = beta_min
        self.beta_max = beta_max
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.mixup_alpha = mixup_alpha
        self.input_shape = input_shape
        self.random_state = random_state

    # ------------------------------------------------------------------

    def _seed(self) -> int:
        return 0 if self.random_state is None else int(self.random_state)

    def _model_input(self, x: np.ndarray):
        if self.backbone == "smallcnn":
            if self.input_shape is None:
                raise ConfigError("smallcnn backbone needs input_shape=(C, H, W)")
            shape = tuple(int(v) for v in self.input_shape)
            if int(np.prod(shape)) != x.shape[1]:
                raise ConfigError(
                    f"input_shape {shape} does not match {x.shape[1]} features"
                )
            return x.reshape(len(x), *shape), shape
        return x, x.shape[1]

    def fit(self, X, y):
        y_arr = np.asarray(y)
        multi = y_arr.ndim == 2 and y_arr.shape[1] > 1
        X, y_arr = check_X_y(X, y_arr, multi_output=multi)
        if y_arr.ndim == 1:
            columns = y_arr.reshape(-1, 1)
        else:
            columns = y_arr
        self._multi_output_ = columns.shape[1] > 1
        class_lists = [np.unique(columns[:, j]) for j in range(columns.shape[1])]
        for j, classes in enumerate(class_lists):
            if len(classes) < 2:
                raise ConfigError(f"y column {j} has a single class; nothing to learn")
        self.classes_ = class_lists if self._multi_output_ else class_lists[0]
        indices = np.stack(
            [np.searchsorted(c, columns[:, j]) for j, c in enumerate(class_lists)], axis=1
        )
        heads = [len(c) for c in class_lists]

        x_model, input_shape = self._model_input(np.asarray(X, dtype=np.float64))
        self.n_features_in_ = X.shape[1]

        config = ModelConfig(
            backbone=self.backbone,
            channels=self.channels,
            num_blocks=self.num_blocks,
            activation=self.activation,
            heads=heads,
            mode=self.mode,
            dropout_p=self.dropout_p,
            norm_kind=self.norm_kind,
            num_groups=self.num_groups,
            embed_width=self.embed_width,
            num_frequencies=self.num_frequencies,
        )
        schedule = None
        if self.mode != "baseline":
            schedule = NoiseSchedule(
                beta_min=self.beta_min,
                beta_max=self.beta_max,
                family=self.noise_family,
                mode="only-noise" if self.mode == "only-noise" else "cnt",
            )
        self.model_ = Model(config, input_shape, schedule, seed=self._seed())

        y_enc = encode_targets(indices, heads)
        loss_kind = "softmax" if not self._multi_output_ else "bce"
        self.history_ = train_model(
            self.model_, x_model, y_enc, loss_kind, self.epochs, self.batch_size,
            self._seed(), schedule=schedule, lr=self.learning_rate, momentum=self.momentum,
            weight_decay=self.weight_decay, mixup_alpha=self.mixup_alpha,
        )
        return self

    # ------------------------------------------------------------------

    def _logits(self, X) -> list[np.ndarray]:
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ConfigError(
                f"X has {X.shape[1]} features, but fit saw {self.n_features_in_}"
            )
        x_model, _ = self._model_input(np.asarray(X, dtype=np.float64))
        rng = substream(self._seed(), "predict")
        return self.model_.predict(x_model, rng)

    def predict(self, X):
        logits = self._logits(X)
        class_lists = self.classes_ if self._multi_output_ else [self.classes_]
        cols = [c[np.argmax(z, axis=1)] for z, c in zip(logits, class_lists)]
        if self._multi_output_:
            return np.stack(cols, axis=1)
        return cols[0]

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        if self._multi_output_:
            raise UsageError("predict_proba is defined for single-output y only")
        return stable_softmax(self._logits(X)[0])
