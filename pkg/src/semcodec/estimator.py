"""Scikit-learn estimator facade over the offload pipeline.

``SemanticCodecEstimator`` is a classifier and transformer in the usual
sklearn sense: ``fit`` trains the task model and the codec end to end on
flattened images, ``predict`` classifies through a simulated noisy
offload, and ``transform`` returns the reconstructed split-point features
the edge side would see. Construction only stores hyperparameters, so
``get_params``/``set_params``/``clone`` behave as sklearn expects.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from . import tensor as T
from .channel import BscChannel
from .data import IMG_SIZE
from .models import Codec, offload
from .tasks import train_task_model
from .tensor import Tensor
from .training import LossWeights, TrainConfig, derive_seed, run_two_stage, split_features

_N_FEATURES = 3 * IMG_SIZE * IMG_SIZE


class SemanticCodecEstimator(TransformerMixin, ClassifierMixin, BaseEstimator):
    """Classify flattened images through the noisy offload path.

    X rows are images flattened to 3*32*32 values in [0, 1]. ``fit``
    carves off an internal validation split, trains the device/edge task
    model, freezes it, then runs the two-stage codec training.
    ``predict_ber`` sets the channel error rate used by predict,
    predict_proba, and transform.
    """

    def __init__(self, task_epochs=20, stage1_epochs=10, stage2_epochs=30,
                 loss_weight_alpha=2.0, beta=1.0, gamma=1.0,
                 ber_mode="uniform_range", ber=0.0, ber_lo=1e-4, ber_hi=0.05,
                 predict_ber=0.0, code_channels=4, n_centers=8, n_blocks=3,
                 slice_ratio=None, val_fraction=0.25, batch_size=32, seed=0):
        self.task_epochs = task_epochs
        self.stage1_epochs = stage1_epochs
        self.stage2_epochs = stage2_epochs
        self.loss_weight_alpha = loss_weight_alpha
        self.beta = beta
        self.gamma = gamma
        self.ber_mode = ber_mode
        self.ber = ber
        self.ber_lo = ber_lo
        self.ber_hi = ber_hi
        self.predict_ber = predict_ber
        self.code_channels = code_channels
        self.n_centers = n_centers
        self.n_blocks = n_blocks
        self.slice_ratio = slice_ratio
        self.val_fraction = val_fraction
        self.batch_size = batch_size
        self.seed = seed

    def _images(self, X):
        if X.shape[1] != _N_FEATURES:
            raise ValueError(
                f"expected {_N_FEATURES} features per row "
                f"(3x{IMG_SIZE}x{IMG_SIZE} images), got {X.shape[1]}"
            )
        return X.reshape(-1, 3, IMG_SIZE, IMG_SIZE).astype(np.float64)

    def fit(self, X, y):
        X, y = validate_data(self, X, y)
        images = self._images(X)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("fit needs at least two classes")
        codes = np.searchsorted(self.classes_, y)
        rng = np.random.default_rng(derive_seed(self.seed, "estimator-split"))
        order = rng.permutation(images.shape[0])
        n_val = max(1, int(round(images.shape[0] * self.val_fraction)))
        val_idx, train_idx = order[:n_val], order[n_val:]
        if train_idx.size == 0:
            raise ValueError("validation split leaves no training samples")
        train_set = (images[train_idx], codes[train_idx])
        val_set = (images[val_idx], codes[val_idx])
        self.task_, _ = train_task_model(
            train_set, val_set, n_classes=self.classes_.size,
            epochs=self.task_epochs, batch_size=self.batch_size, seed=self.seed,
        )
        self.task_.freeze()
        self.codec_ = Codec(
            self.task_.split_shape(), code_channels=self.code_channels,
            n_centers=self.n_centers, n_blocks=self.n_blocks,
            seed=derive_seed(self.seed, "estimator-codec"),
        )
        cfg = TrainConfig(
            stage1_epochs=self.stage1_epochs, stage2_epochs=self.stage2_epochs,
            batch_size=self.batch_size, ber_mode=self.ber_mode, ber=self.ber,
            ber_range=(self.ber_lo, self.ber_hi), seed=self.seed,
            slice_ratio=self.slice_ratio,
        )
        weights = LossWeights(loss_weight_alpha=self.loss_weight_alpha,
                              beta=self.beta, gamma=self.gamma)
        self.history_ = run_two_stage(
            self.codec_, self.task_, train_set, val_set, weights, cfg,
        )
        return self

    def _offload_features(self, X):
        images = self._images(X)
        channel = BscChannel(ber=self.predict_ber,
                             seed=derive_seed(self.seed, "estimator-predict"))
        out = []
        with T.no_grad():
            feats = split_features(self.task_, images)
            for start in range(0, feats.shape[0], self.batch_size):
                recon, _ = offload(
                    Tensor(feats[start:start + self.batch_size]), self.codec_,
                    channel, slice_ratio=self.slice_ratio,
                )
                out.append(recon.data)
        return np.concatenate(out, axis=0)

    def transform(self, X):
        """Reconstructed split-point features, flattened per row."""
        check_is_fitted(self)
        X = validate_data(self, X, reset=False)
        recon = self._offload_features(X)
        return recon.reshape(recon.shape[0], -1)

    def predict_proba(self, X):
        check_is_fitted(self)
        X = validate_data(self, X, reset=False)
        recon = self._offload_features(X)
        with T.no_grad():
            logits = self.task_.forward_edge(Tensor(recon)).data
        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        return expd / expd.sum(axis=1, keepdims=True)

    def predict(self, X):
        check_is_fitted(self)
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
