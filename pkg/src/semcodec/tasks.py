"""The frozen classification task model and its training loop.

A tiny CNN split after its first convolution: the device keeps conv1, the
edge runs the rest. Both halves are frozen once trained; the codec is the
only thing optimized afterwards.
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import tensor as T
from . import layers as L
from .optim import Sgd
from .tensor import Tensor


class DivergenceError(RuntimeError):
    """Raised when a training loss turns non-finite."""

    def __init__(self, stage, seed, step, value):
        self.stage = stage
        self.seed = seed
        self.step = step
        super().__init__(f"{stage} diverged at step {step} (seed {seed}): loss={value}")


class TaskModel:
    """conv(3->16, s2) | split | conv(16->32, s2) -> flatten -> linear head."""

    def __init__(self, n_classes=4, base_channels=16, input_hw=(32, 32), seed=0):
        rng = np.random.default_rng(seed)
        c1, c2 = base_channels, base_channels * 2
        self.n_classes = n_classes
        self.conv1_w = Tensor(rng.normal(0, np.sqrt(2.0 / 27), size=(c1, 3, 3, 3)), requires_grad=True)
        self.conv1_b = Tensor(np.zeros(c1), requires_grad=True)
        self.prelu1 = L.PreluParams(init=0.25, channels=c1)
        self.conv2_w = Tensor(rng.normal(0, np.sqrt(2.0 / (9 * c1)), size=(c2, c1, 3, 3)), requires_grad=True)
        self.conv2_b = Tensor(np.zeros(c2), requires_grad=True)
        self.prelu2 = L.PreluParams(init=0.25, channels=c2)
        h4 = T.conv_out_extent(T.conv_out_extent(input_hw[0], 3, 2, 1), 3, 2, 1)
        w4 = T.conv_out_extent(T.conv_out_extent(input_hw[1], 3, 2, 1), 3, 2, 1)
        flat = c2 * h4 * w4
        self.fc_w = Tensor(rng.normal(0, np.sqrt(1.0 / flat), size=(n_classes, flat)), requires_grad=True)
        self.fc_b = Tensor(np.zeros(n_classes), requires_grad=True)
        self.frozen = False

    def forward_device(self, x):
        """Device-side half; output is the split-point feature map."""
        h = T.conv2d(x, self.conv1_w, self.conv1_b, stride=2, padding=1)
        return L.prelu(h, self.prelu1)

    def forward_edge(self, features):
        h = T.conv2d(features, self.conv2_w, self.conv2_b, stride=2, padding=1)
        h = L.prelu(h, self.prelu2)
        n = h.shape[0] if h.ndim == 4 else 1
        h = T.reshape(h, n, -1)
        return L.linear(h, self.fc_w, self.fc_b)

    def forward(self, x):
        return self.forward_edge(self.forward_device(x))

    def split_shape(self, input_hw=(32, 32)):
        h = T.conv_out_extent(input_hw[0], 3, 2, 1)
        w = T.conv_out_extent(input_hw[1], 3, 2, 1)
        return (self.conv1_w.shape[0], h, w)

    def params(self):
        out = {
            "task.conv1_w": self.conv1_w, "task.conv1_b": self.conv1_b,
            "task.conv2_w": self.conv2_w, "task.conv2_b": self.conv2_b,
            "task.fc_w": self.fc_w, "task.fc_b": self.fc_b,
        }
        out.update({f"task.prelu1.{k}": v for k, v in self.prelu1.params().items()})
        out.update({f"task.prelu2.{k}": v for k, v in self.prelu2.params().items()})
        return out

    def freeze(self):
        for t in self.params().values():
            t.requires_grad = False
            t.node = None
            t.grad = None
        self.frozen = True

    def param_hash(self):
        h = hashlib.sha256()
        for name in sorted(self.params()):
            h.update(name.encode())
            h.update(self.params()[name].data.tobytes())
        return h.hexdigest()


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_task_model(train_set, val_set, n_classes=4, epochs=20, lr=0.1,
                     momentum=0.0, batch_size=32, seed=0, target_acc=None):
    """SGD training of the task model; returns (model, history).

    Stops early when ``target_acc`` is reached on the validation split.
    """
    x_train, y_train = train_set
    x_val, y_val = val_set
    model = TaskModel(n_classes=n_classes, seed=seed)
    opt = Sgd(model.params(), lr=lr, momentum=momentum)
    rng = np.random.default_rng(seed + 1)
    history = []
    step = 0
    for epoch in range(epochs):
        for idx in _batches(x_train.shape[0], batch_size, rng):
            loss = L.cross_entropy_loss(model.forward(Tensor(x_train[idx])), y_train[idx])
            if not np.isfinite(loss.data):
                raise DivergenceError("task", seed, step, float(loss.data))
            opt.zero_grad()
            T.backward(loss)
            opt.step()
            step += 1
        acc = task_accuracy(model, x_val, y_val)
        history.append({"epoch": epoch, "val_accuracy": acc})
        if target_acc is not None and acc >= target_acc:
            break
    return model, history


def task_accuracy(model, images, labels, batch_size=64):
    hits = 0
    with T.no_grad():
        for start in range(0, images.shape[0], batch_size):
            logits = model.forward(Tensor(images[start:start + batch_size]))
            hits += int((np.argmax(logits.data, axis=1) == labels[start:start + batch_size]).sum())
    return hits / images.shape[0]
