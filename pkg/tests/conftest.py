"""Shared fixtures: dataset, frozen task model, and trained codec arms.

Everything heavy is session-scoped and lazy. Running one unit file never
trains a codec unless that file asks for a trained arm; a full run builds
each arm exactly once and caches its evaluation rows.
"""

import time

import numpy as np
import pytest

from semcodec.data import make_shapes, train_val_split
from semcodec.models import Codec
from semcodec.tasks import task_accuracy, train_task_model
from semcodec.training import (
    LossWeights,
    TrainConfig,
    derive_seed,
    evaluate,
    run_two_stage,
)

SEEDS = (0, 1, 2)
BER_GRID = (1e-4, 2.5e-3, 2.5e-2, 5e-2)
EVAL_REPS = 6


@pytest.fixture(scope="session")
def dataset():
    X, y = make_shapes(512, seed=42)
    (xt, yt), (xv, yv) = train_val_split(X, y, 0.25, seed=43)
    return {"train": (xt, yt), "val": (xv, yv)}


@pytest.fixture(scope="session")
def task_setup(dataset):
    model, history = train_task_model(
        dataset["train"], dataset["val"], epochs=20, seed=0
    )
    model.freeze()
    return {
        "model": model,
        "baseline": task_accuracy(model, *dataset["val"]),
        "history": history,
    }


def _train_arm(dataset, task, seed, weights=None, **overrides):
    cfg = TrainConfig(seed=seed, **overrides)
    codec = Codec(task.split_shape(), seed=derive_seed(100, seed))
    history = run_two_stage(
        codec, task, dataset["train"], dataset["val"], weights or LossWeights(), cfg
    )
    return codec, history


def _eval_arm(codec, task, dataset, grid, seed, **kw):
    return evaluate(codec, task, *dataset["val"], grid, reps=EVAL_REPS, seed=seed, **kw)


@pytest.fixture(scope="session")
def dyn_arms(dataset, task_setup):
    """Codec trained under the uniform BER range, one arm per seed."""
    task = task_setup["model"]
    started = time.monotonic()
    arms = {}
    for s in SEEDS:
        codec, history = _train_arm(dataset, task, s)
        rows = _eval_arm(codec, task, dataset, BER_GRID, seed=1000 + s)
        arms[s] = {"codec": codec, "history": history, "eval": rows}
    return {"arms": arms, "elapsed": time.monotonic() - started}


@pytest.fixture(scope="session")
def abl_arms(dataset, task_setup):
    """Ablation: trained at fixed BER 0, so the gates only ever see 0."""
    task = task_setup["model"]
    arms = {}
    for s in SEEDS:
        codec, history = _train_arm(dataset, task, s, ber_mode="fixed", ber=0.0)
        rows = _eval_arm(codec, task, dataset, (0.0, 0.05), seed=1000 + s)
        arms[s] = {"codec": codec, "history": history, "eval": rows}
    return arms


@pytest.fixture(scope="session")
def one_stage_arms(dataset, task_setup):
    task = task_setup["model"]
    arms = {}
    for s in SEEDS:
        codec, history = _train_arm(dataset, task, s, one_stage=True)
        rows = _eval_arm(codec, task, dataset, (0.05,), seed=1000 + s)
        arms[s] = {"codec": codec, "history": history, "eval": rows}
    return arms


@pytest.fixture(scope="session")
def adhoc_arms(dataset, task_setup):
    """Fixed-BER specialists: one model per (test BER, seed)."""
    task = task_setup["model"]
    arms = {}
    for b in BER_GRID:
        for s in SEEDS:
            codec, history = _train_arm(dataset, task, s, ber_mode="fixed", ber=b)
            rows = _eval_arm(codec, task, dataset, (b,), seed=1000 + s)
            arms[(b, s)] = {"codec": codec, "history": history, "eval": rows}
    return arms


@pytest.fixture(scope="session")
def slice_arms(dataset, task_setup):
    """One half-ratio sliced codec, scored with each receiver-side fill."""
    task = task_setup["model"]
    codec, history = _train_arm(
        dataset, task, 0, slice_ratio=0.5, recovery_mode="reflection"
    )
    arms = {"codec": codec, "history": history}
    for mode in ("reflection", "zero"):
        arms[mode] = _eval_arm(
            codec, task, dataset, BER_GRID, seed=2000,
            slice_ratio=0.5, recovery=mode,
        )
    return arms


@pytest.fixture(scope="session")
def pure_arm(dataset, task_setup):
    """Loss ablation: distribution and attribution terms off, task term only."""
    task = task_setup["model"]
    weights = LossWeights(loss_weight_alpha=0.0, gamma=0.0)
    codec, history = _train_arm(dataset, task, 0, weights=weights)
    rows = _eval_arm(codec, task, dataset, (0.0,), seed=3000)
    return {"codec": codec, "history": history, "eval": rows}


@pytest.fixture(scope="session")
def alpha_sweep_run(tmp_path_factory):
    from semcodec.config import default_config
    from semcodec.presets import run_preset

    out = tmp_path_factory.mktemp("alpha-sweep")
    started = time.monotonic()
    summary = run_preset("alpha-sweep", default_config(), str(out), seeds=[0])
    return {"summary": summary, "out": str(out),
            "elapsed": time.monotonic() - started}
