import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance lines collected during the run, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}

# small denoiser trained once per session (and cached on disk) for the filling,
# multi-view and runtime checks
TRAIN_RECIPE = {
    "phantom_seeds": list(range(100, 110)),
    "phantom_shape": [32, 32, 32],
    "lesion_count": 6,
    "min_foreground": 0.2,
    "epochs": 60,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "lesion_weight": 10.0,
    "dropout_prob": 0.25,
    "seed": 0,
}


def record(criterion: int, ok: bool, detail: str = "") -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _cache_dir() -> Path:
    root = os.environ.get("LESIONPAINT_TEST_CACHE") or Path.home() / ".cache" / "lesionpaint-tests"
    return Path(root)


@pytest.fixture(scope="session")
def trained_checkpoint():
    """Path to the small trained denoiser and the wall time spent training it (None if cached)."""
    import torch

    from lesionpaint.denoiser import TrainConfig, extract_training_slices, save_checkpoint, train
    from lesionpaint.phantom import PhantomConfig, make_phantom
    from lesionpaint.schedule import build_cosine_schedule
    from lesionpaint.volume import MaskVolume

    key = hashlib.sha256(json.dumps(TRAIN_RECIPE, sort_keys=True).encode()).hexdigest()[:16]
    path = _cache_dir() / f"denoiser-{key}.ckpt"
    if path.exists() and not os.environ.get("LESIONPAINT_RETRAIN"):
        return path, None
    r = TRAIN_RECIPE
    slices = []
    for s in r["phantom_seeds"]:
        ph = make_phantom(PhantomConfig(shape=tuple(r["phantom_shape"]), seed=s, lesion_count=r["lesion_count"]))
        slices += extract_training_slices(ph.lesioned, ph.lesions, r["min_foreground"])
        slices += extract_training_slices(ph.reference, MaskVolume.zeros_like(ph.lesions), r["min_foreground"])
    cfg = TrainConfig(r["lesion_weight"], r["learning_rate"], r["batch_size"], r["epochs"], r["dropout_prob"], r["seed"])
    t0 = time.perf_counter()
    model, history = train(slices, build_cosine_schedule(1000), cfg)
    elapsed = time.perf_counter() - t0
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    save_checkpoint(tmp, model, {"T": 1000, "s": 0.008, "contrasts": ["T1w", "T2w", "FLAIR"],
                                 "recipe": r, "final_loss": history[-1]})
    tmp.replace(path)
    return path, elapsed
