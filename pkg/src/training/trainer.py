import glob
import logging
import os
import time
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from src.ltew.model import LTEW, ModelConfig, parameter_count
from src.nn.optim import AdamState, NonFiniteGradientError, adam_update
from src.nn.weights import ModelWeights, save_weights
from src.training.batch import collate, draw_sample, loss_l1
from src.training.config import TrainConfig, TrainConfigError, lr_at_epoch
from src.utils.helpers import log_progress, log_summary
from src.utils.image_io import SUPPORTED_EXTENSIONS, ImageBuffer, read_image

TRACE_COLUMNS = ["step", "lr", "loss"]


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, lr: float, tensor: str, detail: str = ""):
        message = (
            f"Training diverged at step {step} (lr={lr:g}): "
            f"non-finite values in '{tensor}'"
        )
        if detail:
            message = f"{message}; {detail}"
        super().__init__(message)
        self.step = step
        self.lr = lr
        self.tensor = tensor


def load_dataset(path: str) -> List[ImageBuffer]:
    if os.path.isdir(path):
        files = sorted(
            f
            for f in glob.glob(os.path.join(path, "*"))
            if os.path.splitext(f)[1].lower() in SUPPORTED_EXTENSIONS
        )
    elif os.path.isfile(path):
        files = [path]
    else:
        raise TrainConfigError(f"dataset: {path} does not exist")
    if not files:
        raise TrainConfigError(f"dataset: no PNG or PPM images in {path}")
    images = [read_image(f) for f in files]
    logging.info(f"Loaded {len(images)} training image(s) from {path}")
    return images


def _offending_tensor(model: LTEW, pred: np.ndarray) -> Tuple[str, str]:
    for name, tensor in model.params.items():
        if not np.all(np.isfinite(tensor)):
            return name, f"{int(np.count_nonzero(~np.isfinite(tensor)))} bad entries"
    bad = int(np.count_nonzero(~np.isfinite(pred)))
    return "prediction", f"{bad} of {pred.size} predictions non-finite"


def train_step(model: LTEW, batch, state: AdamState, step: int) -> float:
    pred, cache = model.predict(
        batch.images, batch.batch_index, batch.x, batch.shape, batch.skip, keep=True
    )
    loss, d_pred = loss_l1(pred, batch.gt)
    if not np.isfinite(loss):
        tensor, detail = _offending_tensor(model, pred)
        raise TrainingDivergedError(step, state.lr, tensor, f"loss={loss}; {detail}")
    grads = model.backward(cache, d_pred)
    try:
        params = adam_update(model.params, grads, state)
    except NonFiniteGradientError as e:
        raise TrainingDivergedError(
            step, state.lr, e.name, "non-finite gradient"
        ) from e
    model.set_params(params)
    return loss


def run_training(
    cfg: TrainConfig,
    out_weights: Optional[str] = None,
    images: Optional[List[ImageBuffer]] = None,
) -> Tuple[ModelWeights, pd.DataFrame]:
    """Trains a fresh model; returns its weights and the per-step loss trace.

    With ``out_weights`` the weights are saved there and the trace is written
    to ``cfg.loss_trace`` (default: next to the weights as ``<name>.loss.csv``).
    """
    images = images if images is not None else load_dataset(cfg.dataset)
    rng = np.random.default_rng(cfg.seed)
    model_config = ModelConfig(cfg.channels, cfg.n_freq, cfg.hidden)
    model = LTEW.random(model_config, seed=cfg.seed)
    state = AdamState(lr=cfg.lr)

    task_count = cfg.epochs * cfg.steps_per_epoch
    trace = []
    times: List[float] = []
    start_time = time.perf_counter()
    logging.info(
        f"Training {cfg.regime} for {cfg.epochs} epoch(s) x "
        f"{cfg.steps_per_epoch} step(s), batch {cfg.batch_size}, "
        f"{cfg.queries} queries per image, "
        f"{parameter_count(model_config)} parameters"
    )
    step = 0
    for epoch in range(cfg.epochs):
        state.lr = lr_at_epoch(cfg, epoch)
        for _ in range(cfg.steps_per_epoch):
            step_start = time.perf_counter()
            samples = [
                draw_sample(images[rng.integers(len(images))], cfg, rng)
                for _ in range(cfg.batch_size)
            ]
            loss = train_step(model, collate(samples), state, step)
            trace.append({"step": step, "lr": state.lr, "loss": loss})
            times.append(time.perf_counter() - step_start)
            step += 1
            if step % cfg.log_every == 0 or step == task_count:
                log_progress(
                    times,
                    step,
                    task_count,
                    start_time,
                    extra=f"epoch {epoch} lr {state.lr:g} L1 {loss:.5f}",
                )
    log_summary(times)

    weights = model.weights()
    trace_df = pd.DataFrame(trace, columns=TRACE_COLUMNS)
    if out_weights:
        save_weights(weights, out_weights)
        trace_path = cfg.loss_trace or f"{os.path.splitext(out_weights)[0]}.loss.csv"
        trace_df.to_csv(trace_path, index=False)
        logging.info(f"Loss trace written to {trace_path}")
    return weights, trace_df
