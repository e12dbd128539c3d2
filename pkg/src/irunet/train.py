"""Adam training loop over multi-sigma batches, with exact resume.

Every source of randomness is counter-based (parameter init from the init
seed, per-epoch batch order from the epoch seed mixed with the epoch index,
corruption from per-row manifest seeds), so a step's batch is a pure
function of the step index and the run is bit-reproducible single-threaded.
Resuming from a training checkpoint replays the remaining steps exactly as
an uninterrupted run would have produced them.
"""

from __future__ import annotations

import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .data import DatasetManifest, epoch_plan, materialize_batch
from .metrics import mae_loss
from .model import ModelConfig, ParamStore, build_params, forward
from .optim import AdamState, adam_step


class NonFiniteLossError(RuntimeError):
    """Training aborted on a NaN/Inf loss or parameter."""

    def __init__(self, message: str, checkpoint_path: str | None = None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    batch_size: int = 32
    max_steps: int = 1000
    checkpoint_every: int = 200
    init_seed: int = 1
    epoch_seed: int = 2

    def validate(self) -> None:
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0.0 or self.learning_rate <= 0.0:
            raise ValueError("epsilon and learning_rate must be positive")
        if self.batch_size < 1 or self.max_steps < 1 or self.checkpoint_every < 1:
            raise ValueError("batch_size, max_steps and checkpoint_every must be >= 1")


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    final_checkpoint: str | None = None
    steps_run: int = 0


def _save_training(params: ParamStore, config: ModelConfig, state: AdamState, path) -> None:
    from .checkpoint import save_training_checkpoint

    save_training_checkpoint(params, config, state, path)


def train(model_config: ModelConfig, train_config: TrainConfig,
          manifest: DatasetManifest, out_dir,
          resume: str | None = None, log_stream=None) -> TrainResult:
    """Run Adam on MAE over the train split; write logs and checkpoints.

    Log lines are `step<TAB>loss<TAB>seconds`, flushed per step. Checkpoints
    (with optimizer state) land in out_dir every checkpoint_every steps and
    at the end. A non-finite loss or parameter aborts with the last good
    parameters saved alongside a diagnostic.
    """
    train_config.validate()
    rows = manifest.split_rows("train")
    if not rows:
        raise ValueError("manifest has no train rows")
    os.makedirs(out_dir, exist_ok=True)

    start_step = 0
    if resume is not None:
        from .checkpoint import load_checkpoint

        loaded = load_checkpoint(resume)
        if loaded.state is None:
            raise ValueError(f"{resume}: not a training checkpoint (no optimizer state)")
        params = loaded.params
        state = loaded.state
        model_config = loaded.config
        start_step = state.t
    else:
        params = build_params(model_config, train_config.init_seed)
        state = AdamState.initial(params)

    log = log_stream if log_stream is not None else sys.stdout
    result = TrainResult()
    cache: dict = {}
    batches_per_epoch = -(-len(rows) // train_config.batch_size)
    plan: list | None = None
    plan_epoch = -1

    def checkpoint_path(step: int) -> str:
        return os.path.join(out_dir, f"step{step:06d}.ckpt")

    for step in range(start_step, train_config.max_steps):
        t0 = time.perf_counter()
        epoch = step // batches_per_epoch
        if epoch != plan_epoch:
            plan = epoch_plan(rows, train_config.batch_size,
                              rng.hash64(train_config.epoch_seed, epoch))
            plan_epoch = epoch
        noisy, clean, _ = materialize_batch(manifest, plan[step % batches_per_epoch],
                                            cache=cache)

        z = forward(noisy, model_config, params)
        loss = mae_loss(z, clean)
        loss_value = loss.item()
        if not np.isfinite(loss_value):
            path = os.path.join(out_dir, "abort_last_good.ckpt")
            _save_training(params, model_config, state, path)
            raise NonFiniteLossError(
                f"non-finite loss at step {step}; last good parameters saved to {path}",
                checkpoint_path=path)
        loss.backward()
        tensors = params.named_tensors()
        if any(t.grad is not None and not np.all(np.isfinite(t.grad)) for t in tensors.values()):
            path = os.path.join(out_dir, "abort_last_good.ckpt")
            _save_training(params, model_config, state, path)
            raise NonFiniteLossError(
                f"non-finite gradient at step {step}; last good parameters saved to {path}",
                checkpoint_path=path)
        adam_step(params, state, train_config.learning_rate,
                  train_config.beta1, train_config.beta2, train_config.epsilon)
        params.zero_grad()
        if any(not np.all(np.isfinite(t.data)) for t in tensors.values()):
            raise NonFiniteLossError(
                f"non-finite parameter after step {step}", checkpoint_path=None)

        result.losses.append(loss_value)
        result.steps_run += 1
        log.write(f"{step}\t{loss_value!r}\t{time.perf_counter() - t0:.3f}\n")
        log.flush()

        if (step + 1) % train_config.checkpoint_every == 0 and (step + 1) < train_config.max_steps:
            _save_training(params, model_config, state, checkpoint_path(step + 1))

    final = checkpoint_path(train_config.max_steps)
    _save_training(params, model_config, state, final)
    result.final_checkpoint = final
    return result
