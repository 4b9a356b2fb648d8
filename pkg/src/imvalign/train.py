"""Training loop: one example per step, joint CE + weighted alignment MSE."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .alignment import DegenerateAlignment
from .data import TranscriptionExample
from .model import TrainStepOutput, Transducer
from .optim import clip_grad_norm, make_optimizer
from .tensor import Tape

log = logging.getLogger(__name__)


class NonFiniteLoss(FloatingPointError):
    def __init__(self, example_id, value: float):
        self.example_id = example_id
        super().__init__(f"non-finite loss {value} on example {example_id}")


@dataclass
class TrainConfig:
    """Optimiser settings.  ``steps`` is the global step count a run trains up to.

    Each optimiser step averages gradients over ``accumulate`` examples.  With
    ``decay_fraction`` f > 0 the learning rate stays at ``lr`` for the first
    (1 - f) of the run and then falls linearly towards zero.
    """

    steps: int = 2000
    lr: float = 1e-3
    optimizer: str = "adam"
    grad_clip: float = 5.0
    seed: int = 0
    log_interval: int = 100
    accumulate: int = 1
    decay_fraction: float = 0.0

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.grad_clip < 0:
            raise ValueError("grad_clip must be >= 0 (0 disables clipping)")
        if self.accumulate < 1:
            raise ValueError(f"accumulate must be >= 1, got {self.accumulate}")
        if not 0.0 <= self.decay_fraction <= 1.0:
            raise ValueError(f"decay_fraction must lie in [0, 1], got {self.decay_fraction}")
        if self.log_interval < 0:
            raise ValueError("log_interval must be >= 0")

    def lr_at(self, step: int) -> float:
        start = self.steps * (1.0 - self.decay_fraction)
        if self.decay_fraction == 0 or step < start:
            return self.lr
        return self.lr * max(self.steps - step, 0) / (self.steps * self.decay_fraction)


def example_order(n: int, k: int, seed: int) -> int:
    """Index of the ``k``-th example drawn: a fresh permutation per epoch."""
    epoch, offset = divmod(k, n)
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return int(perm[offset])


def _forward_backward(model: Transducer, example: TranscriptionExample, example_id) -> TrainStepOutput:
    with Tape() as tape:
        total, _, _, out = model.forward_train(example.features, example.tokens, example_id)
    if not math.isfinite(out.loss_total):
        raise NonFiniteLoss(example_id, out.loss_total)
    tape.backward(total)
    return out


def train_step(model: Transducer, optimizer, example: TranscriptionExample, example_id=None,
               grad_clip: float = 5.0) -> TrainStepOutput:
    """Forward the training graph, backpropagate, apply one optimiser update."""
    model.params.zero_grad()
    out = _forward_backward(model, example, example_id)
    clip_grad_norm(model.params, grad_clip)
    optimizer.step()
    return out


class Trainer:
    def __init__(self, model: Transducer, corpus: Sequence[TranscriptionExample], cfg: TrainConfig,
                 optimizer=None, start_step: int = 0):
        if not corpus:
            raise ValueError("cannot train on an empty corpus")
        self.model = model
        self.corpus = corpus
        self.cfg = cfg
        self.optimizer = optimizer or make_optimizer(cfg.optimizer, model.params, cfg.lr)
        self.history: list[float] = []
        self.skipped: list[int] = []
        self.step = start_step

    def _one_step(self, gstep: int) -> list[TrainStepOutput]:
        cfg = self.cfg
        self.model.params.zero_grad()
        outs = []
        for a in range(cfg.accumulate):
            idx = example_order(len(self.corpus), gstep * cfg.accumulate + a, cfg.seed)
            try:
                outs.append(_forward_backward(self.model, self.corpus[idx], idx))
            except DegenerateAlignment as err:
                log.warning("step %d: skipping example %s (%s)", gstep, idx, err)
                self.skipped.append(idx)
        if not outs:
            return outs
        if len(outs) > 1:
            for p in self.model.params.trainable():
                if p.grad is not None:
                    p.grad /= len(outs)
        clip_grad_norm(self.model.params, cfg.grad_clip)
        self.optimizer.lr = cfg.lr_at(gstep)
        self.optimizer.step()
        return outs

    def run(self, steps: int | None = None,
            callback: Callable[[int, TrainStepOutput], None] | None = None) -> list[float]:
        """Train ``steps`` more optimiser steps (default: up to ``cfg.steps`` in total)."""
        steps = max(self.cfg.steps - self.step, 0) if steps is None else steps
        window: list[TrainStepOutput] = []
        for _ in range(steps):
            gstep = self.step
            self.step += 1
            outs = self._one_step(gstep)
            if not outs:
                continue
            self.history.append(float(np.mean([o.loss_total for o in outs])))
            window.extend(outs)
            if callback is not None:
                callback(gstep, outs[-1])
            if self.cfg.log_interval and (gstep + 1) % self.cfg.log_interval == 0 and window:
                log.info("step %d loss_total %.4f loss_ce %.4f loss_mse %.4f sigma %.3f lr %.2e",
                         gstep + 1,
                         np.mean([o.loss_total for o in window]),
                         np.mean([o.loss_ce for o in window]),
                         np.mean([o.loss_mse for o in window]),
                         float(self.model.params["reconstruction.sigma"].data[0]),
                         self.optimizer.lr)
                window.clear()
        return self.history
