"""Inference latency: per-stage wall clock and a real-time-factor proxy."""

from __future__ import annotations

import gc
import statistics
import time
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .model import StageTimer, Transducer
from .tensor import Tensor, no_grad

STAGES = ("encoder", "predictor", "decoder")
FRAME_SHIFT = 0.01


@dataclass(frozen=True)
class TimingReport:
    encoder: float
    predictor: float
    decoder: float
    total: float
    utterances: int
    audio_seconds: float
    repeats: int

    @property
    def rtf_proxy(self) -> float:
        return self.total / self.audio_seconds if self.audio_seconds else float("nan")

    def lines(self) -> list[str]:
        return [f"encoder_seconds\t{self.encoder:.6f}", f"predictor_seconds\t{self.predictor:.6f}",
                f"decoder_seconds\t{self.decoder:.6f}", f"total_seconds\t{self.total:.6f}",
                f"utterances\t{self.utterances}", f"audio_seconds\t{self.audio_seconds:.3f}",
                f"repeats\t{self.repeats}", f"rtf_proxy\t{self.rtf_proxy:.6f}"]


@contextmanager
def single_thread():
    """Timing conditions: BLAS pinned to one thread (when threadpoolctl is
    available) and the cyclic collector paused, as ``timeit`` does.  On a large
    heap a collection landing inside one configuration skews the comparison."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        ctx = nullcontext()
    else:
        ctx = threadpool_limits(limits=1)
    was_enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        with ctx:
            yield
    finally:
        if was_enabled:
            gc.enable()


def _one_pass(model: Transducer, feats: Sequence[np.ndarray]) -> dict[str, float]:
    timer = StageTimer()
    t0 = time.perf_counter()
    for x in feats:
        model.infer(x, timer=timer)
    out = {s: timer.totals.get(s, 0.0) for s in STAGES}
    out["total"] = time.perf_counter() - t0
    return out


def benchmark_inference(model: Transducer, corpus: Iterable, repeats: int = 3,
                        frame_shift: float = FRAME_SHIFT) -> TimingReport:
    """Per-stage totals of the median pass (by end-to-end time), after one untimed warm-up pass.

    Stages come from the same pass as the total, so they always fit inside it;
    independent per-stage medians would not.
    """
    if repeats < 3:
        raise ValueError(f"repeats must be >= 3, got {repeats}")
    feats = [ex.features for ex in corpus]
    with single_thread():
        _one_pass(model, feats)
        runs = [_one_pass(model, feats) for _ in range(repeats)]
    med = sorted(runs, key=lambda r: r["total"])[len(runs) // 2]
    frames = sum(f.shape[0] for f in feats)
    return TimingReport(med["encoder"], med["predictor"], med["decoder"], med["total"],
                        len(feats), frames * frame_shift, repeats)


def predictor_stage_pass(model: Transducer, e_s: np.ndarray) -> Callable[[], int]:
    """One inference pass from acoustic embeddings to decoder input: predictor,
    length rule, reconstruction and semantic product.  Returns the length."""
    from . import alignment as am
    from .model import SIGMA
    from .predictor import predict_length

    emb = Tensor(np.asarray(e_s, dtype=model.dtype))
    sigma = model.params[SIGMA]

    def once() -> int:
        delta = model.predict_delta(emb)
        L = predict_length(delta)
        rec = am.reconstruct_from_delta(delta, L, sigma)
        am.semantic_encodings(rec.alpha_hat, emb)
        return L

    return once


def interleaved_min_times(passes: Sequence[Callable[[], object]], repeats: int = 50) -> list[float]:
    """Fastest of ``repeats`` timings per pass, calling the passes round-robin.

    Machine speed drifts in steps lasting a second or more, so timing each
    configuration in its own block confounds it with the drift.  Round-robin
    spreads the drift over all of them, and load only ever adds time, so the
    minimum is the cleanest estimate.
    """
    best = [float("inf")] * len(passes)
    with no_grad(), single_thread():
        for fn in passes:
            fn()
        for _ in range(repeats):
            for i, fn in enumerate(passes):
                t0 = time.perf_counter()
                fn()
                best[i] = min(best[i], time.perf_counter() - t0)
    return best


def predictor_scaling(model: Transducer, lengths: Sequence[int] = (100, 200, 400, 800),
                      repeats: int = 20, seed: int = 0) -> list[tuple[int, float]]:
    rng = np.random.default_rng(seed)
    passes = [predictor_stage_pass(model, rng.normal(size=(T, model.cfg.dim))) for T in lengths]
    return list(zip(lengths, interleaved_min_times(passes, repeats)))


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """(slope, intercept, Pearson correlation)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    r = float(np.corrcoef(x, y)[0, 1])
    return float(slope), float(intercept), r
