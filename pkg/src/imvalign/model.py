"""Single-step non-autoregressive transducer.

Training graph: mel-encoder + text-encoder -> alignment generator -> attention
reconstruction -> decoder, with the predictor regressing the generator's
per-frame advance.  Inference graph: mel-encoder -> predictor -> attention
reconstruction -> decoder, one decoder pass per utterance.

The text encoder only runs when the frame count is known, so token j is given
the sinusoidal encoding of frame position j * (T - 1) / (L - 1).  Acoustic and
text positions then share one time axis and the generator's attention starts
out roughly diagonal instead of having to discover the time warp.
"""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import alignment as am
from . import ops
from .alignment import AlignmentBundle, DegenerateAlignment, ReconstructionBundle
from .layers import encoder_stack, init_block, sinusoidal_at, sinusoidal_positions
from .params import ParameterStore
from .predictor import PredictorConfig, alignment_loss, init_predictor, predict_length, predictor_forward
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

SIGMA = "reconstruction.sigma"
EMBED_SCALE = 0.5
TRAINING_ONLY_PREFIXES = ("text_encoder.", "generator.")


@dataclass
class ModelConfig:
    vocab_size: int
    feature_dim: int
    dim: int = 64
    heads: int = 4
    encoder_layers: int = 2
    text_encoder_layers: int = 1
    predictor_layers: int = 2
    decoder_layers: int = 2
    ffn_mult: int = 4
    predictor_kernel: int = 3
    lam: float = 1.0
    sigma_init: float = 0.5
    label_smoothing: float = 0.0
    dtype: str = "float32"

    def __post_init__(self):
        counts = ("vocab_size", "feature_dim", "dim", "heads", "encoder_layers",
                  "text_encoder_layers", "predictor_layers", "decoder_layers", "ffn_mult")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ops.ConfigurationError(f"{name} must be >= 1")
        if self.dim % self.heads:
            raise ops.ConfigurationError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.lam < 0:
            raise ops.ConfigurationError("lam must be >= 0")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ops.ConfigurationError("label_smoothing must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ops.ConfigurationError(f"unsupported dtype {self.dtype}")
        PredictorConfig(self.predictor_kernel, None, self.predictor_layers)

    @property
    def predictor(self) -> PredictorConfig:
        return PredictorConfig(kernel_size=self.predictor_kernel, layers=self.predictor_layers)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class TrainStepOutput:
    loss_total: float
    loss_ce: float
    loss_mse: float
    alignment: AlignmentBundle
    reconstruction: ReconstructionBundle
    delta_star: Tensor


@dataclass
class Hypothesis:
    tokens: list[int]
    length: int
    token_logprobs: list[float]
    degenerate: bool = False
    alpha_hat: np.ndarray | None = field(default=None, repr=False)


class StageTimer:
    """Accumulates wall-clock seconds per inference stage."""

    def __init__(self):
        self.totals: dict[str, float] = {}

    @contextmanager
    def __call__(self, stage: str) -> Iterator[None]:
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.totals[stage] = self.totals.get(stage, 0.0) + time.perf_counter() - t0


@contextmanager
def _no_timer(stage: str) -> Iterator[None]:
    yield


class Transducer:
    def __init__(self, cfg: ModelConfig, seed: int = 0, params: ParameterStore | None = None):
        self.cfg = cfg
        self.decoder_calls = 0
        if params is None:
            params = self._init_params(np.random.default_rng(seed))
        self.params = params

    @property
    def dtype(self) -> np.dtype:
        return self.params.dtype

    def _init_params(self, rng: np.random.Generator) -> ParameterStore:
        c = self.cfg
        store = ParameterStore(dtype=c.dtype)
        ffn = c.ffn_mult * c.dim
        store.dense("mel_encoder.in", c.feature_dim, c.dim, rng)
        for i in range(c.encoder_layers):
            init_block(store, f"mel_encoder.block{i}", c.dim, ffn, rng)
        store.add("text_encoder.embed", rng.normal(0.0, EMBED_SCALE, size=(c.vocab_size, c.dim)))
        for i in range(c.text_encoder_layers):
            init_block(store, f"text_encoder.block{i}", c.dim, ffn, rng)
        init_predictor(store, c.dim, c.predictor, rng)
        store.add(SIGMA, np.full(1, c.sigma_init))
        for i in range(c.decoder_layers):
            init_block(store, f"decoder.block{i}", c.dim, ffn, rng)
        store.norm("decoder.ln_out", c.dim)
        store.dense("decoder.out", c.dim, c.vocab_size, rng)
        return store

    # building blocks -------------------------------------------------------

    def _features(self, x) -> Tensor:
        data = x.data if isinstance(x, Tensor) else np.asarray(x)
        if data.ndim != 2 or data.shape[1] != self.cfg.feature_dim:
            raise ValueError(f"features must be [T, {self.cfg.feature_dim}], got {data.shape}")
        if data.shape[0] < 2:
            raise ValueError(f"need at least 2 frames, got {data.shape[0]}")
        return Tensor(data.astype(self.dtype, copy=False))

    def encode_acoustic(self, x) -> Tensor:
        c, p = self.cfg, self.params
        feats = self._features(x)
        h = ops.linear(feats, p["mel_encoder.in.w"], p["mel_encoder.in.b"])
        h = ops.add(h, sinusoidal_positions(feats.shape[0], c.dim, self.dtype))
        return encoder_stack(h, p, "mel_encoder", c.encoder_layers, c.heads)

    def encode_text(self, tokens: Sequence[int], num_frames: int) -> Tensor:
        """Token embeddings with positions stretched over ``num_frames`` frames."""
        c, p = self.cfg, self.params
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.size < 1:
            raise ValueError("transcription must hold at least one token")
        L = len(ids)
        stride = (num_frames - 1) / (L - 1) if L > 1 else 0.0
        h = ops.embedding(p["text_encoder.embed"], ids)
        h = ops.add(h, sinusoidal_at(np.arange(L) * stride, c.dim, self.dtype))
        return encoder_stack(h, p, "text_encoder", c.text_encoder_layers, c.heads)

    def decode_semantic(self, semantic: Tensor) -> Tensor:
        """All output positions in one pass: [L, d] -> [L, V] logits."""
        c, p = self.cfg, self.params
        self.decoder_calls += 1
        h = ops.add(semantic, sinusoidal_positions(semantic.shape[0], c.dim, self.dtype))
        h = encoder_stack(h, p, "decoder", c.decoder_layers, c.heads)
        h = ops.layer_norm(h, p["decoder.ln_out.g"], p["decoder.ln_out.b"])
        return ops.linear(h, p["decoder.out.w"], p["decoder.out.b"])

    def predict_delta(self, e_s: Tensor) -> Tensor:
        return predictor_forward(e_s, self.cfg.predictor, self.params)

    # training graph --------------------------------------------------------

    def forward_train(self, features, tokens: Sequence[int], example_id=None,
                      delta_target: np.ndarray | None = None) -> tuple[Tensor, Tensor, Tensor, TrainStepOutput]:
        """Build the training graph; returns (total, ce, mse, diagnostics).

        ``delta_target`` replaces the generator's (detached) delta as the
        regression target.  Finite-difference checks need it: perturbing a
        parameter moves the generator's delta, which the tape treats as fixed.
        """
        if len(tokens) < 1:
            raise ValueError("transcription must hold at least one token")
        e_s = self.encode_acoustic(features)
        e_t = self.encode_text(tokens, e_s.shape[0])
        try:
            aln, rec, semantic = am.generator_forward(e_s, e_t, self.params[SIGMA])
        except DegenerateAlignment as err:
            raise DegenerateAlignment(err.span, example_id) from None
        logits = self.decode_semantic(semantic)
        ce = ops.cross_entropy(logits, tokens, self.cfg.label_smoothing)
        delta_star = self.predict_delta(e_s)
        target = aln.delta if delta_target is None else Tensor(np.asarray(delta_target, dtype=self.dtype))
        mse = alignment_loss(delta_star, target)
        total = ops.add(ce, ops.mul(mse, self.cfg.lam))
        out = TrainStepOutput(total.item(), ce.item(), mse.item(), aln, rec, delta_star)
        return total, ce, mse, out

    # inference graphs ------------------------------------------------------

    def _decode_with_delta(self, e_s: Tensor, delta: Tensor, L: int, timer=_no_timer) -> Hypothesis:
        with timer("predictor"):
            rec = am.reconstruct_from_delta(delta, L, self.params[SIGMA])
            semantic = am.semantic_encodings(rec.alpha_hat, e_s)
        with timer("decoder"):
            logits = self.decode_semantic(semantic)
            logp = ops.log_softmax(logits).data
            tokens = logp.argmax(axis=-1)
        return Hypothesis(tokens=[int(t) for t in tokens], length=L,
                          token_logprobs=[float(logp[i, t]) for i, t in enumerate(tokens)],
                          alpha_hat=rec.alpha_hat.data)

    def _fallback(self, e_s: Tensor, span: float, timer=_no_timer) -> Hypothesis:
        log.warning("degenerate predicted alignment (span %.3g); emitting a length-1 hypothesis", span)
        with timer("predictor"):
            T = e_s.shape[0]
            alpha_hat = Tensor(np.full((T, 1), 1.0 / T, dtype=self.dtype))
            semantic = am.semantic_encodings(alpha_hat, e_s)
        with timer("decoder"):
            logp = ops.log_softmax(self.decode_semantic(semantic)).data
        tok = int(logp[0].argmax())
        return Hypothesis([tok], 1, [float(logp[0, tok])], degenerate=True, alpha_hat=alpha_hat.data)

    def infer(self, features, timer=_no_timer) -> Hypothesis:
        with no_grad():
            with timer("encoder"):
                e_s = self.encode_acoustic(features)
            with timer("predictor"):
                delta_star = self.predict_delta(e_s)
                L = predict_length(delta_star)
                span = float(delta_star.data[1:].sum())
            if not span > am.SPAN_MIN:
                return self._fallback(e_s, span, timer)
            return self._decode_with_delta(e_s, delta_star, L, timer)

    def infer_oracle(self, features, tokens: Sequence[int]) -> Hypothesis:
        """Decode with the generator's alignment computed from the reference tokens."""
        with no_grad():
            e_s = self.encode_acoustic(features)
            e_t = self.encode_text(tokens, e_s.shape[0])
            aln = am.generate_alignment(e_s, e_t)
            span = float(aln.delta.data[1:].sum())
            if len(tokens) > 1 and not span > am.SPAN_MIN:
                return self._fallback(e_s, span)
            return self._decode_with_delta(e_s, aln.delta, len(tokens))

    def alignment_diagnostics(self, features, tokens: Sequence[int]) -> AlignmentBundle:
        with no_grad():
            e_s = self.encode_acoustic(features)
            return am.generate_alignment(e_s, self.encode_text(tokens, e_s.shape[0]))
