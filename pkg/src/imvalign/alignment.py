"""Index-mapping-vector alignment generator and distance-aware attention reconstruction.

Generator (needs both sequences)::

    alpha = softmax_j(e_s @ e_t.T / sqrt(d))         frame-to-token attention
    imv   = alpha @ [0, 1, ..., L-1]                  expected token position per frame
    delta = [0, relu(imv[1:] - imv[:-1])]             non-negative advance per frame

Reconstruction (needs only delta and L)::

    raw   = cumsum(delta)
    pos   = (raw - raw[0]) / (raw[-1] - raw[0]) * (L - 1)
    alpha_hat[i, j] = softmax_i(-(pos[i] - j)**2 / sigma**2)

``alpha_hat`` is kept frame-major ``[T, L]``; the semantic encodings are
``alpha_hat.T @ e_s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Parameter, Tensor

SPAN_MIN = 1e-6
SIGMA_FLOOR = 1e-4


class DegenerateAlignment(ArithmeticError):
    """Accumulated positions do not span any distance, so they cannot be rescaled."""

    def __init__(self, span: float, example_id=None):
        self.span = span
        self.example_id = example_id
        where = "" if example_id is None else f" (example {example_id})"
        super().__init__(f"degenerate alignment: position span {span:.3g} <= {SPAN_MIN:g}{where}")


@dataclass(frozen=True)
class AlignmentBundle:
    alpha: Tensor       # [T, L]
    imv: Tensor         # [T]
    increments: Tensor  # [T-1], before clipping
    delta: Tensor       # [T]


@dataclass(frozen=True)
class ReconstructionBundle:
    positions_raw: Tensor  # [T]
    positions: Tensor      # [T], scaled onto 0..L-1
    index_vector: Tensor   # [L]
    distances: Tensor      # [T, L]
    alpha_hat: Tensor      # [T, L], columns sum to 1
    sigma: Parameter


def index_vector(L: int, dtype=np.float64) -> Tensor:
    return Tensor(np.arange(L, dtype=dtype))


def effective_sigma(sigma: Tensor) -> Tensor:
    """Positive width actually used in the kernel: |sigma| + 1e-4."""
    return ops.add(ops.abs(sigma), SIGMA_FLOOR)


def compute_attention(e_s: Tensor, e_t: Tensor) -> Tensor:
    if e_s.ndim != 2 or e_t.ndim != 2 or e_s.shape[1] != e_t.shape[1]:
        raise ops.DimensionError(f"embedding widths differ: {e_s.shape} vs {e_t.shape}")
    d = e_s.shape[1]
    logits = ops.mul(ops.matmul(e_s, ops.transpose(e_t)), d ** -0.5)
    return ops.row_softmax(logits)


def compute_imv(alpha: Tensor) -> Tensor:
    T, L = alpha.shape
    idx = np.arange(L, dtype=alpha.dtype).reshape(L, 1)
    return ops.reshape(ops.matmul(alpha, Tensor(idx)), (T,))


def imv_increments(imv: Tensor) -> tuple[Tensor, Tensor]:
    """Return (raw increments [T-1], clipped delta [T] with delta[0] = 0)."""
    zero = Tensor(np.zeros(1, dtype=imv.dtype))
    if imv.shape[0] < 2:
        return Tensor(np.zeros(0, dtype=imv.dtype)), zero
    inc = ops.sub(imv[1:], imv[:-1])
    return inc, ops.concat([zero, ops.relu(inc)])


def accumulate_positions(delta: Tensor) -> Tensor:
    return ops.cumsum_last(delta)


def position_span(positions_raw: Tensor) -> float:
    data = positions_raw.data
    return float(data[-1] - data[0])


def scale_positions(positions_raw: Tensor, L: int, eps: float = 0.0) -> Tensor:
    """Affinely map accumulated positions onto [0, L-1].

    Raises :class:`DegenerateAlignment` when the span is at most 1e-6.  A
    single-token target needs no span: every frame sits at position 0.
    """
    if L == 1:
        return ops.mul(positions_raw, 0.0)
    span = position_span(positions_raw)
    if not span > SPAN_MIN:
        raise DegenerateAlignment(span)
    start = positions_raw[0:1]
    end = positions_raw[-1:]
    width = ops.add(ops.sub(end, start), eps) if eps else ops.sub(end, start)
    return ops.mul(ops.div(ops.sub(positions_raw, start), width), float(L - 1))


def squared_distances(positions: Tensor, L: int) -> Tensor:
    T = positions.shape[0]
    col = ops.reshape(positions, (T, 1))
    row = np.arange(L, dtype=positions.dtype).reshape(1, L)
    return ops.square(ops.sub(col, row))


def reconstruct_attention(positions: Tensor, L: int, sigma: Tensor) -> Tensor:
    return _reconstruct(positions, L, sigma)[1]


def _reconstruct(positions: Tensor, L: int, sigma: Tensor) -> tuple[Tensor, Tensor]:
    dist = squared_distances(positions, L)
    s = effective_sigma(sigma)
    logits = ops.mul(dist, ops.div(-1.0, ops.square(s)))
    # softmax over frames (axis 0) subtracts the per-column max first
    return dist, ops.softmax(logits, axis=0)


def reconstruct_from_delta(delta: Tensor, L: int, sigma: Parameter) -> ReconstructionBundle:
    raw = accumulate_positions(delta)
    pos = scale_positions(raw, L)
    dist, alpha_hat = _reconstruct(pos, L, sigma)
    return ReconstructionBundle(raw, pos, index_vector(L, delta.dtype), dist, alpha_hat, sigma)


def generate_alignment(e_s: Tensor, e_t: Tensor) -> AlignmentBundle:
    alpha = compute_attention(e_s, e_t)
    imv = compute_imv(alpha)
    inc, delta = imv_increments(imv)
    return AlignmentBundle(alpha, imv, inc, delta)


def semantic_encodings(alpha_hat: Tensor, e_s: Tensor) -> Tensor:
    return ops.matmul(ops.transpose(alpha_hat), e_s)


def generator_forward(e_s: Tensor, e_t: Tensor, sigma: Parameter
                      ) -> tuple[AlignmentBundle, ReconstructionBundle, Tensor]:
    aln = generate_alignment(e_s, e_t)
    rec = reconstruct_from_delta(aln.delta, e_t.shape[0], sigma)
    return aln, rec, semantic_encodings(rec.alpha_hat, e_s)
