"""Token error rates: Levenshtein scoring, class-mapped scoring, corpus evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class UndefinedRateError(ZeroDivisionError):
    pass


class ClassMapError(KeyError):
    pass


class CompatibilityError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreReport:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_tokens: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def error_rate(self) -> float:
        if self.ref_tokens == 0:
            raise UndefinedRateError(f"error rate undefined for an empty reference ({self.errors} errors)")
        return self.errors / self.ref_tokens

    def __add__(self, other: "ScoreReport") -> "ScoreReport":
        return ScoreReport(self.substitutions + other.substitutions, self.deletions + other.deletions,
                           self.insertions + other.insertions, self.ref_tokens + other.ref_tokens)

    def lines(self, prefix: str = "") -> list[str]:
        try:
            rate = f"{self.error_rate:.6f}"
        except UndefinedRateError:
            rate = "undefined"
        return [f"{prefix}substitutions\t{self.substitutions}", f"{prefix}deletions\t{self.deletions}",
                f"{prefix}insertions\t{self.insertions}", f"{prefix}ref_tokens\t{self.ref_tokens}",
                f"{prefix}error_rate\t{rate}"]


def edit_distance(ref: Sequence, hyp: Sequence) -> ScoreReport:
    """Unit-cost Levenshtein alignment with S/D/I counts.

    Among minimal alignments the backtrace prefers substitution (or match),
    then insertion, then deletion.
    """
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        r = ref[i - 1]
        for j in range(1, m + 1):
            diag = cost[i - 1, j - 1] + (r != hyp[j - 1])
            cost[i, j] = min(diag, cost[i, j - 1] + 1, cost[i - 1, j] + 1)
    s = d = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif j > 0 and cost[i, j] == cost[i, j - 1] + 1:
            ins += 1
            j -= 1
        else:
            d += 1
            i -= 1
    return ScoreReport(int(s), d, ins, n)


def class_mapped_error(ref: Sequence[int], hyp: Sequence[int], class_map: Mapping[int, object]) -> ScoreReport:
    """Score after mapping both sequences through a many-to-one class map."""
    try:
        return edit_distance([class_map[t] for t in ref], [class_map[t] for t in hyp])
    except KeyError as err:
        raise ClassMapError(f"token id {err.args[0]} has no class") from None


def load_class_map(path, vocab: Mapping[str, int]) -> dict[int, str]:
    """Read ``token<TAB>class`` lines into an id -> class map."""
    out: dict[int, str] = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ClassMapError(f"line {n}: expected 'token<TAB>class'")
        tok, cls = parts
        if tok not in vocab:
            raise ClassMapError(f"line {n}: token {tok!r} not in vocabulary")
        out[vocab[tok]] = cls
    return out


def evaluate_corpus(model, corpus, mode: str = "baseline", class_map: Mapping[int, object] | None = None
                    ) -> tuple[ScoreReport, ScoreReport | None, float]:
    """Micro-averaged scores over ``corpus``.

    Returns (token report, class-mapped report or None, length accuracy),
    where length accuracy is the fraction of examples with |L* - L| <= 1.
    """
    if mode not in ("baseline", "oracle"):
        raise ValueError(f"mode must be 'baseline' or 'oracle', got {mode!r}")
    total = ScoreReport()
    mapped = ScoreReport() if class_map is not None else None
    len_ok = 0
    for i, ex in enumerate(corpus):
        if max(ex.tokens) >= model.cfg.vocab_size:
            raise CompatibilityError(f"example {i} uses token {max(ex.tokens)} beyond vocab {model.cfg.vocab_size}")
        if ex.features.shape[1] != model.cfg.feature_dim:
            raise CompatibilityError(f"example {i} has {ex.features.shape[1]} features, model expects {model.cfg.feature_dim}")
        if mode == "oracle":
            if not ex.tokens:
                raise CompatibilityError(f"oracle mode needs transcripts (example {i})")
            hyp = model.infer_oracle(ex.features, ex.tokens)
        else:
            hyp = model.infer(ex.features)
        total = total + edit_distance(ex.tokens, hyp.tokens)
        if mapped is not None:
            mapped = mapped + class_mapped_error(ex.tokens, hyp.tokens, class_map)
        len_ok += abs(hyp.length - len(ex.tokens)) <= 1
    return total, mapped, (len_ok / len(corpus) if len(corpus) else 1.0)
