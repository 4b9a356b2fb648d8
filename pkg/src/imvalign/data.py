"""Synthetic monotonic transduction corpora and their on-disk formats.

Each token id owns a fixed random feature prototype.  An example samples a
token sequence, repeats every token for a random number of frames and adds
Gaussian noise, giving the many-frames-to-one-token monotone structure of
speech without any audio.

Corpus file layout (text, one record per line)::

    IMVALIGN-CORPUS v1
    <ids space-separated> | <T> <F> | <T*F floats, row-major> | <alignment or empty>
    ...
    END <count>
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = "IMVALIGN-CORPUS"
VERSION = 1


class CorpusError(ValueError):
    pass


class CorpusHeaderError(CorpusError):
    pass


class CorpusVersionError(CorpusError):
    pass


class CorpusTruncatedError(CorpusError):
    pass


class VocabError(ValueError):
    pass


@dataclass
class TranscriptionExample:
    features: np.ndarray                       # [T, F]
    tokens: list[int]                          # [L]
    true_alignment: list[int] | None = None    # frame -> token index, diagnostics only

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.tokens = [int(t) for t in self.tokens]
        if self.features.ndim != 2 or self.features.shape[0] < 2:
            raise ValueError(f"features must be [T>=2, F], got {self.features.shape}")
        if not self.tokens:
            raise ValueError("an example needs at least one token")
        if self.true_alignment is not None:
            self.true_alignment = [int(a) for a in self.true_alignment]
            check_alignment(self.true_alignment, self.num_frames, len(self.tokens))

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


def check_alignment(align: Sequence[int], T: int, L: int) -> None:
    a = np.asarray(align)
    if a.shape != (T,):
        raise ValueError(f"alignment has {a.size} entries for {T} frames")
    if a[0] != 0 or a[-1] != L - 1 or np.any(np.diff(a) < 0) or np.any(np.diff(a) > 1):
        raise ValueError("alignment must be a non-decreasing surjection onto 0..L-1")


@dataclass(frozen=True)
class SynthTaskConfig:
    vocab_size: int = 20
    feature_dim: int = 16
    tokens_min: int = 3
    tokens_max: int = 8
    frames_min: int = 2
    frames_max: int = 5
    noise_std: float = 0.0
    seed: int = 0
    onehot_prototypes: bool = False

    def __post_init__(self):
        if self.vocab_size < 1 or self.feature_dim < 1:
            raise ValueError("vocab_size and feature_dim must be >= 1")
        if self.tokens_min < 1 or self.tokens_min > self.tokens_max:
            raise ValueError(f"bad token range [{self.tokens_min}, {self.tokens_max}]")
        if self.frames_min < 1 or self.frames_min > self.frames_max:
            raise ValueError(f"bad frames-per-token range [{self.frames_min}, {self.frames_max}]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.onehot_prototypes and self.feature_dim < self.vocab_size:
            raise ValueError("one-hot prototypes need feature_dim >= vocab_size")
        if self.tokens_min * self.frames_min < 2 and self.tokens_max * self.frames_max < 2:
            raise ValueError("configuration can never produce the 2 frames an example needs")


def prototypes(cfg: SynthTaskConfig) -> np.ndarray:
    """Fixed per-token feature prototypes [V, F], a function of the seed only."""
    if cfg.onehot_prototypes:
        return np.eye(cfg.vocab_size, cfg.feature_dim)
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    return rng.normal(0.0, 1.0, size=(cfg.vocab_size, cfg.feature_dim))


def gen_example(cfg: SynthTaskConfig, rng: np.random.Generator,
                protos: np.ndarray | None = None) -> TranscriptionExample:
    if protos is None:
        protos = prototypes(cfg)
    while True:
        L = int(rng.integers(cfg.tokens_min, cfg.tokens_max + 1))
        tokens = rng.integers(0, cfg.vocab_size, size=L)
        reps = rng.integers(cfg.frames_min, cfg.frames_max + 1, size=L)
        if reps.sum() >= 2:
            break
    align = np.repeat(np.arange(L), reps)
    feats = protos[tokens[align]]
    if cfg.noise_std > 0:
        feats = feats + rng.normal(0.0, cfg.noise_std, size=feats.shape)
    return TranscriptionExample(feats, tokens.tolist(), align.tolist())


def gen_corpus(cfg: SynthTaskConfig, n: int, stream: int = 0) -> list[TranscriptionExample]:
    """``n`` examples; distinct ``stream`` values give disjoint draws over the same prototypes."""
    rng = np.random.default_rng([cfg.seed, stream])
    protos = prototypes(cfg)
    return [gen_example(cfg, rng, protos) for _ in range(n)]


# corpus file -----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def format_record(ex: TranscriptionExample) -> str:
    T, F = ex.features.shape
    parts = [
        " ".join(str(t) for t in ex.tokens),
        f"{T} {F}",
        " ".join(_fmt(v) for v in ex.features.reshape(-1)),
        "" if ex.true_alignment is None else " ".join(str(a) for a in ex.true_alignment),
    ]
    return " | ".join(parts).rstrip()


def write_corpus(examples: Iterable[TranscriptionExample], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MAGIC} v{VERSION}\n")
        for ex in examples:
            fh.write(format_record(ex) + "\n")
            n += 1
        fh.write(f"END {n}\n")
    return n


def _parse_header(line: str) -> None:
    parts = line.strip().split()
    if len(parts) != 2 or parts[0] != MAGIC or not parts[1].startswith("v"):
        raise CorpusHeaderError(f"not a corpus file (header {line.strip()[:40]!r})")
    try:
        version = int(parts[1][1:])
    except ValueError:
        raise CorpusHeaderError(f"unreadable corpus version {parts[1]!r}") from None
    if version != VERSION:
        raise CorpusVersionError(f"corpus version {version} unsupported (expected {VERSION})")


def parse_record(line: str, lineno: int = 0) -> TranscriptionExample:
    fields = [f.strip() for f in line.split("|")]
    if len(fields) < 3:
        raise CorpusTruncatedError(f"line {lineno}: record has {len(fields)} of 4 fields")
    if len(fields) == 3:
        fields.append("")
    if len(fields) != 4:
        raise CorpusError(f"line {lineno}: record has {len(fields)} fields, expected 4")
    try:
        tokens = [int(t) for t in fields[0].split()]
        dims = [int(v) for v in fields[1].split()]
        values = np.array([float(v) for v in fields[2].split()], dtype=np.float64)
        align = [int(a) for a in fields[3].split()] or None
    except ValueError as err:
        raise CorpusError(f"line {lineno}: {err}") from None
    if len(dims) != 2:
        raise CorpusError(f"line {lineno}: expected 'T F', got {fields[1]!r}")
    T, F = dims
    if values.size != T * F:
        raise CorpusTruncatedError(f"line {lineno}: {values.size} feature values, expected {T * F}")
    if align is not None and len(align) != T:
        raise CorpusTruncatedError(f"line {lineno}: alignment has {len(align)} entries, expected {T}")
    try:
        return TranscriptionExample(values.reshape(T, F), tokens, align)
    except ValueError as err:
        raise CorpusError(f"line {lineno}: {err}") from None


def read_corpus(path) -> list[TranscriptionExample]:
    text = Path(path).read_text(encoding="utf-8")
    if not text:
        raise CorpusHeaderError("empty file")
    lines = text.split("\n")
    _parse_header(lines[0])
    if not text.endswith("\n"):
        raise CorpusTruncatedError("file does not end with a complete line")
    body = lines[1:-1]
    if not body or not body[-1].startswith("END "):
        raise CorpusTruncatedError("missing END trailer")
    try:
        expected = int(body[-1].split()[1])
    except (IndexError, ValueError):
        raise CorpusError(f"bad trailer {body[-1]!r}") from None
    examples = [parse_record(line, i + 2) for i, line in enumerate(body[:-1])]
    if len(examples) != expected:
        raise CorpusTruncatedError(f"trailer promises {expected} records, found {len(examples)}")
    return examples


# vocabulary ---------------------------------------------------------------------------

def load_vocab(path) -> dict[str, int]:
    """One token string per line; the id is the line index."""
    table: dict[str, int] = {}
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        tok = line.rstrip("\r")
        if tok in table:
            raise VocabError(f"duplicate token {tok!r} on lines {table[tok] + 1} and {i + 1}")
        table[tok] = i
    return table


def write_vocab(tokens: Sequence[str], path) -> None:
    if len(set(tokens)) != len(tokens):
        raise VocabError("duplicate tokens")
    Path(path).write_text("".join(f"{t}\n" for t in tokens), encoding="utf-8")


def default_vocab(V: int) -> list[str]:
    return [f"t{i}" for i in range(V)]
