"""Command-line entry point: gen, train, eval, bench, align-viz.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every subcommand accepts ``--config FILE`` holding ``key = value`` lines
(``#`` starts a comment); keys are flag names, and flags given on the
command line override the file.  ``IMVALIGN_SEED`` sets the default seed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint as ckpt_io
from . import data
from .alignment import DegenerateAlignment
from .bench import benchmark_inference, linear_fit, predictor_scaling
from .model import ModelConfig, Transducer
from .ops import ConfigurationError
from .optim import make_optimizer
from .scoring import ClassMapError, CompatibilityError, UndefinedRateError, evaluate_corpus, load_class_map
from .train import NonFiniteLoss, TrainConfig, Trainer
from .viz import write_alignment_views

log = logging.getLogger("imvalign")

SEED_ENV = "IMVALIGN_SEED"
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise UsageError(f"cannot read config file {path}: {err.strerror}") from None
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        out[key.strip().replace("_", "-")] = value.strip()
    return out


# parser ----------------------------------------------------------------------

def _task_flags(p: argparse.ArgumentParser) -> None:
    d = data.SynthTaskConfig()
    p.add_argument("--vocab-size", type=int, default=d.vocab_size)
    p.add_argument("--feature-dim", type=int, default=d.feature_dim)
    p.add_argument("--tokens-min", type=int, default=d.tokens_min)
    p.add_argument("--tokens-max", type=int, default=d.tokens_max)
    p.add_argument("--frames-min", type=int, default=d.frames_min)
    p.add_argument("--frames-max", type=int, default=d.frames_max)
    p.add_argument("--noise-std", type=float, default=d.noise_std)
    p.add_argument("--onehot", type=_bool, default=False, help="one-hot token prototypes")


def _model_flags(p: argparse.ArgumentParser) -> None:
    d = ModelConfig(vocab_size=1, feature_dim=1)
    p.add_argument("--vocab-size", type=int, default=None, help="default: vocab file size, else max token id + 1")
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--heads", type=int, default=d.heads)
    p.add_argument("--encoder-layers", type=int, default=d.encoder_layers)
    p.add_argument("--text-encoder-layers", type=int, default=d.text_encoder_layers)
    p.add_argument("--decoder-layers", type=int, default=d.decoder_layers)
    p.add_argument("--predictor-kernel", type=int, default=d.predictor_kernel)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--sigma-init", type=float, default=d.sigma_init)
    p.add_argument("--label-smoothing", type=float, default=d.label_smoothing)
    p.add_argument("--dtype", choices=("float32", "float64"), default=d.dtype)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imvalign", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = parser.add_subparsers(dest="command", required=True)
    parser.set_defaults(_subparsers=sub.choices)

    def add(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value file; command-line flags take precedence")
        p.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")
        return p

    g = add("gen", "generate a synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--examples", type=int, default=100)
    g.add_argument("--stream", type=int, default=0, help="independent split index under one task seed")
    g.add_argument("--vocab-out", default=None, help="also write a vocabulary file")
    _task_flags(g)

    t = add("train", "train a model on a corpus")
    t.add_argument("--corpus", required=True)
    t.add_argument("--out", required=True, help="checkpoint to write")
    t.add_argument("--vocab", default=None)
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    d = TrainConfig()
    t.add_argument("--steps", type=int, default=d.steps, help="global step count to train up to")
    t.add_argument("--lr", type=float, default=d.lr)
    t.add_argument("--optimizer", choices=("adam", "sgd"), default=d.optimizer)
    t.add_argument("--grad-clip", type=float, default=d.grad_clip)
    t.add_argument("--accumulate", type=int, default=d.accumulate)
    t.add_argument("--decay-fraction", type=float, default=d.decay_fraction)
    t.add_argument("--log-interval", type=int, default=d.log_interval)
    _model_flags(t)

    e = add("eval", "score a checkpoint on a corpus")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--corpus", required=True)
    e.add_argument("--mode", choices=("baseline", "oracle"), default="baseline")
    e.add_argument("--class-map", default=None, help="token<TAB>class file for a class-mapped rate")
    e.add_argument("--vocab", default=None, help="vocabulary for --class-map (default t0, t1, ...)")

    b = add("bench", "time inference per stage")
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--corpus", required=True)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--frame-shift", type=float, default=0.01)
    b.add_argument("--scaling", default=None, metavar="T1,T2,...",
                   help="also time the predictor stage over these frame counts and fit a line")

    v = add("align-viz", "render reconstructed attention as an SVG heatmap")
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--corpus", required=True)
    v.add_argument("--index", type=int, default=0)
    v.add_argument("--out", required=True, help="SVG path; the matrix goes next to it as .txt")
    v.add_argument("--mode", choices=("baseline", "oracle", "both"), default="both")
    v.add_argument("--show-generator", type=_bool, default=False, help="add the generator's soft attention")
    return parser


def _config_argv(path, subparser_flags: set[str]) -> list[str]:
    argv = []
    for key, value in read_config_file(path).items():
        flag = f"--{key}"
        if flag in ("--config", "--command"):
            raise UsageError(f"config key {key!r} is not allowed")
        if flag not in subparser_flags:
            raise UsageError(f"unknown config key {key!r}")
        argv += [flag, value]
    return argv


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        subparser = args._subparsers[args.command]
        flags = {s for a in subparser._actions for s in a.option_strings}
        argv = list(argv)
        pos = argv.index(args.command) + 1
        args = parser.parse_args(argv[:pos] + _config_argv(args.config, flags) + argv[pos:])
    if args.seed is None:
        args.seed = default_seed()
    return args


# helpers ---------------------------------------------------------------------

def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _writable(path, what: str) -> Path:
    p = Path(path)
    if not p.parent.is_dir():
        raise UsageError(f"cannot write {what}: directory {p.parent} does not exist")
    return p


def _load_model(path):
    return ckpt_io.load_model(_existing(path, "checkpoint"))


def _load_corpus(path):
    return data.read_corpus(_existing(path, "corpus"))


# commands --------------------------------------------------------------------

def cmd_gen(args) -> int:
    try:
        cfg = data.SynthTaskConfig(args.vocab_size, args.feature_dim, args.tokens_min, args.tokens_max,
                                   args.frames_min, args.frames_max, args.noise_std, args.seed, args.onehot)
    except ValueError as err:
        raise UsageError(str(err)) from None
    if args.examples < 0:
        raise UsageError("--examples must be >= 0")
    out = _writable(args.out, "corpus")
    corpus = data.gen_corpus(cfg, args.examples, args.stream)
    data.write_corpus(corpus, out)
    if args.vocab_out:
        data.write_vocab(data.default_vocab(cfg.vocab_size), _writable(args.vocab_out, "vocabulary"))
    print(f"examples\t{len(corpus)}")
    if corpus:
        print(f"mean_frames\t{np.mean([ex.num_frames for ex in corpus]):.3f}")
        print(f"mean_tokens\t{np.mean([len(ex.tokens) for ex in corpus]):.3f}")
    return EXIT_OK


def _model_config(args, corpus, vocab_size_hint: int | None) -> ModelConfig:
    vocab = args.vocab_size or vocab_size_hint or (max(max(ex.tokens) for ex in corpus) + 1)
    try:
        return ModelConfig(vocab_size=vocab, feature_dim=corpus[0].features.shape[1], dim=args.dim,
                           heads=args.heads, encoder_layers=args.encoder_layers,
                           text_encoder_layers=args.text_encoder_layers, decoder_layers=args.decoder_layers,
                           predictor_kernel=args.predictor_kernel, lam=args.lam, sigma_init=args.sigma_init,
                           label_smoothing=args.label_smoothing, dtype=args.dtype)
    except (ConfigurationError, ValueError) as err:
        raise UsageError(str(err)) from None


def cmd_train(args) -> int:
    try:
        tcfg = TrainConfig(steps=args.steps, lr=args.lr, optimizer=args.optimizer, grad_clip=args.grad_clip,
                           seed=args.seed, log_interval=args.log_interval, accumulate=args.accumulate,
                           decay_fraction=args.decay_fraction)
    except ValueError as err:
        raise UsageError(str(err)) from None
    out = _writable(args.out, "checkpoint")
    corpus = _load_corpus(args.corpus)
    if not corpus:
        raise UsageError(f"corpus {args.corpus} holds no examples")
    vocab_size = len(data.load_vocab(_existing(args.vocab, "vocabulary"))) if args.vocab else None

    start = 0
    if args.resume:
        ck = ckpt_io.read_checkpoint(_existing(args.resume, "checkpoint"))
        model = ckpt_io.model_from_checkpoint(ck)
        optimizer = make_optimizer(ck.meta.get("optimizer", tcfg.optimizer), model.params, tcfg.lr)
        state = ck.optimizer_state()
        if state:
            optimizer.load_state(state)
        start = int(ck.meta.get("step", 0))
        log.info("resuming from %s at step %d", args.resume, start)
    else:
        mcfg = _model_config(args, corpus, vocab_size)
        model = Transducer(mcfg, seed=args.seed)
        optimizer = None

    cfg = model.cfg
    if corpus[0].features.shape[1] != cfg.feature_dim:
        raise CompatibilityError(f"corpus has {corpus[0].features.shape[1]} features, model expects {cfg.feature_dim}")
    top = max(max(ex.tokens) for ex in corpus)
    if top >= cfg.vocab_size:
        raise CompatibilityError(f"corpus uses token id {top} but the vocabulary holds {cfg.vocab_size}")

    trainer = Trainer(model, corpus, tcfg, optimizer=optimizer, start_step=start)
    trainer.run()
    ckpt_io.save_checkpoint(out, model, trainer.optimizer, meta={"step": trainer.step, "seed": args.seed})
    if trainer.history:
        print(f"final_loss\t{np.mean(trainer.history[-50:]):.6f}")
    print(f"steps\t{trainer.step}")
    print(f"skipped\t{len(trainer.skipped)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = _load_model(args.checkpoint)
    corpus = _load_corpus(args.corpus)
    class_map = None
    if args.class_map:
        vocab = (data.load_vocab(_existing(args.vocab, "vocabulary")) if args.vocab
                 else {t: i for i, t in enumerate(data.default_vocab(model.cfg.vocab_size))})
        class_map = load_class_map(_existing(args.class_map, "class map"), vocab)
    report, mapped, len_acc = evaluate_corpus(model, corpus, args.mode, class_map)
    print(f"mode\t{args.mode}")
    print(f"utterances\t{len(corpus)}")
    for line in report.lines():
        print(line)
    if mapped is not None:
        for line in mapped.lines("class_"):
            print(line)
    print(f"length_accuracy\t{len_acc:.6f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.repeats < 3:
        raise UsageError("--repeats must be >= 3")
    if not args.frame_shift > 0:
        raise UsageError("--frame-shift must be > 0")
    model = _load_model(args.checkpoint)
    corpus = _load_corpus(args.corpus)
    grid = _int_list(args.scaling, "--scaling") if args.scaling else None
    for line in benchmark_inference(model, corpus, args.repeats, args.frame_shift).lines():
        print(line)
    if grid:
        points = predictor_scaling(model, grid, repeats=max(args.repeats, 5), seed=args.seed)
        for T, sec in points:
            print(f"predictor_T{T}_seconds\t{sec:.6f}")
        slope, intercept, r = linear_fit(*zip(*points))
        print(f"predictor_slope\t{slope:.6e}")
        print(f"predictor_intercept\t{intercept:.6e}")
        print(f"predictor_correlation\t{r:.6f}")
    return EXIT_OK


def _int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers, got {text!r}") from None
    if len(values) < 2 or min(values) < 2:
        raise UsageError(f"{flag} needs at least two frame counts, each >= 2")
    return values


def cmd_align_viz(args) -> int:
    model = _load_model(args.checkpoint)
    corpus = _load_corpus(args.corpus)
    if not 0 <= args.index < len(corpus):
        raise UsageError(f"--index {args.index} out of range for {len(corpus)} examples")
    out = _writable(args.out, "image")
    ex = corpus[args.index]
    panels = []
    if args.mode in ("baseline", "both"):
        panels.append(("baseline", model.infer(ex.features).alpha_hat.T))
    if args.mode in ("oracle", "both"):
        panels.append(("oracle", model.infer_oracle(ex.features, ex.tokens).alpha_hat.T))
    if args.show_generator:
        panels.append(("generator", model.alignment_diagnostics(ex.features, ex.tokens).alpha.data.T))
    svg, txt = write_alignment_views(out, panels)
    print(f"svg\t{svg}")
    print(f"matrix\t{txt}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench, "align-viz": cmd_align_viz}

RUNTIME_ERRORS = (data.CorpusError, data.VocabError, ckpt_io.CheckpointError, NonFiniteLoss, CompatibilityError,
                  ClassMapError, UndefinedRateError, DegenerateAlignment, OSError)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as err:
        print(f"imvalign: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as err:
        print(f"imvalign {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except RUNTIME_ERRORS as err:
        print(f"imvalign {args.command}: failed: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
