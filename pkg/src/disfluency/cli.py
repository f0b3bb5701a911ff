"""Command-line pipeline: synthesize, train, evaluate, correct, gradcheck.

One executable with subcommands. Options can come from a key=value config
file (``--config``, or the DISFLUENCY_CONFIG environment variable for the
default path); explicit flags always win. Exit codes: 0 success, 2 data
error, 3 numeric training error, 4 artifact mismatch, 5 diagnostic failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .corpus import Corpus, DisfluencyType, load_corpus, mix_corpora, save_corpus
from .errors import (
    DisfluencyError,
    NumericError,
    VocabMismatchError,
)
from .evaluate import (
    apply_correction,
    evaluate_model,
    load_tagger,
    predict,
    report_json,
    report_text,
    score,
)
from .gradcheck import grad_check_report
from .model import AdversarialTagger, DiscriminatorConfig, EncoderConfig, GeneratorConfig
from .synth import Lexicons, SynthConfig, synthesize_with_stats
from .textnorm import Vocabulary, build_vocab, normalize
from .trainer import MODES, MODE_SUPERVISED, MODE_ADV_UNLABELED, TrainConfig, train

CONFIG_ENV = "DISFLUENCY_CONFIG"

EXIT_OK = 0
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_MISMATCH = 4
EXIT_DIAGNOSTIC = 5


def _corpus_format(path: str | Path) -> str:
    return "tsv" if str(path).endswith(".tsv") else "jsonl"


def _read_fluent_lines(path: Path) -> list[list[str]]:
    sentences = []
    for line in path.read_text(encoding="utf-8").splitlines():
        tokens = normalize(line)
        if tokens:
            sentences.append(tokens)
    return sentences


def _parse_type_weights(spec: str) -> dict[DisfluencyType, float]:
    weights = {t: 0.0 for t in DisfluencyType}
    for item in spec.split(","):
        name, _, value = item.partition("=")
        name = name.strip()
        try:
            dtype = DisfluencyType(name)
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"unknown disfluency type {name!r}; valid: "
                + ",".join(t.value for t in DisfluencyType)
            ) from None
        weights[dtype] = float(value) if value else 1.0
    return weights


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    lex = Lexicons.load(args.lexicon) if args.lexicon else Lexicons.default()
    sentences = _read_fluent_lines(Path(args.infile))
    cfg_kwargs = dict(
        budget=args.budget,
        max_injections_per_sentence=args.max_injections,
        stutter_max_fragments=args.stutter_max_fragments,
        seed=args.seed,
    )
    if args.type_weights:
        cfg_kwargs["type_weights"] = args.type_weights
    cfg = SynthConfig(**cfg_kwargs)
    corpus, stats = synthesize_with_stats(
        sentences, cfg, lex, language=args.lang, jobs=args.jobs
    )
    save_corpus(corpus, args.out, _corpus_format(args.out))
    print(f"wrote {len(corpus.labeled)} pairs to {args.out}")
    print(f"disfluent fraction: {stats.achieved_fraction:.4f} (target {cfg.budget})")
    for dtype, count in stats.per_type.items():
        if count:
            print(f"  {dtype.value}: {count}")
    return EXIT_OK


def cmd_train(args) -> int:
    labeled = load_corpus(args.labeled, _corpus_format(args.labeled))
    if args.unlabeled and args.mode == MODE_SUPERVISED:
        print("warning: --unlabeled is ignored in supervised mode", file=sys.stderr)
    corpus = labeled
    if args.unlabeled and args.mode != MODE_SUPERVISED:
        corpus = mix_corpora(labeled, load_corpus(args.unlabeled, _corpus_format(args.unlabeled)))
    vocab = build_vocab([corpus], min_freq=args.min_freq)
    cfg = TrainConfig(
        steps=args.steps,
        batch_labeled=args.batch_labeled,
        batch_unlabeled=args.batch_unlabeled,
        lr_d=args.lr_d,
        lr_g=args.lr_g,
        seed=args.seed,
        mode=args.mode,
        eval_every=args.eval_every,
        feature_match_weight=args.feature_match_weight,
        val_fraction=args.val_fraction,
    )
    enc_cfg = EncoderConfig(
        vocab_size=len(vocab),
        model_dim=args.model_dim,
        n_layers=args.n_layers,
        n_heads=args.n_heads,
        max_len=args.max_len,
        ff_dim=args.ff_dim,
    )
    gen_cfg = GeneratorConfig(noise_dim=args.noise_dim, hidden_dim=args.gen_hidden)
    disc_cfg = DiscriminatorConfig(hidden_dim=args.disc_hidden)
    result = train(corpus, vocab, cfg, enc_cfg, gen_cfg, disc_cfg, out_dir=args.out_dir)
    print(f"trained {cfg.steps} steps ({cfg.mode})")
    print(f"best val F1 {result.best_f1:.2f} at step {result.best_step}")
    print(f"checkpoints: {result.best_checkpoint} {result.final_checkpoint}")
    print(f"history: {result.history_path}")
    return EXIT_OK


def _predict_chunk(payload) -> list:
    ckpt, vocab_path, sentences = payload
    vocab = Vocabulary.load(vocab_path)
    model, _ = load_tagger(ckpt, vocab)
    return predict(model, sentences, vocab)


def _load_for_inference(args) -> tuple[AdversarialTagger, Vocabulary]:
    vocab_path = args.vocab or str(Path(args.ckpt).parent / "vocab.txt")
    vocab = Vocabulary.load(vocab_path)
    model, _ = load_tagger(args.ckpt, vocab)
    return model, vocab


def cmd_eval(args) -> int:
    model, vocab = _load_for_inference(args)
    test = load_corpus(args.test, _corpus_format(args.test))
    if args.jobs > 1 and len(test.labeled) > 1:
        max_len = model.enc_cfg.max_len
        pairs = list(test.labeled)
        chunks = np.array_split(np.arange(len(pairs)), args.jobs)
        vocab_path = args.vocab or str(Path(args.ckpt).parent / "vocab.txt")
        payloads = [
            (args.ckpt, vocab_path, [pairs[i].disfluent.tokens for i in chunk])
            for chunk in chunks
            if len(chunk)
        ]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            parts = list(pool.map(_predict_chunk, payloads))
        pred = [labels for part in parts for labels in part]
        gold = [list(p.disfluent.labels[:max_len]) for p in pairs]
        tokens = [list(p.disfluent.tokens[:max_len]) for p in pairs]
        report = score(gold, pred, tokens)
        report.n_truncated = sum(1 for p in pairs if len(p.disfluent.tokens) > max_len)
    else:
        report = evaluate_model(model, test.labeled, vocab)
    text = report_text(report, title=f"evaluation of {args.ckpt} on {args.test}")
    print(text, end="")
    if args.report:
        prefix = Path(args.report)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        Path(str(prefix) + ".txt").write_text(text, encoding="utf-8")
        Path(str(prefix) + ".json").write_text(report_json(report), encoding="utf-8")
        print(f"wrote {prefix}.txt and {prefix}.json")
    return EXIT_OK


def cmd_correct(args) -> int:
    model, vocab = _load_for_inference(args)
    sentences = [normalize(line) for line in Path(args.infile).read_text(encoding="utf-8").splitlines()]
    nonempty = [s for s in sentences if s]
    labels = iter(predict(model, nonempty, vocab))
    out_lines = []
    for sent in sentences:
        if not sent:
            out_lines.append("")
            continue
        sent_labels = next(labels)
        kept = apply_correction(sent[: len(sent_labels)], sent_labels)
        out_lines.append(" ".join(kept))
    text = "\n".join(out_lines) + ("\n" if out_lines else "")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .trainer import d_loss, g_loss
    from .model import HiddenSequence

    rng = np.random.default_rng(args.seed)
    model = AdversarialTagger(
        EncoderConfig(vocab_size=32, model_dim=16, n_layers=2, n_heads=2, max_len=8, ff_dim=24),
        GeneratorConfig(noise_dim=8, hidden_dim=16),
        DiscriminatorConfig(hidden_dim=16),
        seed=args.seed,
        dtype=np.float64,
    )
    ids = rng.integers(2, 32, (4, 8)).astype(np.int32)
    mask = (rng.random((4, 8)) < 0.8).astype(np.float64)
    mask[:, 0] = 1
    labels = rng.integers(0, 2, (4, 8)).astype(np.int32)
    ids_u = rng.integers(2, 32, (3, 8)).astype(np.int32)
    mask_u = np.ones((3, 8), dtype=np.float64)
    z = rng.standard_normal((4, 8))

    def d_closure():
        fake = model.generate(z)
        fake = HiddenSequence(fake.hidden.detach(), fake.mask)
        total, _ = d_loss(model, (ids, mask, labels), (ids_u, mask_u), fake)
        return total

    def g_closure():
        fake = model.generate(z)
        real = model.discriminate(model.encode(ids, mask)).pooled.detach()
        total, _ = g_loss(model, fake, real, feature_match_weight=1.0)
        return total

    rep_d = grad_check_report(d_closure, model.d_parameters(), h=args.h, max_coords=args.max_coords)
    rep_g = grad_check_report(g_closure, model.g_parameters(), h=args.h, max_coords=args.max_coords)
    print(f"d_loss: {rep_d}")
    print(f"g_loss: {rep_g}")
    worst = rep_d if rep_d.max_rel_error >= rep_g.max_rel_error else rep_g
    if worst.max_rel_error < 1e-3:
        print(f"gradcheck PASS (max rel error {worst.max_rel_error:.3e})")
        return EXIT_OK
    print(
        f"gradcheck FAIL: {worst.worst_param}[{worst.worst_index}] "
        f"rel error {worst.max_rel_error:.3e}"
    )
    return EXIT_DIAGNOSTIC


# ---------------------------------------------------------------------------
# parser / config file plumbing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disfluency",
        description="Adversarially trained disfluency correction, end to end.",
    )
    parser.add_argument("--config", help="key=value config file (flags override)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="inject disfluencies into fluent text")
    p.add_argument("--in", dest="infile", required=True, help="fluent text, one sentence per line")
    p.add_argument("--out", required=True, help="output corpus (.jsonl or .tsv)")
    p.add_argument("--lexicon", help="lexicon file (default: packaged English)")
    p.add_argument("--budget", type=float, default=0.2)
    p.add_argument("--max-injections", type=int, default=3)
    p.add_argument("--stutter-max-fragments", type=int, default=2)
    p.add_argument("--type-weights", type=_parse_type_weights, default=None,
                   help="e.g. filled_pause=2,repetition_correction=1,stutter=0")
    p.add_argument("--lang", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a tagger")
    p.add_argument("--labeled", required=True)
    p.add_argument("--unlabeled", default=None)
    p.add_argument("--mode", choices=MODES, default=MODE_ADV_UNLABELED)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-labeled", type=int, default=16)
    p.add_argument("--batch-unlabeled", type=int, default=16)
    p.add_argument("--lr-d", type=float, default=2e-3)
    p.add_argument("--lr-g", type=float, default=2e-3)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--feature-match-weight", type=float, default=1.0)
    p.add_argument("--val-fraction", type=float, default=0.15)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--model-dim", type=int, default=32)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--n-heads", type=int, default=2)
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--ff-dim", type=int, default=64)
    p.add_argument("--noise-dim", type=int, default=16)
    p.add_argument("--gen-hidden", type=int, default=64)
    p.add_argument("--disc-hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a labeled test corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--vocab", default=None, help="default: vocab.txt beside the checkpoint")
    p.add_argument("--report", default=None, help="prefix for .txt/.json report files")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("correct", help="rewrite raw text fluently")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None, help="default: stdout")
    p.add_argument("--vocab", default=None)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("gradcheck", help="verify analytic gradients of the full losses")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--max-coords", type=int, default=64)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _load_config_file(path: str) -> dict[str, str]:
    values = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DisfluencyError(f"{path}:{line_no}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Turn config-file entries into parser defaults; flags still override."""
    path = None
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif arg.startswith("--config="):
            path = arg.split("=", 1)[1]
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return argv
    values = _load_config_file(path)

    known: dict[str, argparse.Action] = {}
    for action in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
        for act in action._actions:
            if act.dest not in ("help",):
                known.setdefault(act.dest, act)
    unknown = set(values) - set(known)
    if unknown:
        raise DisfluencyError(f"unknown config keys: {sorted(unknown)}")
    for sub_parser in parser._subparsers._group_actions[0].choices.values():  # type: ignore[union-attr]
        defaults = {}
        for act in sub_parser._actions:
            if act.dest in values:
                raw = values[act.dest]
                defaults[act.dest] = act.type(raw) if act.type else raw
                act.required = False
        sub_parser.set_defaults(**defaults)
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except VocabMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DisfluencyError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
