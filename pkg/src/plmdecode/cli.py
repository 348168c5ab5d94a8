"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 data/format error, 3 numeric failure.
Every invocation appends one JSON object (resolved config, seed, wall time,
output hashes) to the run log, ``runs.jsonl`` unless ``--run-log`` says
otherwise.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import ctc, data_io, evaluate
from . import lm as lmmod
from .alphabet import build_alphabet, extend_alphabet
from .errors import ConfigError, FormatError, NumericFailure, OOVError, PLMError
from .lexicon import build_prefix_tree, parse_lexicon, read_lexicon_phonemes

log = logging.getLogger("plmdecode")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _Run:
    def __init__(self, args):
        self.args = args
        self.started = time.time()
        self.outputs: list[Path] = []
        self.summary = ""
        self.extra: dict = {}


# ---------------------------------------------------------------- helpers

def _pairs(values, flag) -> dict[str, str]:
    out = {}
    for v in values or []:
        lang, sep, path = v.partition("=")
        if not sep or not lang or not path:
            raise UsageError(f"{flag} expects LANG=PATH, got {v!r}")
        if lang in out:
            raise UsageError(f"{flag} given twice for language {lang!r}")
        out[lang] = path
    return out


def _read_text(path) -> str:
    return Path(path).read_text(encoding="utf-8")


def _train_config(args, **over) -> lmmod.TrainConfig:
    kw = dict(
        embed_dim=args.embed, hidden_dim=args.hidden, dropout=args.dropout, lr=args.lr,
        optimizer=args.optimizer, max_epochs=args.epochs, max_steps=args.max_steps,
        patience=args.patience, truncation=args.truncation, batch_size=args.batch_size,
        clip_norm=args.clip, seed=args.seed,
    )
    kw.update(over)
    return lmmod.TrainConfig(**kw)


def _load_ckpt(path):
    return data_io.load_checkpoint(path)


def _pick_lang(ck, lang):
    names = ck.alphabet.language_names
    if lang is None:
        if len(names) != 1:
            raise UsageError(f"--lang required; checkpoint has {', '.join(names)}")
        return names[0]
    if lang not in names:
        raise UsageError(f"language {lang!r} not in checkpoint ({', '.join(names)})")
    return lang


# ---------------------------------------------------------------- subcommands

def cmd_train(args, run: _Run) -> int:
    corpora = _pairs(args.corpus, "--corpus")
    lexicons = _pairs(args.lexicon, "--lexicon")
    dev = _pairs(args.dev, "--dev")
    if not corpora:
        raise UsageError("at least one --corpus LANG=PATH is required")
    missing = set(corpora) - set(lexicons)
    if missing:
        raise UsageError(f"no --lexicon for {', '.join(sorted(missing))}")
    lex_text = {lang: _read_text(lexicons[lang]) for lang in corpora}
    phonemes = {}
    for lang in corpora:
        inv = read_lexicon_phonemes(lex_text[lang])
        if args.alphabet_from_corpora:
            # restrict to phonemes actually reached by the corpus words
            tmp = build_alphabet({lang: inv})
            lex = parse_lexicon(lex_text[lang], tmp)
            words = {w for ws in data_io.read_transcripts(corpora[lang]).values() for w in ws}
            used = {tmp.text(s) for w in words if w in lex for p in lex.entries[w] for s in p}
            inv = used or inv
        phonemes[lang] = inv
    alpha = build_alphabet(phonemes)
    corpus = None
    heldout = []
    counts = {}
    for lang in corpora:
        lex = parse_lexicon(lex_text[lang], alpha)
        c = data_io.load_corpus(corpora[lang], lang, lex, alpha, args.oov_policy)
        run.extra.setdefault("skipped_oov", {})[lang] = c.provenance["skipped_oov"]
        corpus = c if corpus is None else corpus + c
        if lang in dev:
            heldout += data_io.load_corpus(dev[lang], lang, lex, alpha, args.oov_policy).sequences()
    counts = dict(corpus.word_counts())
    cfg = _train_config(args)
    params = lmmod.train(corpus.sequences(), alpha, cfg, heldout=heldout or None,
                         on_epoch=lambda r: log.info("epoch %s", r))
    ck = data_io.Checkpoint(alpha, params, {"train": cfg.to_dict(), "kind": "multi" if len(corpora) > 1 else "mono"},
                            cfg.seed, counts)
    data_io.save_checkpoint(ck, args.out)
    run.outputs.append(Path(args.out))
    run.summary = f"languages={','.join(corpora)} V={len(alpha)} params={lmmod.count_params(params)}"
    print(run.summary)
    return EXIT_OK


def cmd_adapt(args, run: _Run) -> int:
    ck = _load_ckpt(args.ckpt)
    lang = args.target_lang
    lex_text = _read_text(args.target_lexicon)
    new_alpha = extend_alphabet(ck.alphabet, lang, read_lexicon_phonemes(lex_text))
    lex = parse_lexicon(lex_text, new_alpha)
    full = data_io.load_corpus(args.target_corpus, lang, lex, new_alpha, args.oov_policy)
    sub, _ = data_io.split_corpus(full, args.fraction, args.seed)
    if not len(sub):
        raise ConfigError("fraction selects no utterances")
    heldout = None
    if args.dev:
        heldout = data_io.load_corpus(args.dev, lang, lex, new_alpha, args.oov_policy).sequences()
    cfg = _train_config(args, embed_dim=ck.params.embed_dim, hidden_dim=ck.params.hidden_dim)
    params = lmmod.adapt(ck.params, ck.alphabet, new_alpha, sub.sequences(), cfg, heldout)
    out = data_io.Checkpoint(new_alpha, params,
                             {"train": cfg.to_dict(), "kind": "adapted", "fraction": args.fraction,
                              "source_alphabet": ck.alphabet.hash},
                             cfg.seed, dict(sub.word_counts()))
    data_io.save_checkpoint(out, args.out)
    run.outputs.append(Path(args.out))
    run.summary = f"target={lang} utterances={len(sub)} V={len(new_alpha)}"
    print(run.summary)
    return EXIT_OK


def cmd_ppl(args, run: _Run) -> int:
    ck = _load_ckpt(args.ckpt)
    lang = _pick_lang(ck, args.lang)
    lex = parse_lexicon(_read_text(args.lexicon), ck.alphabet)
    c = data_io.load_corpus(args.corpus, lang, lex, ck.alphabet, args.oov_policy)
    value = lmmod.perplexity(ck.params, [u.symbols for u in c], ck.alphabet.mask(lang))
    run.summary = f"{value:.2f}"
    print(run.summary)
    return EXIT_OK


# decode workers share these read-only objects
_W: dict = {}


def _init_decoder(ckpt_path, lexicon_path, lang, cfg_dict):
    cfg = ctc.DecodeConfig(**cfg_dict)
    _W.clear()
    _W["cfg"] = cfg
    _W["lm"] = _W["trie"] = _W["spelling"] = None
    if cfg.mode == "greedy":
        return
    ck = data_io.load_checkpoint(ckpt_path)
    _W["lm"] = ctc.BoundLM(ck.params, ck.alphabet, lang)
    if lexicon_path:
        lex = parse_lexicon(_read_text(lexicon_path), ck.alphabet)
        _W["trie"] = build_prefix_tree(lex, ck.word_counts)
        _W["spelling"] = {p: w for w, p in reversed(list(lex.pairs()))}


def _decode_one(path):
    post = data_io.load_posteriorgram(path)
    r = ctc.decode(post, _W["lm"], _W["cfg"], _W["trie"], _W["spelling"])
    return Path(path).stem, r.words, r.failed


def cmd_decode(args, run: _Run) -> int:
    cfg = ctc.DecodeConfig(beam=args.beam, lm_weight=args.lm_weight,
                           ins_penalty=args.ins_penalty, mode=args.mode,
                           prune_floor=None if args.no_prune_floor else args.prune_floor)
    lang = None
    if cfg.mode != "greedy":
        if not args.ckpt:
            raise UsageError(f"--ckpt is required for --mode {cfg.mode}")
        lang = _pick_lang(_load_ckpt(args.ckpt), args.lang)
    if cfg.mode == "lexicon" and not args.lexicon:
        raise UsageError("--lexicon is required for --mode lexicon")
    paths = data_io.list_posteriorgrams(args.post_dir)
    if not paths:
        raise FormatError(f"no .post/.ctcp files in {args.post_dir}")
    cfg_dict = {"beam": cfg.beam, "lm_weight": cfg.lm_weight, "ins_penalty": cfg.ins_penalty,
                "mode": cfg.mode, "prune_floor": cfg.prune_floor}
    run.extra["decode"] = cfg_dict
    init = (args.ckpt, args.lexicon, lang, cfg_dict)
    if args.jobs <= 1:
        _init_decoder(*init)
        results = [_decode_one(p) for p in paths]
    else:
        with ProcessPoolExecutor(args.jobs, initializer=_init_decoder, initargs=init) as ex:
            results = list(ex.map(_decode_one, paths, chunksize=4))
    data_io.write_transcripts(args.out, [(u, w) for u, w, _ in results])
    failed = [u for u, _, f in results if f]
    if failed:
        log.warning("no surviving hypothesis for %d utterances: %s", len(failed), ", ".join(failed))
    run.extra["failed"] = failed
    run.outputs.append(Path(args.out))
    run.summary = f"beam={cfg.beam} α={cfg.lm_weight} β={cfg.ins_penalty} mode={cfg.mode} utterances={len(results)}"
    print(run.summary)
    return EXIT_OK


def _errors_for(ref, hyp):
    return [evaluate.edit_distance(r, h) for r, h in data_io.join_ref_hyp(ref, hyp)]


def cmd_wer(args, run: _Run) -> int:
    errs = _errors_for(data_io.read_transcripts(args.ref), data_io.read_transcripts(args.hyp))
    value = evaluate.wer_from_errors(errs)
    s = sum(e.substitutions for e in errs)
    d = sum(e.deletions for e in errs)
    i = sum(e.insertions for e in errs)
    n = sum(e.ref_length for e in errs)
    run.summary = f"{evaluate.format_wer(value)}"
    print(f"WER {evaluate.format_wer(value)} [S={s} D={d} I={i} N={n}]")
    return EXIT_OK


def cmd_bootstrap(args, run: _Run) -> int:
    ref = data_io.read_transcripts(args.ref)
    e1 = _errors_for(ref, data_io.read_transcripts(args.hyp1))
    e2 = _errors_for(ref, data_io.read_transcripts(args.hyp2))
    p = evaluate.bootstrap_compare(e1, e2, args.resamples, args.seed)
    run.summary = f"{p:.4f}"
    print(f"probability of improvement (system 1 over 2): {p:.4f} ({100 * p:.1f}%)")
    return EXIT_OK


def cmd_synth(args, run: _Run) -> int:
    lex_text = _read_text(args.lexicon)
    phonemes = read_lexicon_phonemes(lex_text)
    lang = args.lang
    alpha = build_alphabet({lang: phonemes})
    lex = parse_lexicon(lex_text, alpha)
    corpus = data_io.load_corpus(args.corpus, lang, lex, alpha, args.oov_policy)
    labels = data_io.default_labels(phonemes)
    confusion = None
    if args.confusion_classes:
        classes = {}
        for line in _read_text(args.confusion_classes).splitlines():
            if line.strip() and not line.startswith("#"):
                ph, _, cls = line.partition("\t")
                classes[ph.strip()] = cls.strip()
        confusion = data_io.similarity_confusion(labels, classes, args.confusion_leak)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".ctcp" if args.binary else ".post"
    for k, u in enumerate(corpus):
        post = data_io.synth_posteriors(
            data_io.reference_labels(alpha, u.symbols), labels, args.frames_per_symbol,
            args.noise, args.blank_mass, confusion, seed=[args.seed, k])
        path = out_dir / f"{u.utt_id}{suffix}"
        data_io.save_posteriorgram(post, path)
        run.outputs.append(path)
    run.summary = f"utterances={len(corpus)} noise={args.noise} fps={args.frames_per_symbol}"
    print(run.summary)
    return EXIT_OK


def cmd_oov(args, run: _Run) -> int:
    train = data_io.read_transcripts(args.train_corpus)
    ev = data_io.read_transcripts(args.eval_corpus)
    vocab = {w for ws in train.values() for w in ws}
    value = evaluate.oov_rate(vocab, ev.values())
    run.summary = f"{value:.1f}"
    print(f"OOV {value:.1f}%")
    return EXIT_OK


def cmd_params(args, run: _Run) -> int:
    ck = _load_ckpt(args.ckpt)
    n = lmmod.count_params(ck.params)
    run.summary = str(n)
    print(n)
    return EXIT_OK


def cmd_sample(args, run: _Run) -> int:
    ck = _load_ckpt(args.ckpt)
    lang = _pick_lang(ck, args.lang)
    a = ck.alphabet
    for k in range(args.count):
        seq = lmmod.sample(ck.params, a, lang, args.max_len, args.temperature, seed=[args.seed, k])
        words, cur = [], []
        for s in seq:
            if a.is_boundary(s):
                words.append("".join(cur))
                cur = []
            else:
                cur.append(a.text(s))
        words.append("".join(cur))
        print(" ".join(w for w in words if w))
    return EXIT_OK


def cmd_alphabet(args, run: _Run) -> int:
    ck = _load_ckpt(args.ckpt)
    sys.stdout.write(ck.alphabet.to_tsv())
    return EXIT_OK


def config_to_argv(config: dict) -> list[str]:
    """Rebuild a subcommand argv from a logged ``config`` record."""
    command = config.get("command")
    sub = _subparsers(build_parser()).get(command)
    if sub is None:
        raise UsageError(f"run log record has no replayable command ({command!r})")
    argv = [command]
    for action in sub._actions:
        if action.dest in ("help", "fn") or action.dest not in config:
            continue
        value = config[action.dest]
        if not action.option_strings:
            argv.extend(str(v) for v in (value if isinstance(value, list) else [value]))
        elif action.nargs == 0:
            if value:
                argv.append(action.option_strings[-1])
        elif isinstance(action, argparse._AppendAction):
            for v in value or []:
                argv += [action.option_strings[-1], str(v)]
        elif value is not None:
            argv += [action.option_strings[-1], str(value)]
    return argv


def cmd_replay(args, run: _Run) -> int:
    lines = [ln for ln in Path(args.log).read_text(encoding="utf-8").splitlines() if ln.strip()]
    try:
        record = json.loads(lines[args.index])
    except IndexError:
        raise UsageError(f"run log has {len(lines)} records") from None
    argv = config_to_argv(record["config"])
    run.summary = " ".join(argv)
    log.info("replaying: %s", run.summary)
    return main(["--run-log", args.run_log, *argv])


def cmd_validate(args, run: _Run) -> int:
    ok = True
    for path in args.paths:
        report = data_io.validate_file(path, args.kind)
        ok &= report["ok"]
        print(json.dumps(report, ensure_ascii=False, sort_keys=True))
    return EXIT_OK if ok else EXIT_DATA


# ---------------------------------------------------------------- parser

def _add_train_flags(p, defaults: lmmod.TrainConfig):
    p.add_argument("--embed", type=int, default=defaults.embed_dim, help="embedding size d")
    p.add_argument("--hidden", type=int, default=defaults.hidden_dim, help="LSTM units h")
    p.add_argument("--dropout", type=float, default=defaults.dropout)
    p.add_argument("--lr", type=float, default=defaults.lr)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default=defaults.optimizer)
    p.add_argument("--epochs", type=int, default=defaults.max_epochs)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--patience", type=int, default=defaults.patience)
    p.add_argument("--truncation", type=int, default=defaults.truncation)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--clip", type=float, default=defaults.clip_norm)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oov-policy", choices=("skip", "strict"), default="skip")


FORMATS = """\
file formats:
  corpus / transcripts  utt-id<TAB>word word ...
  lexicon               word<TAB>phoneme phoneme ...   (# comments allowed)
  posteriorgram (.post) CTCPOST v1 T=<int> L=<int> blank=<int> labels=<comma-list>
                        followed by T lines of L log-probabilities
  posteriorgram (.ctcp) binary: CTCP, uint32 T L blank n, labels, float64 frames
  checkpoint            PLMCKPT binary container (see plmdecode.data_io)
"""


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="plmdecode", description="Phoneme LM training and CTC decoding.",
                  epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    top.add_argument("--version", action="version", version=__version__)
    top.add_argument("--run-log", default="runs.jsonl", help="JSON-lines run log ('' disables)")
    top.add_argument("-v", "--verbose", action="store_true")
    sub = top.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, description=help_, epilog=FORMATS,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.set_defaults(fn=fn)
        return p

    small = lmmod.plm_small()
    p = add("train", cmd_train, "train a (multilingual) phoneme LM")
    p.add_argument("--corpus", action="append", metavar="LANG=PATH", required=True)
    p.add_argument("--lexicon", action="append", metavar="LANG=PATH", required=True)
    p.add_argument("--dev", action="append", metavar="LANG=PATH", help="held-out corpus for early stopping")
    p.add_argument("--alphabet-from-corpora", action="store_true",
                   help="inventory = phonemes used by the corpora (default: whole lexicons)")
    p.add_argument("--out", required=True)
    _add_train_flags(p, small)

    p = add("adapt", cmd_adapt, "adapt a checkpoint to an unseen language")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--target-corpus", required=True)
    p.add_argument("--target-lexicon", required=True)
    p.add_argument("--target-lang", required=True)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--dev")
    p.add_argument("--out", required=True)
    _add_train_flags(p, small)

    p = add("ppl", cmd_ppl, "phoneme-level perplexity (sentence boundaries not counted)")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--lang")
    p.add_argument("--oov-policy", choices=("skip", "strict"), default="skip")

    d = ctc.DecodeConfig()
    p = add("decode", cmd_decode, "decode a directory of posteriorgrams")
    p.add_argument("--mode", choices=("greedy", "open", "lexicon"), default="lexicon")
    p.add_argument("--post-dir", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--lexicon")
    p.add_argument("--lang")
    p.add_argument("--beam", type=int, default=d.beam)
    p.add_argument("--lm-weight", type=float, default=d.lm_weight)
    p.add_argument("--ins-penalty", type=float, default=d.ins_penalty)
    p.add_argument("--prune-floor", type=float, default=d.prune_floor)
    p.add_argument("--no-prune-floor", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)

    p = add("wer", cmd_wer, "word error rate of a hypothesis file")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)

    p = add("bootstrap", cmd_bootstrap, "paired bootstrap probability of improvement")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp1", required=True)
    p.add_argument("--hyp2", required=True)
    p.add_argument("--resamples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)

    p = add("synth", cmd_synth, "synthesise posteriorgrams for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--lang", default="x")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--frames-per-symbol", type=int, default=3)
    p.add_argument("--blank-mass", type=float, default=0.05)
    p.add_argument("--confusion-classes", help="TSV phoneme<TAB>class for similarity confusion")
    p.add_argument("--confusion-leak", type=float, default=0.05)
    p.add_argument("--binary", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oov-policy", choices=("skip", "strict"), default="skip")
    p.add_argument("--out-dir", required=True)

    p = add("oov", cmd_oov, "OOV rate of an evaluation corpus")
    p.add_argument("--train-corpus", required=True)
    p.add_argument("--eval-corpus", required=True)

    p = add("params", cmd_params, "number of trainable parameters")
    p.add_argument("--ckpt", required=True)

    p = add("sample", cmd_sample, "sample sentences from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--lang")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--max-len", type=int, default=200)
    p.add_argument("--count", type=int, default=1)

    p = add("alphabet", cmd_alphabet, "alphabet operations")
    p.add_argument("action", choices=("dump",))
    p.add_argument("--ckpt", required=True)

    p = add("replay", cmd_replay, "re-run a record of a run log")
    p.add_argument("--log", default="runs.jsonl")
    p.add_argument("--index", type=int, default=-1, help="record number (default: last)")

    p = add("validate", cmd_validate, "check file formats and print a JSON report")
    p.add_argument("--kind", required=True,
                   choices=("posteriorgram", "checkpoint", "transcripts", "lexicon"))
    p.add_argument("paths", nargs="+")
    return top


def _subparsers(parser) -> dict:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_log(args, run: _Run, code: int) -> None:
    if not args.run_log:
        return
    config = {k: v for k, v in vars(args).items() if k not in ("fn",)}
    record = {
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "wall_time": round(time.time() - run.started, 6),
        "exit": code,
        "summary": run.summary,
        "outputs": {str(p): _sha256(p) for p in run.outputs if p.exists()},
        **run.extra,
    }
    with open(args.run_log, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, ensure_ascii=False, sort_keys=True, default=str) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = _Run(args)
    try:
        code = args.fn(args, run)
    except UsageError as e:
        print(f"plmdecode {args.command}: {e}", file=sys.stderr)
        code = EXIT_USAGE
    except NumericFailure as e:
        print(f"plmdecode {args.command}: numeric failure: {e}", file=sys.stderr)
        code = EXIT_NUMERIC
    except (PLMError, OSError, ValueError) as e:
        print(f"plmdecode {args.command}: {e}", file=sys.stderr)
        code = EXIT_DATA
    _write_log(args, run, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
