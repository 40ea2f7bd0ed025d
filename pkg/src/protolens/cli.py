"""Command-line pipeline: prepare, train, eval, reconstruct, rules,
embeddings, attention.

Every subcommand writes its outputs atomically (temp file + rename) and
drops a run manifest next to them recording the resolved configuration,
seeds, input digests, and tool version; reruns with identical inputs and
seeds produce digest-identical artifacts. Errors are reported as a
single JSON line on stderr with a non-zero exit code. The environment
variable PROTOLENS_THREADS caps BLAS parallelism.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

from . import analysis, corpus, rules as rules_mod, trainer
from .corpus import Language, ParseError, ValidationError, Word
from .model import CheckpointError, Model, ModelConfig
from .trainer import TrainConfig

TOOL_NAME = "protolens"

MODE_FLAGS = {"orth": corpus.ORTHOGRAPHIC, "ipa": corpus.PHONETIC}
VARIANT_FLAGS = ("base", "vowel_length", "no_contrast")


class UsageError(ValueError):
    pass


def tool_version() -> str:
    try:
        from importlib.metadata import version

        return version(TOOL_NAME)
    except Exception:
        return "unknown"


def atomic_write(path: Path, data: str | bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    with tempfile.NamedTemporaryFile(
        dir=path.parent, prefix=f".{path.name}.", delete=False
    ) as handle:
        handle.write(data)
        temp_name = handle.name
    os.replace(temp_name, path)


def added_suffix(path: Path, suffix: str) -> Path:
    return path.parent / (path.name + suffix)


def file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(path: Path, subcommand: str, config: dict, inputs: dict[str, Path]):
    manifest = {
        "tool": TOOL_NAME,
        "version": tool_version(),
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(name): file_digest(Path(p)) for name, p in inputs.items()},
    }
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_manifest(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


# ---------------------------------------------------------------------------
# config files: flat key=value with CLI --set overrides

MODEL_KEYS = {
    "embed_dim": int,
    "hidden_dim": int,
    "mlp_hidden": int,
    "lang_embed_dim": int,
    "max_decode_len": int,
}
TRAIN_KEYS = {
    "learning_rate": float,
    "batch_size": int,
    "max_epochs": int,
    "patience": int,
    "grad_clip": float,
}


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"config line {line_number}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def resolve_configs(raw: dict[str, str]) -> tuple[ModelConfig, TrainConfig]:
    known = set(MODEL_KEYS) | set(TRAIN_KEYS) | {"seed"}
    unknown = set(raw) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    seed = int(raw.get("seed", 0))
    model_kwargs = {k: MODEL_KEYS[k](raw[k]) for k in MODEL_KEYS if k in raw}
    train_kwargs = {k: TRAIN_KEYS[k](raw[k]) for k in TRAIN_KEYS if k in raw}
    return ModelConfig(seed=seed, **model_kwargs), TrainConfig(seed=seed, **train_kwargs)


# ---------------------------------------------------------------------------
# subcommands


def cmd_prepare(args) -> int:
    mode = MODE_FLAGS[args.mode]
    if args.variant == "no_contrast" and mode != corpus.PHONETIC:
        raise UsageError("--variant no_contrast requires --mode ipa")
    variant = mode if args.variant == "base" else (
        "phonetic_no_contrast" if args.variant == "no_contrast" else f"{mode}_vowel_length"
    )
    ratios = tuple(float(r) for r in args.split.split(","))
    if len(ratios) != 3:
        raise UsageError(f"--split needs three comma-separated ratios, got {args.split!r}")

    text = Path(args.input).read_text(encoding="utf-8")
    entries = corpus.apply_variant(corpus.parse_dataset(text, mode), variant)
    train_set, dev_set, test_set = corpus.split(entries, ratios, args.seed)
    vocab = corpus.build_vocab(entries)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "train.tsv", corpus.serialize_dataset(train_set))
    atomic_write(out / "dev.tsv", corpus.serialize_dataset(dev_set))
    atomic_write(out / "test.tsv", corpus.serialize_dataset(test_set))
    atomic_write(out / "vocab.json", vocab.to_json() + "\n")
    write_manifest(
        out / "manifest.json",
        "prepare",
        {
            "mode": mode,
            "variant": variant,
            "split": list(ratios),
            "seed": args.seed,
            "sizes": [len(train_set), len(dev_set), len(test_set)],
        },
        {"input": Path(args.input)},
    )
    print(f"prepared {len(entries)} cognate sets -> {out} "
          f"(train {len(train_set)}, dev {len(dev_set)}, test {len(test_set)})")
    return 0


def _load_prepared(data_dir: Path) -> tuple[list, list, corpus.Vocabulary, str]:
    manifest = read_manifest(data_dir / "manifest.json")
    mode = manifest["config"]["mode"]
    vocab = corpus.Vocabulary.from_json((data_dir / "vocab.json").read_text(encoding="utf-8"))
    train_set = corpus.parse_dataset((data_dir / "train.tsv").read_text(encoding="utf-8"), mode)
    dev_text = (data_dir / "dev.tsv").read_text(encoding="utf-8")
    dev_set = corpus.parse_dataset(dev_text, mode) if dev_text.strip() else []
    return train_set, dev_set, vocab, mode


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    train_set, dev_set, vocab, _mode = _load_prepared(data_dir)
    raw = parse_config_text(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    for override in args.set or []:
        if "=" not in override:
            raise UsageError(f"--set expects key=value, got {override!r}")
        key, _, value = override.partition("=")
        raw[key.strip()] = value.strip()
    model_config, train_config = resolve_configs(raw)

    result = trainer.train(train_set, dev_set, model_config, train_config, vocab=vocab)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=out.parent, prefix=f".{out.name}.", delete=False) as handle:
        temp_name = handle.name
    result.model.save(temp_name)
    os.replace(temp_name, out)
    atomic_write(added_suffix(out, ".log.csv"), trainer.log_to_csv(result.log))
    inputs = {
        "train": data_dir / "train.tsv",
        "dev": data_dir / "dev.tsv",
        "vocab": data_dir / "vocab.json",
    }
    if args.config:
        inputs["config"] = Path(args.config)
    write_manifest(
        added_suffix(out, ".manifest.json"),
        "train",
        {
            "model": model_config.to_dict(),
            "train": train_config.to_dict(),
            "best_epoch": result.best_epoch,
            "epochs_run": len(result.log),
        },
        inputs,
    )
    final = result.log[-1]
    print(f"trained {len(result.log)} epochs; final train loss {final.train_loss:.4f}; "
          f"best epoch {result.best_epoch}; checkpoint -> {out}")
    return 0


def cmd_eval(args) -> int:
    model = Model.load(args.ckpt)
    entries = corpus.parse_dataset(Path(args.data).read_text(encoding="utf-8"), model.vocab.mode)
    report = trainer.evaluate(entries, model)
    atomic_write(Path(args.report), report.to_json() + "\n")
    write_manifest(
        added_suffix(Path(args.report), ".manifest.json"),
        "eval",
        {"n": report.n},
        {"data": Path(args.data), "ckpt": Path(args.ckpt)},
    )
    print(report.to_table())
    return 0


def _parse_input_row(line: str, line_number: int, mode: str) -> corpus.CognateSet:
    """A reconstruct input row: 5 daughter columns, optionally plus Latin."""
    cells = line.split("\t")
    if len(cells) == 6:
        cells = cells[:5]
    if len(cells) != 5:
        raise ParseError(line_number, f"expected 5 or 6 tab-separated columns, got {len(cells)}")
    daughters = {}
    for lang, cell in zip(corpus.DAUGHTERS, cells):
        cell = cell.strip()
        if cell and cell != corpus.MISSING_CELL:
            daughters[lang] = corpus.tokenize(cell, mode)
    if not daughters:
        raise ParseError(line_number, "all daughter words missing")
    return corpus.CognateSet(daughters=daughters, latin=Word(("?",), mode))


def cmd_reconstruct(args) -> int:
    model = Model.load(args.ckpt)
    stream = open(args.input, "r", encoding="utf-8") if args.input else sys.stdin
    try:
        for line_number, line in enumerate(stream, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            entry = _parse_input_row(line, line_number, model.vocab.mode)
            word = trainer.predict(model, entry)
            sys.stdout.write(word.text() + "\n")
    finally:
        if args.input:
            stream.close()
    return 0


def cmd_rules(args) -> int:
    if args.rules:
        rule_set = rules_mod.load_rules(Path(args.rules).read_text(encoding="utf-8"))
    else:
        rule_set = rules_mod.builtin_rules()
    if args.echo_gold:
        predictions = [rule.gold_latin for rule in rule_set]
    else:
        if not args.ckpt:
            raise UsageError("rules requires --ckpt unless --echo-gold is set")
        model = Model.load(args.ckpt)
        testset = rules_mod.make_rule_testset(rule_set)
        predictions = [trainer.predict(model, entry) for entry in testset]
    outcomes = [
        rules_mod.score_rule_prediction(rule, word) for rule, word in zip(rule_set, predictions)
    ]
    atomic_write(Path(args.report), rules_mod.outcomes_to_json(outcomes, rule_set) + "\n")
    inputs = {}
    if args.rules:
        inputs["rules"] = Path(args.rules)
    if args.ckpt:
        inputs["ckpt"] = Path(args.ckpt)
    write_manifest(
        added_suffix(Path(args.report), ".manifest.json"),
        "rules",
        {"echo_gold": bool(args.echo_gold), "total": len(rule_set)},
        inputs,
    )
    passed = sum(1 for o in outcomes if o.passed)
    print(f"rules passed: {passed}/{len(outcomes)}")
    return 0


def cmd_embeddings(args) -> int:
    model = Model.load(args.ckpt)
    try:
        language = Language[args.lang.upper()]
    except KeyError:
        raise UsageError(
            f"unknown language {args.lang!r}; expected one of "
            f"{[lang.name.lower() for lang in Language]}"
        ) from None
    labels, matrix = analysis.extract_embeddings(model, language)
    lines = ["symbol," + ",".join(f"d{i}" for i in range(matrix.shape[1]))]
    for label, row in zip(labels, matrix):
        lines.append(label + "," + ",".join(f"{v:.8g}" for v in row))
    atomic_write(Path(args.out), "\n".join(lines) + "\n")
    config = {"language": language.name.lower(), "symbols": len(labels)}
    if args.newick or args.merges:
        dendrogram = analysis.ward_clustering(matrix, labels)
        export = analysis.export_dendrogram(dendrogram)
        if args.newick:
            atomic_write(Path(args.newick), export.newick + "\n")
        if args.merges:
            atomic_write(Path(args.merges), export.merge_json + "\n")
        config["clustered"] = True
    write_manifest(
        added_suffix(Path(args.out), ".manifest.json"),
        "embeddings",
        config,
        {"ckpt": Path(args.ckpt)},
    )
    print(f"wrote {len(labels)} {language.name.lower()} symbol vectors -> {args.out}")
    return 0


def cmd_attention(args) -> int:
    model = Model.load(args.ckpt)
    entries = corpus.parse_dataset(Path(args.data).read_text(encoding="utf-8"), model.vocab.mode)
    if not entries:
        raise ValidationError("no cognate sets in input")
    examples = [corpus.encode_example(e, model.vocab, unknown_to_unk=True) for e in entries]
    traces = [model.greedy_decode(example)[1] for example in examples]
    counts = corpus.language_position_counts(examples)
    summary = analysis.attention_summary(traces, counts)
    base = Path(args.out)
    pos_csv, sym_csv = analysis.summary_to_csv(summary)
    atomic_write(added_suffix(base, ".by_position.csv"), pos_csv)
    atomic_write(added_suffix(base, ".by_symbol.csv"), sym_csv)
    raw = {
        "languages": [Language(lang).name.lower() for lang in summary.languages],
        "symbols": list(summary.symbols),
        "raw_by_position": summary.raw_by_position.tolist(),
        "raw_by_symbol": summary.raw_by_symbol.tolist(),
        "special_by_position": summary.special_by_position.tolist(),
        "zero_position_rows": list(summary.zero_position_rows),
        "zero_symbol_rows": list(summary.zero_symbol_rows),
        "language_position_counts": {Language(k).name.lower(): v for k, v in counts.items()},
    }
    atomic_write(added_suffix(base, ".raw.json"), json.dumps(raw, ensure_ascii=False, indent=2) + "\n")
    write_manifest(
        added_suffix(base, ".manifest.json"),
        "attention",
        {"entries": len(entries), "total_steps": summary.raw_total()},
        {"data": Path(args.data), "ckpt": Path(args.ckpt)},
    )
    print(f"summarized attention over {len(entries)} entries -> {base}.by_position.csv")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=TOOL_NAME, description="Proto-word reconstruction toolkit"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("prepare", help="parse, transform, split, and encode a dataset")
    p.add_argument("--input", required=True, help="6-column cognate TSV")
    p.add_argument("--mode", required=True, choices=sorted(MODE_FLAGS))
    p.add_argument("--variant", default="base", choices=VARIANT_FLAGS)
    p.add_argument("--split", default="0.80,0.08,0.12")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a reconstruction model")
    p.add_argument("--data", required=True, help="directory produced by prepare")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reconstruct", help="predict Latin words for cognate rows")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", help="read rows from a file instead of stdin")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("rules", help="score a model against the sound-change rules")
    p.add_argument("--ckpt")
    p.add_argument("--rules", help="alternative rule TSV")
    p.add_argument("--report", required=True)
    p.add_argument("--echo-gold", action="store_true", help="score gold forms as predictions")
    p.set_defaults(func=cmd_rules)

    p = sub.add_parser("embeddings", help="export per-language symbol representations")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--lang", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--newick", help="also write a Ward-clustering Newick tree")
    p.add_argument("--merges", help="also write the Ward merge list as JSON")
    p.set_defaults(func=cmd_embeddings)

    p = sub.add_parser("attention", help="summarize most-attended languages")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output base path")
    p.set_defaults(func=cmd_attention)

    return parser


def _limit_threads():
    value = os.environ.get("PROTOLENS_THREADS")
    if not value:
        return
    try:
        limit = max(1, int(value))
    except ValueError:
        raise UsageError(f"PROTOLENS_THREADS must be an integer, got {value!r}") from None
    import threadpoolctl

    threadpoolctl.threadpool_limits(limits=limit)


def main(argv=None) -> int:
    try:
        _limit_threads()
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        print(json.dumps({"error": "usage", "message": str(err)}), file=sys.stderr)
        return 2
    except (ParseError, ValidationError, CheckpointError, ValueError) as err:
        print(json.dumps({"error": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return 1
    except OSError as err:
        print(json.dumps({"error": "io", "message": str(err)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
