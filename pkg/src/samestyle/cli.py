"""Command-line pipeline: synth -> build-graph -> sample -> train -> eval, plus interactive query.

Exit status is 0 on success, 2 for invalid input or configuration and 1 for
any other failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from . import formats as F
from .clickgraph import aggregate_counts, build_graph
from .config import PipelineConfig, config_from_dict, dump_config, load_config
from .encoder import compose_query
from .errors import SameStyleError, ValidationError
from .retrieval import RetrievalMode, build_index, evaluate, format_table, reports_to_json, search
from .sampler import MeanFeatureEmbedder, SamplerConfig, sample_pairs
from .synth import BehaviorModel, gen_catalog, gen_clicklog, sampling_quality, style_pairs, to_item_node
from .trainer import fit, fit_baseline

log = logging.getLogger("samestyle")

MODES = [m.value for m in RetrievalMode]


def header(cfg: PipelineConfig) -> str:
    return f"# samestyle {__version__} seed={cfg.seed} config={cfg.digest()}"


def _out(args, cfg: PipelineConfig, name: str) -> Path:
    return Path(args.out) if args.out else cfg.resolve(name)


def _catalog(cfg):
    products = F.read_catalog(cfg.resolve("catalog"))
    return products, {p.item_id: p for p in products}


def cmd_config(args, cfg: PipelineConfig) -> None:
    text = dump_config(cfg)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_synth(args, cfg: PipelineConfig) -> None:
    s = cfg.synth
    cat = gen_catalog(
        s.num_styles,
        s.suppliers_per_style,
        s.noise_sigma,
        cfg.seed,
        styles_per_subcat=s.styles_per_subcat,
        nuisance_sigma=s.nuisance_sigma,
        text_nuisance_sigma=s.text_nuisance_sigma,
        injection_rate=s.injection_rate,
    )
    behavior = BehaviorModel(contamination=s.contamination, ambiguous_rate=s.ambiguous_rate)
    records, queries = gen_clicklog(cat, behavior, s.num_queries, cfg.seed + 1)

    # one ground-truth pair per style plays the role of the annotated test set
    test, seen = [], set()
    truth = cat.truth()
    for p in style_pairs(cat.products):
        if truth[p.trigger] not in seen:
            seen.add(truth[p.trigger])
            test.append(p)

    out_dir = Path(args.out) if args.out else None

    def dest(name):
        return out_dir / Path(getattr(cfg.paths, name)).name if out_dir else cfg.resolve(name)

    h = header(cfg)
    F.write_catalog(dest("catalog"), cat.products, h)
    F.write_queries(dest("queries"), queries, h)
    F.write_clicks(dest("clicks"), records, h)
    F.write_core_vocab(dest("core_vocab"), cat.core_vocab, h)
    F.write_vocab(dest("vocab"), cat.vocab, h)
    F.write_pairs(dest("test_pairs"), test, h)
    print(f"{len(cat.products)} products, {len(queries)} queries, {len(records)} click records, {len(test)} test pairs")


def _graph(cfg):
    products, _ = _catalog(cfg)
    items = [to_item_node(p) for p in products]
    queries = F.read_queries(cfg.resolve("queries"))
    records = F.read_clicks(cfg.resolve("clicks"))
    return products, build_graph(records, items, queries, cfg.lambdas), records


def cmd_build_graph(args, cfg: PipelineConfig) -> None:
    _, graph, records = _graph(cfg)
    counts = aggregate_counts(records)
    F.write_graph(_out(args, cfg, "graph"), graph, counts, header(cfg))
    print(f"{len(graph.queries)} queries, {len(graph.items)} items, {len(graph.edges)} weighted edges")


def cmd_sample(args, cfg: PipelineConfig) -> None:
    products, graph, _ = _graph(cfg)
    core = F.read_core_vocab(cfg.resolve("core_vocab"))
    scfg = SamplerConfig(core_vocab=core, **dataclasses.asdict(cfg.sampler))
    if args.k is not None:
        scfg = dataclasses.replace(scfg, k_per_query=args.k)
    features = {p.item_id: p for p in products}
    pairs = sample_pairs(graph, MeanFeatureEmbedder(features), scfg)
    F.write_pairs(_out(args, cfg, "pairs"), pairs, header(cfg))
    line = f"{len(pairs)} pairs"
    if all(p.style_id is not None for p in products):
        precision, _ = sampling_quality(pairs, {p.item_id: p.style_id for p in products})
        line += f", precision {precision:.4f} against style ids"
    print(line)


def cmd_train(args, cfg: PipelineConfig) -> None:
    _, features = _catalog(cfg)
    pairs = F.read_pairs(cfg.resolve("pairs"))
    tcfg = dataclasses.replace(cfg.train, seed=cfg.seed)
    if args.baseline:
        params, hist = fit_baseline(pairs, features, tcfg, args.baseline, cfg.loss)
        method = {"vv": "base v-v", "tt": "base t-t", "mm": "base m-m"}[args.baseline]
    else:
        params, hist = fit(pairs, features, tcfg, cfg.loss)
        method = "multimodal"
    ckpt = _out(args, cfg, "checkpoint")
    meta = {
        "tool_version": __version__,
        "seed": cfg.seed,
        "config_hash": cfg.digest(),
        "method": method,
        "baseline_mode": args.baseline,
        "train_config": cfg.to_dict()["train"] | {"seed": cfg.seed},
        "loss_config": cfg.to_dict()["loss"],
        "best_epoch": hist.best_epoch,
        "best_val_mrr": hist.best_val_mrr,
    }
    F.write_checkpoint(ckpt, params, meta)
    log_path = ckpt.with_suffix(".log.tsv") if args.out else cfg.resolve("train_log")
    F.write_train_log(log_path, hist.batches, header(cfg))
    print(
        f"{method}: {len(hist.epochs)} epochs, best epoch {hist.best_epoch}, "
        f"validation MRR {hist.initial_val_mrr:.4f} -> {hist.best_val_mrr:.4f}"
    )


def cmd_eval(args, cfg: PipelineConfig) -> None:
    products, features = _catalog(cfg)
    pairs = F.read_pairs(cfg.resolve("test_pairs"))
    checkpoints = cfg.eval.checkpoints or {"multimodal": cfg.paths.checkpoint}
    modes = [args.mode] if args.mode else list(cfg.eval.modes)
    distractors = [p.item_id for p in products] if cfg.eval.catalog_distractors else []

    reports = {}
    for name, path in checkpoints.items():
        path = Path(path)
        params, meta = F.read_checkpoint(path if path.is_absolute() else cfg.base_dir / path)
        own = meta.get("baseline_mode")
        for mode in ([own] if own else modes):
            label = name if own else f"{name} {RetrievalMode(mode).label}"
            reports[label] = evaluate(pairs, features, params, mode, distractors, cfg.eval.ks)

    table = format_table(reports, cfg.eval.ks)
    out = _out(args, cfg, "report")
    F.write_lines(out, [table.rstrip("\n")], header(cfg))
    doc = json.loads(reports_to_json(reports))
    doc = {"meta": {"tool_version": __version__, "seed": cfg.seed, "config_hash": cfg.digest()}, "reports": doc}
    out.with_suffix(".json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    sys.stdout.write(table)


def cmd_query(args, cfg: PipelineConfig) -> None:
    products, features = _catalog(cfg)
    if args.item not in features:
        raise ValidationError(f"unknown item {args.item!r}")
    vocab = F.read_vocab(cfg.resolve("vocab"))
    params, _ = F.read_checkpoint(cfg.resolve("checkpoint"))
    q = compose_query(features[args.item], args.text, vocab, params)
    index = build_index(products, params, "m")
    hits = search(index, q, args.k if args.k is not None else 10)
    lines = [f"{rank}\t{item}\t{score:.6f}" for rank, (item, score) in enumerate(hits, start=1)]
    if args.out:
        F.write_lines(args.out, lines, header(cfg))
    sys.stdout.write("".join(line + "\n" for line in lines))


COMMANDS = {
    "config": cmd_config,
    "synth": cmd_synth,
    "build-graph": cmd_build_graph,
    "sample": cmd_sample,
    "train": cmd_train,
    "eval": cmd_eval,
    "query": cmd_query,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON pipeline config; relative paths resolve against its directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--mode", choices=MODES, help="retrieval mode (eval)")
    common.add_argument("--k", type=int, help="top-k for sample (items per query) and query (results)")
    common.add_argument("--out", metavar="PATH", help="output file (output directory for synth)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="samestyle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"samestyle {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "config": "print the effective configuration",
        "synth": "generate a synthetic catalog, queries, click log and vocabularies",
        "build-graph": "aggregate the click log into a weighted query-item graph",
        "sample": "sample positive trigger/recall pairs from the click graph",
        "train": "fine-tune the encoder on sampled pairs",
        "eval": "score checkpoints on test pairs and print the retrieval table",
        "query": "search with an item's image and replacement text",
    }
    parsers = {name: sub.add_parser(name, parents=[common], help=h) for name, h in helps.items()}
    parsers["train"].add_argument("--baseline", choices=["vv", "tt", "mm"], help="train a single-modality hinge baseline instead")
    parsers["query"].add_argument("--item", required=True, help="item whose image is kept")
    parsers["query"].add_argument("--text", default="", help="replacement text, may be empty")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else config_from_dict({}, Path.cwd())
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.k is not None and args.k < 1:
            raise ValidationError("--k must be positive")
        COMMANDS[args.command](args, cfg)
    except ValidationError as e:
        print(f"samestyle {args.command}: error: {e}", file=sys.stderr)
        return 2
    except SameStyleError as e:
        print(f"samestyle {args.command}: error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - surface anything else as a runtime failure
        print(f"samestyle {args.command}: runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
