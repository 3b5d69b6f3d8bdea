"""Command-line entry point.

    layerlens extract --config configs/toy.yaml
    layerlens modules --config configs/toy.yaml      (alias: --log-named-modules)
    layerlens probe   --config configs/toy.yaml --labels labels.csv --output probe.csv
    layerlens concept --store out.db --items items.csv --prototypes protos/ --output surfaces.csv
    layerlens bench   --config configs/toy.yaml --output report.json
    layerlens plot    --input probe.csv --output probe.svg
    layerlens export  --store out.db --output dump/

``layerlens --config FILE`` with no subcommand behaves like ``extract``.
Exit codes: 0 success, 1 runtime or configuration error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2
SUBCOMMANDS = ("extract", "modules", "probe", "concept", "bench", "plot", "export")

log = logging.getLogger("layerlens")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed recorded into every output artifact")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerlens", description="Extract and analyse intermediate model tensors.")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    sub.required = True

    p = sub.add_parser("extract", help="run extraction for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--log-named-modules", action="store_true", help="print layer names and exit")
    p.add_argument("--output", help="override the config's output_db")
    _add_common(p)

    p = sub.add_parser("modules", help="print the model's named layers, one per line")
    p.add_argument("--config", required=True)
    _add_common(p)

    p = sub.add_parser("probe", help="train main/control probes per (split, layer)")
    p.add_argument("--config", help="extraction config; supplies the store, probe layers and probe_grid")
    p.add_argument("--store", help="activation store (defaults to the config's output_db)")
    p.add_argument("--labels", help="CSV image_path,prompt,split,label (default: labels in the store)")
    p.add_argument("--layers", nargs="+", help="layer names (default: middle and last probe layers)")
    p.add_argument("--splits", nargs="+")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--output", required=True, help="results CSV")
    _add_common(p)

    p = sub.add_parser("concept", help="PCA matched/mismatched similarity surfaces")
    p.add_argument("--store", required=True)
    p.add_argument("--items", required=True, help="CSV image_path,lexical,font,background")
    p.add_argument("--prototypes", required=True, help="directory <concept>/*.png")
    p.add_argument("--layers", nargs="+", help="default: every layer in the store")
    p.add_argument("--d-prime", nargs="+", type=int, dest="d_prime")
    p.add_argument("--output", required=True, help="surfaces CSV")
    _add_common(p)

    p = sub.add_parser("bench", help="time extraction and measure peak memory")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="report JSON (default: print only)")
    p.add_argument("--store", help="store to write into (default: the config's output_db)")
    _add_common(p)

    p = sub.add_parser("plot", help="render a results CSV as SVG")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_common(p)

    p = sub.add_parser("export", help="dump a store as raw blobs plus manifest.json")
    p.add_argument("--store", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--layer")
    _add_common(p)
    return parser


def _normalize(argv: list[str]) -> list[str]:
    if argv and argv[0].startswith("-") and argv[0] not in ("-h", "--help"):
        if "--log-named-modules" in argv:
            return ["modules"] + [a for a in argv if a != "--log-named-modules"]
        if "--config" in argv or any(a.startswith("--config=") for a in argv):
            return ["extract"] + argv
    return argv


def _load_adapter(cfg):
    from layerlens.adapters import adapter_from_config

    return adapter_from_config(cfg).load()


def cmd_modules(args) -> int:
    from layerlens.config import parse_config

    adapter = _load_adapter(parse_config(args.config))
    for name in adapter.named_layers():
        print(name)
    return EXIT_OK


def cmd_extract(args) -> int:
    if args.log_named_modules:
        return cmd_modules(args)
    from layerlens.config import parse_config
    from layerlens.extraction import run_extraction
    from layerlens.store import ActivationStore

    cfg = parse_config(args.config)
    if args.output:
        cfg.output_db = args.output
    adapter = _load_adapter(cfg)
    with ActivationStore(cfg.output_db) as store:
        n = run_extraction(cfg, adapter, store)
    print(f"wrote {n} records to {cfg.output_db}")
    return EXIT_OK


def cmd_probe(args) -> int:
    from layerlens.probing import labels_from_store, read_labels, run_probing, write_results
    from layerlens.store import ActivationStore

    cfg = None
    if args.config:
        from layerlens.config import parse_config

        cfg = parse_config(args.config)
    store_path = args.store or (cfg.output_db if cfg else None)
    if not store_path:
        raise UsageError("probe needs --store or --config")
    layers = args.layers
    if not layers:
        if cfg is None:
            raise UsageError("probe needs --layers or a --config to choose probe layers")
        from layerlens.adapters import select_probe_layers

        adapter = _load_adapter(cfg)
        layers = [adapter.probe_layer_name(i) for i in sorted(select_probe_layers(adapter.layer_count))]
    grid = cfg.extras.get("probe_grid") if cfg else None
    with ActivationStore(store_path, readonly=True) as store:
        labels = read_labels(args.labels) if args.labels else labels_from_store(store)
        results = run_probing(store, labels, layers, splits=args.splits, grid=grid, k=args.folds, seed=args.seed)
    write_results(results, args.output, seed=args.seed)
    for r in results:
        print(f"{r.split:>10s} {r.layer:<30s} main={r.main_accuracy:.3f} control={r.control_accuracy:.3f} "
              f"z={r.z_score:6.2f} {r.stars}")
    return EXIT_OK


def cmd_concept(args) -> int:
    from layerlens import geometry
    from layerlens.store import ActivationStore

    with ActivationStore(args.store, readonly=True) as store:
        layers = args.layers or store.distinct("layer")
        images = geometry.discover_prototypes(args.prototypes)
        prototypes = {layer: geometry.prototypes_from_store(store, layer, images) for layer in layers}
        items = geometry.items_from_store(store, geometry.read_items(args.items), layers)
    surfaces = geometry.stroop_surfaces(items, prototypes, layers, args.d_prime)
    geometry.write_surfaces(surfaces, args.output, seed=args.seed)
    for aspect in geometry.ASPECTS:
        gap = surfaces.gap(aspect)[:, -1]
        print(f"{aspect:>10s}: matched-mismatched at d'={surfaces.d_primes[-1]}: "
              + " ".join(f"{g:+.3f}" for g in gap))
    return EXIT_OK


def cmd_bench(args) -> int:
    from layerlens.bench import format_table, run_benchmark
    from layerlens.config import parse_config
    from layerlens.store import ActivationStore

    cfg = parse_config(args.config)
    adapter = _load_adapter(cfg)
    with ActivationStore(args.store or cfg.output_db) as store:
        report = run_benchmark(adapter, cfg, store, seed=args.seed)
    if args.output:
        report.write_json(args.output)
    print(format_table([report]))
    return EXIT_OK


def cmd_plot(args) -> int:
    from layerlens.plotting import plot_csv

    kind = plot_csv(args.input, args.output, seed=args.seed)
    print(f"wrote {kind} plot to {args.output}")
    return EXIT_OK


def cmd_export(args) -> int:
    from layerlens.store import ActivationStore

    filters = {"layer": args.layer} if args.layer else {}
    with ActivationStore(args.store, readonly=True) as store:
        manifest = store.export(args.output, **filters)
    print(f"wrote {manifest}")
    return EXIT_OK


COMMANDS = {
    "extract": cmd_extract,
    "modules": cmd_modules,
    "probe": cmd_probe,
    "concept": cmd_concept,
    "bench": cmd_bench,
    "plot": cmd_plot,
    "export": cmd_export,
}


class UsageError(Exception):
    pass


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_normalize(argv))
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if args.verbose else logging.WARNING)
    logging.captureWarnings(True)

    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"layerlens: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # every failure is reported as one line
        if os.environ.get("LAYERLENS_TRACEBACK"):
            raise
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"layerlens: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
