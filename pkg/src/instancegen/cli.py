"""Command-line entry point: ``instancegen generate | layout | bench run | bench eval | bench build-suite``."""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .backends import REAL_SET, SYNTHETIC_SET, BackendError, ValidationError, load_backend
from .benchmark import SuiteError, evaluate, generated_suite, image_path_for, load_suite, report, write_suite
from .config import ConfigError, RunConfig
from .pipeline import layout_only, run_pipeline

EXIT_OK, EXIT_INTERNAL, EXIT_VALIDATION, EXIT_BACKEND = 0, 1, 2, 3
_CATEGORY_EXIT = {"validation": EXIT_VALIDATION, "backend": EXIT_BACKEND, "internal": EXIT_INTERNAL}

log = logging.getLogger("instancegen")


def _base_config(args) -> dict:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if args.backend_set is not None:
        data["backend_set"] = args.backend_set
    return data


def _run_config(args) -> RunConfig:
    data = _base_config(args)
    return RunConfig.from_dict(data, prompt=args.prompt, seed=args.seed, output_dir=args.out)


def _report_record(record) -> int:
    print(json.dumps(record.to_dict(), indent=2))
    if record.error is None:
        return EXIT_OK
    print(f"error in stage {record.error.stage}: {record.error.kind}: {record.error.message}", file=sys.stderr)
    return _CATEGORY_EXIT[record.error.category]


def cmd_generate(args) -> int:
    return _report_record(run_pipeline(_run_config(args)))


def cmd_layout(args) -> int:
    return _report_record(layout_only(_run_config(args)))


def _filtered_suite(args):
    suite = load_suite(args.suite, complete=args.suite is None)
    if args.tiers:
        suite = [p for p in suite if p.tier in args.tiers]
    if args.bands:
        suite = [p for p in suite if p.band in args.bands]
    if args.families:
        suite = [p for p in suite if p.family_id in args.families]
    if args.limit is not None:
        suite = suite[:args.limit]
    return suite


def cmd_bench_run(args) -> int:
    base = _base_config(args)
    suite = _filtered_suite(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def one(p):
        cfg = RunConfig.from_dict(base, prompt=p.prompt, seed=args.seed,
                                  output_dir=str(out / "runs" / p.prompt_id))
        record = run_pipeline(cfg)  # each run builds its own backends
        image = Path(record.artifacts.get("output.png", ""))
        if record.ok and image.is_file():
            shutil.copyfile(image, image_path_for(out, p))
        return p, record

    if args.jobs <= 1:
        results = [one(p) for p in suite]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(one, suite))
    with (out / "runs.jsonl").open("w", encoding="utf-8") as fh:
        for p, record in results:
            fh.write(json.dumps({"prompt_id": p.prompt_id, **record.to_dict()}) + "\n")
    failed = [(p, r) for p, r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} runs produced an image; details in {out / 'runs.jsonl'}")
    for p, r in failed:
        print(f"  {p.prompt_id}: {r.error.stage}: {r.error.kind}: {r.error.message}", file=sys.stderr)
    return EXIT_OK


def _backend_arg(value):
    if value is None:
        return None
    path = Path(value)
    if value.endswith(".json") and path.is_file():
        return json.loads(path.read_text(encoding="utf-8"))
    return value


def cmd_bench_eval(args) -> int:
    defaults = SYNTHETIC_SET if (args.backend_set or "synthetic") == "synthetic" else REAL_SET
    judge = load_backend("judge", _backend_arg(args.judge) or defaults["judge"])
    sim_spec = _backend_arg(args.similarity) or defaults.get("similarity")
    similarity = None if args.no_similarity or sim_spec is None else load_backend("similarity", sim_spec)
    suite = _filtered_suite(args)
    result = evaluate(args.results, suite, judge, similarity, jobs=args.jobs, timeout=args.timeout)
    paths = report(result, args.out or args.results)
    summary = result.summary()
    print(json.dumps(summary, indent=2))
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def cmd_bench_build_suite(args) -> int:
    path = write_suite(generated_suite(), args.out)
    print(f"wrote {path}")
    return EXIT_OK


def _add_common(p, prompt_required: bool):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--backend-set", choices=("synthetic", "real"), default=None,
                   help="default backends when the config does not name one (default: synthetic)")
    p.add_argument("--seed", type=int, default=None)
    if prompt_required:
        p.add_argument("--prompt", required=True)
        p.add_argument("--out", required=True, help="run directory")


def _add_filters(p):
    p.add_argument("--suite", help="suite JSONL (default: the shipped suite)")
    p.add_argument("--tiers", nargs="+", choices=("A", "B", "C"))
    p.add_argument("--bands", nargs="+", choices=("low", "mid", "high"))
    p.add_argument("--families", nargs="+", type=int)
    p.add_argument("--limit", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="instancegen", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="full pipeline for one prompt")
    _add_common(g, True)
    g.set_defaults(func=cmd_generate)

    lay = sub.add_parser("layout", help="stop after the segment summary")
    _add_common(lay, True)
    lay.set_defaults(func=cmd_layout)

    bench = sub.add_parser("bench", help="compound-prompt suite")
    bsub = bench.add_subparsers(dest="bench_command", required=True)

    run = bsub.add_parser("run", help="generate one image per suite prompt")
    _add_common(run, False)
    _add_filters(run)
    run.add_argument("--out", required=True, help="results directory")
    run.add_argument("--jobs", type=int, default=1)
    run.set_defaults(func=cmd_bench_run)

    ev = bsub.add_parser("eval", help="judge a results directory")
    _add_filters(ev)
    ev.add_argument("--results", required=True, help="directory holding <prompt_id>.png images")
    ev.add_argument("--judge", help="judge backend name, module:Class, or a JSON spec file")
    ev.add_argument("--similarity", help="similarity backend name, module:Class, or a JSON spec file")
    ev.add_argument("--no-similarity", action="store_true")
    ev.add_argument("--backend-set", choices=("synthetic", "real"), default=None)
    ev.add_argument("--out", help="report directory (default: the results directory)")
    ev.add_argument("--jobs", type=int, default=1)
    ev.add_argument("--timeout", type=float, default=120.0)
    ev.set_defaults(func=cmd_bench_eval)

    bs = bsub.add_parser("build-suite", help="regenerate the suite file from the family table")
    bs.add_argument("--out", required=True)
    bs.set_defaults(func=cmd_bench_build_suite)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValidationError, SuiteError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
