"""Command-line entry point.

Exit status: 0 success (or authentic verdict), 2 counterfeit verdict, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, lda, simgen, svdd
from .dumpio import export_features, format_float
from .errors import ConvergenceError, DomainError, FormatError
from .features import feature_order_fingerprint
from .pipeline import build_model, dump_features
from .protocol import VerificationPolicy, VerificationReport, select_threshold, verify_module

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_COUNTERFEIT = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


def _pages(text) -> int | None:
    if str(text) == "all":
        return None
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("--pages must be positive or 'all'")
    return n


def _header(args, **extra) -> dict:
    """Provenance record: tool version, feature fingerprint and every resolved option.

    Always written to stderr as one ``#``-prefixed JSON line, and embedded in
    JSON outputs by the commands that produce them.
    """
    options = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    meta = {"tool": "dramorigin", "version": __version__, "command": args.command,
            "feature_fingerprint": feature_order_fingerprint(), "numpy": np.__version__,
            "options": options, **extra}
    print("# " + json.dumps(meta, sort_keys=True, default=str), file=sys.stderr)
    return meta


def _gamma_default() -> str:
    return ",".join(repr(g) for g in svdd.DEFAULT_GAMMA_GRID)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dramorigin", description="DRAM origin fingerprinting from reduced-latency read errors.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="JSON file of flag defaults (keys are flag names without dashes)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic corpus of dumps")
    s.add_argument("--profile-set", default="default", help="'default' or a profile JSON file")
    s.add_argument("--modules", type=int, default=3, help="modules per class")
    s.add_argument("--rows", type=int, default=2048, help="page groups per module")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--write-profiles", action="store_true", help="also write profiles.json")

    s = sub.add_parser("extract", help="feature CSV from dumps")
    s.add_argument("--dump", action="append", required=True)
    s.add_argument("--out", required=True)

    for name, text in (("train", "fit a class model (tunes when a grid has several values)"),
                       ("tune", "tune (C, gamma) by k-fold CV with artificial outliers, then fit")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--dump", action="append", required=True, help="dumps of the target class")
        s.add_argument("--grid-c", type=_floats, default=list(svdd.DEFAULT_C_GRID) if name == "tune" else [0.1])
        s.add_argument("--grid-gamma", type=_floats,
                       default=_floats(_gamma_default()) if name == "tune" else [2.0**-8])
        s.add_argument("--folds", type=int, default=5)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--tune-pages", type=int, default=None, help="tune on a seeded subset of this many pages")
        s.add_argument("--out", required=True, help="model JSON path")

    s = sub.add_parser("verify", help="consumer-side verification of one module")
    s.add_argument("--dump", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--lambda", dest="lambda_ppr", type=float, required=True)
    s.add_argument("--pages", type=_pages, default=256, help="page groups to test, or 'all'")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="report JSON path")

    s = sub.add_parser("project", help="LDA coordinates as CSV")
    s.add_argument("--dump", action="append", default=[])
    s.add_argument("--manifest", help="corpus manifest; dumps are read from its directory")
    s.add_argument("--components", type=int, default=5)
    s.add_argument("--out", required=True)

    s = sub.add_parser("report", help="summarise verification reports")
    s.add_argument("--report", action="append", required=True)
    s.add_argument("--neg-max", type=float, default=None,
                   help="worst PPR seen on known negatives, for the threshold gap check")
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    if "lambda" in cfg:
        cfg["lambda_ppr"] = cfg.pop("lambda")
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            known_dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in known_dests})
            for a in sp._actions:
                if a.dest in cfg:
                    a.required = False
    return argv


def _load_class_features(paths):
    xs, tags = [], set()
    for path in paths:
        meta, _, x = dump_features(path)
        xs.append(x)
        tags.add(meta.class_tag)
    if len(tags) != 1:
        raise DomainError(f"training dumps span several classes: {sorted(tags)}")
    return np.vstack(xs), tags.pop()


def cmd_simulate(args) -> int:
    header = _header(args)
    profiles = simgen.resolve_profiles(args.profile_set)
    entries = simgen.generate_corpus(profiles, args.modules, args.rows, args.seed, args.out)
    if args.write_profiles:
        simgen.save_profiles(profiles, Path(args.out) / "profiles.json")
    (Path(args.out) / "corpus.json").write_text(
        json.dumps({**header, "modules_per_class": args.modules, "rows_per_module": args.rows,
                    "profile_set": str(args.profile_set)}, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(entries)} dumps to {args.out}")
    return EXIT_OK


def cmd_extract(args) -> int:
    _header(args)
    rows = []
    for path in args.dump:
        meta, keys, x = dump_features(path)
        rows.extend((meta.module_id, b, r, v) for (b, r), v in zip(keys, x))
    export_features(rows, args.out)
    print(f"wrote {len(rows)} feature rows to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    header = _header(args)
    x, tag = _load_class_features(args.dump)
    model, result = build_model(x, tag, args.grid_c, args.grid_gamma, args.folds, args.seed, args.tune_pages)
    model.info.update(header)
    model.info["training_dumps"] = [Path(p).name for p in args.dump]
    svdd.save_model(model, args.out)
    if result is not None:
        print(f"tuned C={result.C:g} gamma={result.gamma:g} score={result.score:.4f}"
              + (f" ({len(result.skipped)} infeasible C values skipped)" if result.skipped else ""))
    print(f"class {tag}: {len(model.alphas)} support vectors, R2={model.r2:.6g} -> {args.out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    _header(args)
    model = svdd.load_model(args.model)
    policy = VerificationPolicy(args.lambda_ppr, args.pages, args.seed)
    report = verify_module(args.dump, model, policy)
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(report.summary())
    return EXIT_OK if report.authentic else EXIT_COUNTERFEIT


def cmd_project(args) -> int:
    _header(args)
    paths = [Path(p) for p in args.dump]
    if args.manifest:
        base = Path(args.manifest).parent
        paths.extend(base / e.file for e in simgen.read_manifest(args.manifest))
    if not paths:
        raise DomainError("project needs --dump or --manifest")
    xs, ys = [], []
    for path in paths:
        meta, _, x = dump_features(path)
        xs.append(x)
        ys.extend([meta.class_tag] * len(x))
    x = np.vstack(xs)
    y = np.array(ys)
    proj = lda.fit_lda(x, y, args.components)
    coords = lda.project(proj, x)
    with open(args.out, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["class_tag", *(f"phi{i + 1}" for i in range(proj.n_components))])
        for tag, row in zip(y, coords):
            w.writerow([int(tag), *(format_float(v) for v in row)])
    ratios = ", ".join(f"{r:.3f}" for r in proj.ratios)
    print(f"projected {len(x)} rows onto {proj.n_components} components (separability ratios {ratios})")
    return EXIT_OK


def cmd_report(args) -> int:
    _header(args)
    reports = [VerificationReport.from_dict(json.loads(Path(p).read_text(encoding="utf-8"))) for p in args.report]
    for r in reports:
        print(r.summary())
        print()
    authentic = [r.ppr for r in reports if r.authentic]
    if len(reports) > 1 and authentic:
        sel = select_threshold(authentic, args.neg_max)
        line = f"lowest authentic PPR {sel.lambda_ppr:.2f}%"
        if sel.gap is not None:
            line += f"; gap to negatives {sel.gap:.2f} points ({'separable' if sel.separable else 'OVERLAP'})"
        print(line)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "extract": cmd_extract,
    "train": cmd_train,
    "tune": cmd_train,
    "verify": cmd_verify,
    "project": cmd_project,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"dramorigin: bad config: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        return COMMANDS[args.command](args)
    except (DomainError, FormatError, ConvergenceError, OSError) as exc:
        print(f"dramorigin {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())
