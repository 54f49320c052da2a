"""Command-line front end.

    dynbl run <scenario.json> [--set key=value]... [--out DIR] [--threads N]
    dynbl verify [--level quick|full] [--paths N] [--threads N]
    dynbl gnuplot <table.csv> --x COL --y COL [--by COL,...] [--out FILE]
    dynbl scenario [--name five_asset_study]

Exit codes: 0 success, 1 failed verification, 2 invalid input, 3 numerical
failure.  The default output directory comes from ``DYNBL_OUT_DIR``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
import traceback
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import (
    BankruptcyUnderflow,
    DBLError,
    NonPositiveWealth,
    NumericalError,
    SingularInnerBlock,
    SingularObservationCov,
    SingularViewGram,
    ValidationError,
)
from .lab import (
    CHUNK_SIZE,
    POLICIES,
    RebalancePlan,
    RegimeSpec,
    run_comparison,
    run_metadata,
    run_revision_comparison,
    write_comparison_tables,
    write_metadata,
    write_revision_table,
)
from .market import MarketModel
from .policy import check_gamma

ENV_OUT = "DYNBL_OUT_DIR"
DEFAULT_OUT = "dynbl-out"
EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

INVARIANTS = {
    BankruptcyUnderflow: "positive wealth on every path",
    NonPositiveWealth: "positive wealth on every path",
    SingularViewGram: "invertible P Sigma P^T + Omega",
    SingularObservationCov: "nonsingular observation covariance",
    SingularInnerBlock: "well-conditioned Woodbury inner block",
}


def schema() -> dict:
    return json.loads(resources.files("dynbl.scenarios").joinpath("scenario.schema.json").read_text())


def bundled_scenario(name: str = "five_asset_study") -> dict:
    return json.loads(resources.files("dynbl.scenarios").joinpath(f"{name}.json").read_text())


def apply_override(doc: dict, assignment: str) -> None:
    """Set a dotted key, e.g. ``experiment.seed=42``; values are parsed as JSON when possible."""
    if "=" not in assignment:
        raise ValidationError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.strip().split(".")
    node = doc
    for p in parts[:-1]:
        if isinstance(node, list):
            node = node[int(p)]
        else:
            node = node.setdefault(p, {})
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


@dataclass(frozen=True)
class ScenarioConfig:
    doc: dict
    market: MarketModel
    regime: RegimeSpec
    alphas: tuple
    gammas: tuple
    plans: tuple
    policies: tuple
    n_paths: int
    seed: int
    chunk_size: int
    z0: float
    bankruptcy: str
    revision_study: dict | None


def load_config(doc: dict) -> ScenarioConfig:
    """Validate a scenario document and build the library objects.

    Raises ``ValidationError`` (or ``jsonschema.ValidationError``) before any
    simulation starts.
    """
    jsonschema.validate(doc, schema())
    a = doc["assets"]
    market = MarketModel(a["mu"], a["sigma"], a["r_f"], doc["horizon_years"])
    v = doc["views"]
    picks = np.asarray(v["picks"], dtype=float)
    if picks.ndim != 2 or picks.shape[1] != market.n_assets:
        raise ValidationError("views.picks must have one column per asset")
    regime = RegimeSpec(v["type"], picks, tuple(v.get("times", ())),
                        tuple(np.asarray(f, dtype=float) for f in v.get("phi", ())),
                        tuple(v.get("horizons", ())))
    e = doc["experiment"]
    gammas = tuple(check_gamma(g) for g in e["gammas"])
    fine = e.get("fine_grid_steps", 2016)
    plans = tuple(RebalancePlan.named(p, fine) for p in e["plans"])
    study = e.get("revision_study")
    if study is not None:
        check_gamma(study["gamma"])
    cfg = ScenarioConfig(doc, market, regime, tuple(e["alphas"]), gammas, plans,
                         tuple(e.get("policies", POLICIES)), int(e["n_paths"]), int(e["seed"]),
                         int(e.get("chunk_size", CHUNK_SIZE)), float(e.get("z0", 1.0)),
                         e.get("bankruptcy", "raise"), study)
    for alpha in cfg.alphas:  # surfaces malformed regimes before simulating
        regime.build(market, alpha)
    return cfg


def _summary(cfg: ScenarioConfig, res, rev) -> str:
    lines = [f"dynbl {__version__}  views={cfg.regime.kind}  n_paths={cfg.n_paths}  seed={cfg.seed}",
             f"grid steps per year: {res.grid_steps}", "",
             f"{'policy':<6} {'alpha':>6} {'gamma':>6} {'plan':<10} {'mean':>9} {'std':>9} "
             f"{'CER':>9} {'+-SE':>8} {'turnover':>10} {'bankrupt':>8}"]
    for r in res.rows:
        lines.append(f"{r['policy']:<6} {r['alpha']:>6g} {r['gamma']:>6g} {r['plan']:<10} "
                     f"{r['mean']:>9.4f} {r['std']:>9.4f} {r['cer']:>9.4f} {r['se_cer']:>8.4f} "
                     f"{r['turnover']:>10.2f} {r['bankrupt']:>8d}")
    if any(r["bankrupt"] for r in res.rows):
        lines += ["", "CER is undefined (nan) where paths lost all their wealth."]
    if rev is not None:
        lines += ["", "view revisions (dynamic investor)",
                  f"{'investor':<14} {'alpha':>6} {'gamma':>6} {'plan':<8} {'CER':>9} {'+-SE':>8} {'bankrupt':>8}"]
        for r in rev.rows:
            lines.append(f"{r['investor']:<14} {r['alpha']:>6g} {r['gamma']:>6g} {r['plan']:<8} "
                         f"{r['cer']:>9.4f} {r['se_cer']:>8.4f} {r['bankrupt']:>8d}")
    return "\n".join(lines) + "\n"


def run_scenario(cfg: ScenarioConfig, out_dir: Path, threads: int = 1) -> list:
    res = run_comparison(cfg.market, cfg.regime, cfg.alphas, cfg.gammas, cfg.plans, cfg.n_paths,
                         cfg.seed, cfg.policies, cfg.z0, threads, cfg.chunk_size,
                         bankruptcy=cfg.bankruptcy)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = write_comparison_tables(res, out_dir)
    rev = None
    if cfg.revision_study is not None:
        s = cfg.revision_study
        plan = RebalancePlan.named(s["plan"], cfg.plans[0].fine_grid_steps)
        rev = run_revision_comparison(cfg.market, cfg.regime.picks, s["alphas"], s["gamma"], plan,
                                      cfg.n_paths, cfg.seed, s.get("investors"), cfg.z0, threads,
                                      cfg.chunk_size, bankruptcy=cfg.bankruptcy)
        files.append(write_revision_table(rev, out_dir))
    (out_dir / "summary.txt").write_text(_summary(cfg, res, rev))
    files.append(out_dir / "summary.txt")
    meta = run_metadata(res, plans=[p.label for p in cfg.plans], scenario=cfg.doc)
    if rev is not None:
        meta["revision_path_hash"] = rev.path_hash
    write_metadata(meta, out_dir / "metadata.json")
    files.append(out_dir / "metadata.json")
    return files


def _origin(exc: BaseException) -> str:
    """Module of the innermost library frame that raised ``exc``."""
    mod = "dynbl"
    for frame in traceback.extract_tb(exc.__traceback__):
        path = Path(frame.filename)
        if path.parent.name == "dynbl":
            mod = f"dynbl.{path.stem}"
    return mod


def _cmd_run(args) -> int:
    try:
        doc = json.loads(Path(args.scenario).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read scenario {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        doc = copy.deepcopy(doc)
        for ov in args.set or ():
            apply_override(doc, ov)
        cfg = load_config(doc)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        print(f"error: invalid scenario at {where}: {exc.message}", file=sys.stderr)
        return EXIT_INPUT
    except (ValidationError, IndexError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__} in {_origin(exc)}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out or doc.get("output_dir") or os.environ.get(ENV_OUT) or DEFAULT_OUT)
    try:
        files = run_scenario(cfg, out, args.threads)
    except NumericalError as exc:
        inv = next((v for k, v in INVARIANTS.items() if isinstance(exc, k)), "numerical stability")
        print(f"error: numerical failure in {_origin(exc)}, invariant violated: {inv}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC
    except ValidationError as exc:
        print(f"error: {type(exc).__name__} in {_origin(exc)}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for f in files:
        print(f)
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_checks

    results = run_checks(args.level, args.paths, args.threads)
    failed = [c for c in results if not c.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print("failed: " + ", ".join(f"{c.number} ({c.name})" for c in failed))
        return EXIT_VERIFY
    return EXIT_OK


def _cmd_gnuplot(args) -> int:
    """Rewrite a CSV table as whitespace-separated blocks, one per group."""
    try:
        with open(args.table, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    by = [c for c in (args.by or "").split(",") if c]
    cols = set(rows[0]) if rows else set()
    missing = [c for c in [args.x, args.y, *by] if c not in cols]
    if missing:
        print(f"error: unknown column(s) {', '.join(missing)}", file=sys.stderr)
        return EXIT_INPUT
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(r[c] for c in by), []).append(r)
    blocks = []
    for key, members in groups.items():
        members.sort(key=lambda r: float(r[args.x]))
        head = "# " + " ".join(f"{c}={v}" for c, v in zip(by, key)) if by else "# all"
        body = [f"{r[args.x]} {r[args.y]}" for r in members]
        blocks.append("\n".join([head, f"# {args.x} {args.y}", *body]))
    text = "\n\n\n".join(blocks) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_scenario(args) -> int:
    sys.stdout.write(json.dumps(bundled_scenario(args.name), indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynbl", description="Dynamic Black-Litterman experiments.")
    p.add_argument("--version", action="version", version=f"dynbl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write CSV tables")
    r.add_argument("scenario")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario field")
    r.add_argument("--out", help=f"output directory (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    r.add_argument("--threads", type=int, default=1, help="maximum worker threads")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("verify", help="run the self-check suite")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.add_argument("--paths", type=int, default=20_000, help="Monte-Carlo paths for the full level")
    v.add_argument("--threads", type=int, default=1)
    v.set_defaults(func=_cmd_verify)

    g = sub.add_parser("gnuplot", help="convert a CSV table to gnuplot data blocks")
    g.add_argument("table")
    g.add_argument("--x", required=True)
    g.add_argument("--y", required=True)
    g.add_argument("--by", help="comma-separated grouping columns")
    g.add_argument("--out")
    g.set_defaults(func=_cmd_gnuplot)

    s = sub.add_parser("scenario", help="print a bundled scenario")
    s.add_argument("--name", default="five_asset_study")
    s.set_defaults(func=_cmd_scenario)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except DBLError as exc:  # anything not mapped above
        code = EXIT_NUMERIC if isinstance(exc, NumericalError) else EXIT_INPUT
        print(f"error: {type(exc).__name__} in {_origin(exc)}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
