"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure,
4 partial result (the cardinality cap was hit; a flagged artifact is written).
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import BINS, cate, conditional_mean_effects, effect_binning, rps_summary
from .crossprofile import PartialResultError
from .io import (ConfigError, DataError, RunConfig, ingest_csv, load_config, load_reference_sigmas,
                 parse_reference, read_artifact, write_artifact)
from .loss import EmptyPoolError
from .rashomon import enumerate_rps, reference_objective

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY, EXIT_PARTIAL = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rashomon", description="Enumerate and analyze Rashomon partition sets.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    en = sub.add_parser("enumerate", help="enumerate the Rashomon set of a dataset")
    en.add_argument("--config", required=True, help="YAML or JSON run configuration")
    en.add_argument("--data", help="CSV file (overrides the config)")
    en.add_argument("--lambda", dest="lam", type=float)
    en.add_argument("--epsilon", type=float)
    en.add_argument("--reference", help="fullsplit, greedy or file:PATH")
    en.add_argument("--no-cross-profile", dest="cross_profile", action="store_false", default=None)
    en.add_argument("--single-profile", dest="single_profile", action="store_true", default=None)
    en.add_argument("--h-max", dest="h_max", type=int)
    en.add_argument("--max-rps", dest="max_rps", type=int)
    en.add_argument("--seed", type=int)
    en.add_argument("--out", help="artifact path")
    en.add_argument("--jobs", type=int, help="worker threads for the per-profile searches")
    en.add_argument("--outcome-model", dest="outcome_model", choices=("constant", "linear"))
    en.add_argument("--lenient", dest="strict", action="store_false", default=None,
                    help="treat pools without observations as zero loss instead of failing")

    an = sub.add_parser("analyze", help="summarize an artifact")
    an.add_argument("artifact")
    an.add_argument("query", choices=("effects", "cate", "bins", "summary"))
    an.add_argument("--x", help="comma-separated levels of the non-treatment features")
    an.add_argument("--treatment", help="treatment feature name or position")
    an.add_argument("--signs", action="store_true", help="cate: tabulate the weight of each effect sign")
    an.add_argument("--table", choices=("histogram", "splits", "sizes"), default="histogram",
                    help="summary: which table to print")
    an.add_argument("--zero-tol", dest="zero_tol", type=float, default=0.0)
    an.add_argument("--out", help="write the table here instead of standard output")

    ve = sub.add_parser("verify", help="check the enumerator against exhaustive oracles")
    ve.add_argument("--quick", action="store_true", help="fewer random datasets per suite")
    ve.add_argument("--seed", type=int, default=0)
    ve.add_argument("--levels", help="comma-separated level counts of an extra single-profile space")

    si = sub.add_parser("simulate", help="run a synthetic recovery experiment")
    si.add_argument("design", choices=("drug-pair", "four-feature"))
    si.add_argument("--lambda", dest="lam", type=float, required=True)
    si.add_argument("--epsilon", dest="epsilons", required=True, help="comma-separated epsilon grid")
    si.add_argument("--replications", type=int, default=100)
    si.add_argument("--reference", default="fullsplit", choices=("fullsplit", "greedy"))
    si.add_argument("--seed", type=int, default=0)
    si.add_argument("--jobs", type=int, default=1)
    si.add_argument("--out")
    return parser


def _merge_config(args) -> RunConfig:
    cfg = load_config(args.config)
    raw = cfg.to_mapping()
    overrides = {"data": args.data, "lambda": args.lam, "epsilon": args.epsilon, "reference": args.reference,
                 "cross_profile": args.cross_profile, "single_profile": args.single_profile,
                 "h_max": args.h_max, "max_rps": args.max_rps, "seed": args.seed, "out": args.out,
                 "jobs": args.jobs, "outcome_model": args.outcome_model, "strict": args.strict}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_mapping(raw)


def run_enumerate(config: RunConfig, base_dir: Path | None = None):
    """Ingest, pick the reference and enumerate. Returns the Rashomon set."""
    if not config.data:
        raise ConfigError("no data file given")
    base_dir = base_dir or Path(".")
    data_path = Path(config.data)
    if not data_path.is_absolute():
        data_path = base_dir / data_path
    d = ingest_csv(data_path, config)
    space = config.space()
    loss_cfg = config.loss_config()
    mode, ref_path = parse_reference(config.reference)
    sigmas = None
    if mode == "explicit":
        ref = Path(ref_path)
        sigmas = load_reference_sigmas(ref if ref.is_absolute() else base_dir / ref, space)
    q0, _ = reference_objective(space, d, loss_cfg, mode, sigmas)
    return enumerate_rps(space, d, loss_cfg, q0, config.epsilon, cross_profile=config.cross_profile,
                         h_max=config.h_max, max_rps=config.max_rps, n_jobs=config.jobs)


def cmd_enumerate(args) -> int:
    config = _merge_config(args)
    if not config.out:
        raise UsageError("an output path is required (--out or 'out' in the config)")
    base = Path(args.config).resolve().parent if args.data is None else Path(".")
    echo = config.to_mapping(echo=True)
    try:
        rps = run_enumerate(config, base)
    except PartialResultError as err:
        write_artifact(err.partial, config.out, echo)
        print(f"partial result: {err}; wrote {len(err.partial)} entries to {config.out}", file=sys.stderr)
        return EXIT_PARTIAL
    write_artifact(rps, config.out, echo)
    print(f"wrote {len(rps)} entries to {config.out} (q0={rps.q0!r}, theta={rps.theta!r})", file=sys.stderr)
    return EXIT_OK


def _label_lookup(header_cfg: dict):
    feats = header_cfg.get("features") if header_cfg else None
    return [f["levels"] for f in feats] if feats else None


def _fmt_level(m, v, labels, single_profile):
    if labels is None:
        return str(v)
    return str(labels[m][v - (1 if single_profile else 0)])


def _fmt_combination(k, labels, single_profile):
    return " ".join(_fmt_level(m, v, labels, single_profile) for m, v in enumerate(k))


def _parse_levels(text: str, labels, feature_positions, single_profile) -> list[int]:
    parts = [p.strip() for p in text.split(",")]
    out = []
    for part, m in zip(parts, feature_positions):
        if labels is not None and part in labels[m]:
            out.append(labels[m].index(part) + (1 if single_profile else 0))
        else:
            try:
                out.append(int(part))
            except ValueError:
                raise DataError(f"unknown level {part!r} for feature {m}") from None
    if len(parts) != len(feature_positions):
        raise DataError(f"--x needs {len(feature_positions)} values, got {len(parts)}")
    return out


def _treatment(rps, text: str | None) -> int:
    if text is None:
        raise UsageError("--treatment is required for this query")
    names = rps.space.feature_names()
    if text in names:
        return names.index(text)
    try:
        t = int(text)
    except ValueError:
        raise DataError(f"unknown treatment feature {text!r}") from None
    if not 0 <= t < len(names):
        raise DataError(f"treatment feature {t} is out of range")
    return t


def _cate_for(rps, x_levels, t):
    try:
        return cate(rps, x_levels, t)
    except ValueError as err:
        raise DataError(str(err)) from None


def analyze_table(rps, config_echo: dict, query: str, x: str | None = None, treatment: str | None = None,
                  signs: bool = False, table: str = "histogram", zero_tol: float = 0.0) -> str:
    """Render one analysis query as CSV text."""
    space = rps.space
    labels = _label_lookup(config_echo)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if len(rps) == 0:
        raise DataError("the Rashomon set is empty")
    if query == "effects":
        eff = conditional_mean_effects(rps)
        w.writerow(["combination", "mean_effect"])
        for k in rps.universe():
            w.writerow([_fmt_combination(k, labels, space.single_profile), repr(float(eff[space.index(k)]))])
    elif query == "cate":
        t = _treatment(rps, treatment)
        if x is None:
            raise UsageError("--x is required for cate")
        others = [m for m in range(space.num_features) if m != t]
        vals = _cate_for(rps, _parse_levels(x, labels, others, space.single_profile), t)
        if signs:
            w.writerow(["sign", "weight"])
            v, wt = vals.values, vals.weights
            for name, mask in (("negative", v < -zero_tol), ("zero", np.abs(v) <= zero_tol),
                               ("positive", v > zero_tol)):
                w.writerow([name, repr(float(wt[mask].sum()))])
        else:
            w.writerow(["entry", "weight", "effect"])
            for i, (v, wt) in enumerate(zip(vals.values, vals.weights)):
                w.writerow([i, repr(float(wt)), repr(float(v))])
    elif query == "bins":
        t = _treatment(rps, treatment)
        others = [m for m in range(space.num_features) if m != t]
        if x is not None:
            xs = [tuple(_parse_levels(x, labels, others, space.single_profile))]
        else:
            seen = []
            for k in rps.universe():
                key = tuple(k[m] for m in others)
                if key not in seen:
                    seen.append(key)
            xs = seen
        w.writerow(["x"] + list(BINS))
        error = None
        for key in xs:
            try:
                vals = cate(rps, key, t)
            except ValueError as err:
                error = err
                continue
            masses = effect_binning(vals, zero_tol=zero_tol)
            full = list(key[:t]) + [None] + list(key[t:])
            shown = " ".join("*" if v is None else _fmt_level(m, v, labels, space.single_profile)
                             for m, v in enumerate(full))
            w.writerow([shown] + [repr(float(masses[b])) for b in BINS])
        if buf.getvalue().count("\n") == 1 and error is not None:
            raise DataError(str(error))
    elif query == "summary":
        s = rps_summary(rps)
        if table == "histogram":
            w.writerow(["n_pools", "ratio_lo", "ratio_hi", "weight"])
            for (n, lo, hi), wt in sorted(s.histogram.items()):
                w.writerow([n, repr(lo), repr(hi), repr(wt)])
        elif table == "splits":
            w.writerow(["profile", "feature", "level", "weight"])
            for (rho, m, lev), wt in sorted(s.split_frequency.items()):
                w.writerow(["".join(map(str, rho)), space.feature_names()[m], lev, repr(wt)])
        else:
            w.writerow(["rank", "q", "n_pools"])
            for i, (q, n) in enumerate(s.q_sizes):
                w.writerow([i, repr(q), n])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    rps, echo = read_artifact(args.artifact)
    _emit(analyze_table(rps, echo, args.query, args.x, args.treatment, args.signs, args.table, args.zero_tol),
          args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import OracleSizeError, run_verification

    extra = None
    if args.levels:
        try:
            extra = tuple(int(v) for v in args.levels.split(","))
        except ValueError:
            raise UsageError("--levels must be comma-separated integers") from None
    try:
        report = run_verification(seed=args.seed, quick=args.quick, extra_levels=extra)
    except OracleSizeError as err:
        raise UsageError(str(err)) from None
    print(report.render())
    return EXIT_OK if report.ok else EXIT_VERIFY


def cmd_simulate(args) -> int:
    from .simulation import drug_pair_spec, four_feature_spec, run_recovery_experiment

    try:
        eps = [float(v) for v in args.epsilons.split(",")]
    except ValueError:
        raise UsageError("--epsilon must be a comma-separated list of numbers") from None
    spec = (drug_pair_spec if args.design == "drug-pair" else four_feature_spec)(seed=args.seed)
    table = run_recovery_experiment(spec, args.lam, eps, args.replications, reference=args.reference,
                                    n_jobs=args.jobs)
    _emit(table.to_csv(), args.out)
    return EXIT_OK


COMMANDS = {"enumerate": cmd_enumerate, "analyze": cmd_analyze, "verify": cmd_verify, "simulate": cmd_simulate}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as err:
        print(f"rashomon: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, EmptyPoolError) as err:
        print(f"rashomon: data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
