"""Command-line entry point: ``pairspec <command> [--config PATH] ...``."""

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import List, Optional

from .config import SYMBOLIC_LAMBDAS, RunConfig, load_config
from .errors import ConfigError, PairspecError
from .runner import COMMANDS, Run

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _lambda_list(text: str):
    out = []
    for part in text.split(","):
        part = part.strip()
        if part in SYMBOLIC_LAMBDAS:
            out.append(part)
            continue
        try:
            out.append(float(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number or critical-coupling name: {part!r}")
    return tuple(out)


def _n_list(text: str):
    try:
        out = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("mode counts must be positive")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pairspec",
        description="Spectral analysis of a quadratic pair-interaction boson Hamiltonian.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="TOML run configuration (default: canon density)")
    p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    p.add_argument("--lambda", dest="lambdas", type=_lambda_list, help="couplings X[,Y,...]")
    p.add_argument("--oracle-n", dest="oracle_n", type=_n_list, help="oracle mode counts N[,N2,...]")
    p.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.lambdas:
        cfg = dataclasses.replace(cfg, lambdas=args.lambdas)
    if args.oracle_n:
        cfg = dataclasses.replace(
            cfg, oracle=dataclasses.replace(cfg.oracle, n=args.oracle_n, enabled=True)
        )
    return cfg


def _fail(kind: str, exc: Exception, code: int, **extra) -> int:
    record = {"error": {"kind": kind, "type": type(exc).__name__, "message": str(exc), **extra}}
    print(json.dumps(record, indent=2), file=sys.stderr)
    return code


def _summary(report) -> List[str]:
    lines = [f"density: {report['density']['label']}"]
    if "validation" in report:
        v = report["validation"]
        lines.append("assumptions: " + ("all pass" if v["passed"] else "failed " + ", ".join(v["failed"])))
    if "couplings" in report:
        c = report["couplings"]
        lines.append(
            "lambda_c0 = {:.12g}, lambda_c = {:.12g}".format(
                c["lambda_c0"]["value"], c["lambda_c"]["value"]
            )
        )
    for rec in report.get("results", []):
        lam = rec["lambda"]["value"]
        if rec["status"] != "ok":
            lines.append(f"lambda = {lam:.12g}: error in {rec['error']['module']}.{rec['error']['operation']}")
            continue
        eg = rec["e_g"]
        tail = "" if eg is None else f", E_g = {eg['value']:.12g}"
        lines.append(f"lambda = {lam:.12g}: {rec['regime']}{tail}")
    for row in report.get("oracle", {}).get("rows", []):
        head = f"oracle N = {row['n']}, lambda = {row['lambda']['value']:.12g}"
        if row["status"] != "ok":
            lines.append(f"{head}: error in {row['error']['module']}.{row['error']['operation']}")
        elif row.get("ground_rel_err") is not None:
            lines.append(f"{head}: ground rel err {row['ground_rel_err']['value']:.3g}")
    if "witness" in report:
        w = report["witness"]
        lines.append(
            "witness: min quotient {:.6g} at N = {}".format(w["min_rayleigh"]["value"], w["argmin_n"])
        )
    lines.append("files: " + ", ".join(report["files"]))
    return lines


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = _apply_overrides(cfg, args)
        runner = Run(cfg, args.command)
    except ConfigError as exc:
        return _fail(
            "config", exc, EXIT_CONFIG,
            problems=[{"path": p, "why": w} for p, w in exc.problems],
        )
    try:
        report = runner.execute(args.out)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG, problems=[{"path": p, "why": w} for p, w in exc.problems])
    except (PairspecError, ArithmeticError) as exc:
        module, _, operation = runner.stage.name.partition(".")
        return _fail("numeric", exc, EXIT_NUMERIC, module=module, operation=operation)
    except OSError as exc:
        return _fail("output", exc, EXIT_NUMERIC)
    if not args.quiet:
        print("\n".join(_summary(report)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
