"""Command-line entry point: ``robust-bisim <command> ...``.

Exit codes: 0 success, 1 bad input, 2 distance iteration did not converge,
3 internal error.
"""

from __future__ import annotations

import argparse
import io
import sys
from pathlib import Path

from .distance import (
    ConvergenceError,
    delta,
    distance_csv,
    distance_matrix_text,
    extract_policy,
    format_policy,
)
from .harness import DEFAULT_GRID, FAMILIES, ExampleFamily, build_example, parse_epsilons, sweep, write_sweep_csv
from .lmc import LabelledMarkovChain, ModelError, parse_model, parse_probability, serialize_model
from .relations import bisimilarity, format_partition, partition_to_relation, quotient_chain
from .robust import robust_partition

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGENCE, EXIT_INTERNAL = 0, 1, 2, 3


class InputError(Exception):
    pass


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model (files or a built-in family)")
    g.add_argument("--tra", type=Path, help="transitions file")
    g.add_argument("--lab", type=Path, help="labels file")
    g.add_argument("--family", choices=FAMILIES, help="use a built-in example family instead of files")
    g.add_argument("--eps", default="0", help="epsilon for --family (exact, e.g. 1/8)")
    g.add_argument("--allow-single-label", action="store_true", help="accept chains with one label")


def _load(args) -> LabelledMarkovChain:
    if args.family:
        if args.tra or args.lab:
            raise InputError("give either --family or --tra/--lab, not both")
        try:
            eps = parse_probability(args.eps)
        except ModelError as e:
            raise InputError(f"--eps: {e}") from None
        return build_example(ExampleFamily(args.family, eps))
    if not (args.tra and args.lab):
        raise InputError("need --tra and --lab (or --family)")
    try:
        tra, lab = args.tra.read_text(), args.lab.read_text()
    except OSError as e:
        raise InputError(str(e)) from None
    return parse_model(tra, lab, allow_single_label=args.allow_single_label)


def _write_model(chain: LabelledMarkovChain, prefix: Path) -> None:
    tra, lab = serialize_model(chain)
    prefix.with_name(prefix.name + ".tra").write_text(tra)
    prefix.with_name(prefix.name + ".lab").write_text(lab)


def _parse_pairs(chain: LabelledMarkovChain, text: str) -> list[tuple[int, int]]:
    pairs = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 2:
            raise InputError(f"bad pair {item!r}; expected s:t")
        try:
            pairs.append((chain.state_id(parts[0]), chain.state_id(parts[1])))
        except (KeyError, ValueError) as e:
            raise InputError(f"bad pair {item!r}: {e}") from None
    return pairs


def cmd_minimize(args, out) -> int:
    chain = _load(args)
    sim = bisimilarity(chain)
    part = sim if args.mode == "bisim" else robust_partition(chain, sim)
    out.write(f"blocks: {len(part)}\n")
    if args.mode == "robust":
        lost = partition_to_relation(sim).difference(partition_to_relation(part))
        out.write(f"non-robust pairs: {len(lost)}\n")
    out.write(format_partition(part, chain))
    if args.out:
        _write_model(quotient_chain(chain, part), args.out)
    return EXIT_OK


def cmd_distance(args, out) -> int:
    chain = _load(args)
    pairs = _parse_pairs(chain, args.pairs) if args.pairs else None
    d = delta(chain, tol=args.tol, max_iter=args.max_iter, threads=args.threads)
    text = distance_matrix_text(chain, d) if args.format == "matrix" else distance_csv(chain, d, pairs)
    _emit(text, args.out, out)
    if args.policy:
        args.policy.write_text(format_policy(extract_policy(chain, d), pairs))
    return EXIT_OK


def cmd_sweep(args, out) -> int:
    try:
        grid = parse_epsilons(args.eps) if args.eps is not None else list(DEFAULT_GRID)
    except ModelError as e:
        raise InputError(f"--eps: {e}") from None
    kinds = [args.family] if args.family else list(FAMILIES)
    rows = []
    for kind in kinds:
        rows += sweep(kind, grid, tol=args.tol, workers=args.threads)
    rows.sort(key=lambda r: (r.family, r.epsilon))
    buf = io.StringIO()
    if rows:
        write_sweep_csv(rows, buf)
    _emit(buf.getvalue(), args.out, out)
    return EXIT_OK


def cmd_export(args, out) -> int:
    chain = _load(args)
    if args.out:
        _write_model(chain, args.out)
    else:
        tra, lab = serialize_model(chain)
        out.write(tra + "\n" + lab)
    return EXIT_OK


def _emit(text: str, path: Path | None, out) -> None:
    if path:
        path.write_text(text)
    else:
        out.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-bisim", description="Bisimilarity, robust bisimilarity and bisimilarity distances of labelled Markov chains.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("minimize", help="print the (robust) bisimilarity partition and write the quotient")
    _add_model_args(p)
    p.add_argument("--mode", choices=("bisim", "robust"), default="bisim")
    p.add_argument("--out", type=Path, help="write the quotient chain to OUT.tra / OUT.lab")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("distance", help="bisimilarity distances as CSV or a matrix")
    _add_model_args(p)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--pairs", help="only these pairs, e.g. h0:h1,0:2")
    p.add_argument("--format", choices=("csv", "matrix"), default="csv")
    p.add_argument("--policy", type=Path, help="also write the optimal couplings to this file")
    p.add_argument("--out", type=Path, help="output file (default: stdout)")
    p.add_argument("--threads", type=int, default=1, help="worker threads per sweep")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("sweep", help="epsilon sweep over the example families")
    p.add_argument("--family", choices=FAMILIES, help="default: all three")
    p.add_argument("--eps", help="comma-separated epsilons (default: built-in grid)")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", type=Path, help="output CSV (default: stdout)")
    p.add_argument("--threads", type=int, default=1, help="epsilon points run concurrently")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export", help="write a model (e.g. a built-in family) in .tra/.lab format")
    _add_model_args(p)
    p.add_argument("--out", type=Path, help="write OUT.tra / OUT.lab (default: stdout)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv: list[str] | None = None, out=None, err=None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        err.write("error: --threads must be at least 1\n")
        return EXIT_INPUT
    try:
        return args.func(args, out)
    except (InputError, ModelError) as e:
        err.write(f"error: {e}\n")
        return EXIT_INPUT
    except ConvergenceError as e:
        err.write(f"error: {e} (residual {e.residual:.3e})\n")
        return EXIT_NONCONVERGENCE
    except (ValueError, OSError) as e:
        err.write(f"error: {e}\n")
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001
        err.write(f"internal error: {type(e).__name__}: {e}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
