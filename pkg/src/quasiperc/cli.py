"""Command-line interface: ``quasiperc {tile,run,mc,sweep,verify}``.

Exit codes: 0 ok, 2 usage or invalid input, 3 generation failure,
4 rule/graph incompatibility, 5 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import Configuration, RuleSpec, fixpoint
from .errors import (
    DegenerateBandError,
    DegenerateBasisError,
    InvalidBasisError,
    InvalidInputError,
    InvalidPatchError,
    SingularGridError,
    UnsupportedRuleError,
)
from .multigrid import STRUCTURE_KINDS, build_graph, load_graph
from .percolation import (
    ExperimentSpec,
    MeasureSpec,
    default_threads,
    monte_carlo,
    summary_json,
    sweep,
    sweep_csv,
    trials_csv,
    uniforms,
    from_uniforms,
)
from .render import RenderStyle, render_svg
from .verify import SUITES, run_suites

EXIT_OK, EXIT_USAGE, EXIT_GENERATION, EXIT_INCOMPATIBLE, EXIT_VERIFY = 0, 2, 3, 4, 5

log = logging.getLogger("quasiperc")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc


def _analytic(spec: ExperimentSpec):
    if spec.measure.kind != "bernoulli":
        return None
    size = {"fortress-ball": 5, "cube": 3}.get(spec.criterion.kind)
    return None if size is None else 1.0 - (1.0 - spec.measure.param) ** size


def cmd_tile(args) -> int:
    g = build_graph(args.kind, args.radius, args.offsets)
    doc = g.to_dict()
    _write(args.out, json.dumps(doc, sort_keys=True) + "\n")
    if args.svg:
        Path(args.svg).write_text(render_svg(g, style=RenderStyle(fill="family")))
    log.info("%s: %d tiles, %d interior", args.kind, len(g), int(g.interior.sum()))
    return EXIT_OK


def cmd_run(args) -> int:
    g = load_graph(_load_json(args.patch))
    rule = RuleSpec.parse(args.rule)
    measure = MeasureSpec.parse(args.measure)
    x0 = from_uniforms(measure, g, uniforms(g, args.seed, 0))
    init = Configuration(g, x0, args.boundary)
    final, rounds = fixpoint(init, rule)
    record = {"rule": str(rule), "measure": str(measure), "seed": args.seed, "tiles": len(g),
              "rounds": rounds, "initial_fraction": float(x0.mean()), "final_fraction": float(final.state.mean()),
              "surviving_zeros": int((final.state == 0).sum()),
              "initial": init.to_rle(), "final": final.to_rle()}
    if args.frames:
        out = Path(args.frames)
        out.mkdir(parents=True, exist_ok=True)
        for r in range(rounds + 1):
            st = ((final.times >= 0) & (final.times <= r)).astype(np.uint8)
            (out / f"round_{r:04d}.svg").write_text(render_svg(g, st, title=f"round {r}"))
    _write(args.out, json.dumps(record, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _experiment(args) -> ExperimentSpec:
    return ExperimentSpec.from_dict(_load_json(args.experiment))


def cmd_mc(args) -> int:
    spec = _experiment(args)
    t0 = time.perf_counter()
    est, stats = monte_carlo(spec, threads=args.threads)
    runtime = time.perf_counter() - t0 if args.timing else None
    if args.csv:
        Path(args.csv).write_text(trials_csv(stats))
    _write(args.json, summary_json(spec, est, _analytic(spec), runtime))
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _experiment(args)
    ps = args.p_values or spec.p_values
    if not ps:
        raise InvalidInputError("sweep needs p_values (in the experiment or via --p-values)")
    coupled = spec.coupled if args.coupled is None else args.coupled
    t0 = time.perf_counter()
    ests, _ = sweep(spec, ps, coupled=coupled, threads=args.threads)
    runtime = time.perf_counter() - t0 if args.timing else None
    if args.csv:
        Path(args.csv).write_text(sweep_csv(ests))
    _write(args.json, summary_json(spec, ests, None, runtime))
    return EXIT_OK


def cmd_verify(args) -> int:
    g = load_graph(_load_json(args.patch))
    rep = run_suites(g, args.suite, kmax=args.kmax, samples=args.samples, n_max=args.n_max, seed=args.seed)
    _write(args.out, json.dumps(rep.to_dict(), indent=2, sort_keys=True, default=float) + "\n")
    return EXIT_OK if rep.ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasiperc", description="Bootstrap percolation on rhombus tilings.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("tile", help="generate a patch or structure")
    t.add_argument("--kind", required=True, help="one of: " + ", ".join(STRUCTURE_KINDS))
    t.add_argument("--radius", type=float, default=10.0, help="window radius (half size for cell grids)")
    t.add_argument("--offsets", type=_floats, default=None, help="comma-separated line offsets")
    t.add_argument("--out", default="-")
    t.add_argument("--svg")
    t.set_defaults(func=cmd_tile)

    r = sub.add_parser("run", help="one bootstrap run on a stored patch")
    r.add_argument("--patch", required=True)
    r.add_argument("--rule", default="m2", help="m2, m3, F3 or directed:0+,1-,...[@mK]")
    r.add_argument("--measure", default="bernoulli:0.1")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--boundary", choices=("open", "infected"), default="open")
    r.add_argument("--frames", help="directory for per-round SVG frames")
    r.add_argument("--out", default="-")
    r.set_defaults(func=cmd_run)

    for name, fn, helptext in (("mc", cmd_mc, "Monte Carlo invasion estimate"),
                               ("sweep", cmd_sweep, "invasion estimates over p values")):
        m = sub.add_parser(name, help=helptext)
        m.add_argument("--experiment", required=True, help="experiment JSON")
        m.add_argument("--csv")
        m.add_argument("--json", default="-")
        m.add_argument("--threads", type=int, default=None, help="default: $QUASIPERC_THREADS or 1")
        m.add_argument("--timing", action="store_true", help="include wall-clock runtime in the summary")
        if name == "sweep":
            m.add_argument("--p-values", type=_floats, default=None)
            grp = m.add_mutually_exclusive_group()
            grp.add_argument("--coupled", dest="coupled", action="store_true", default=None)
            grp.add_argument("--uncoupled", dest="coupled", action="store_false")
        m.set_defaults(func=fn)

    v = sub.add_parser("verify", help="run the geometry, stability and counting checks")
    v.add_argument("--patch", required=True)
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.add_argument("--kmax", type=int, default=6)
    v.add_argument("--samples", type=int, default=10)
    v.add_argument("--n-max", type=int, default=10)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default="-")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_threads()
    try:
        return args.func(args)
    except (SingularGridError, DegenerateBandError, DegenerateBasisError, InvalidBasisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except UnsupportedRuleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (InvalidInputError, InvalidPatchError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
