"""Command-line front end: ``netsyn analyze|synthesize|generate|compare|trace``.

Exit codes: 0 success or feasible, 2 infeasible or inconclusive, 1 error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import check_stability_centralized, check_system_dissipativity
from .decomp import test_positive_definite
from .errors import DiagnosticError, NetsynError, StepInfeasible
from .generator import Target, generate
from .lmi import SolveOptions
from .synthesis import Mode, SynthesisOptions, synthesize
from .sysmodel import (CostModel, DesignSpec, block_matrix_from_dict, load_design_spec, load_qsr,
                       load_system, save_system, to_dot, QsrSpec)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("netsyn")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ERROR)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _parse_order(text, n):
    try:
        order = [int(v) - 1 for v in text.split(",")]
    except ValueError:
        raise NetsynError(f"--order: expected comma-separated indices, got {text!r}") from None
    if sorted(order) != list(range(n)):
        raise NetsynError(f"--order: {text!r} is not a permutation of 1..{n}")
    return order


def _parse_costs(text):
    if text is None:
        return None
    if text == "fixed":
        return CostModel.fixed()
    if text == "distance":
        return CostModel.distance()
    if text.startswith("file:"):
        raw = json.loads(Path(text[5:]).read_text())
        if isinstance(raw, dict) and "kind" in raw:
            return CostModel.from_dict(raw)
        matrix = raw["matrix"] if isinstance(raw, dict) else raw
        return CostModel.explicit(np.asarray(matrix, dtype=float))
    raise NetsynError(f"--costs: expected fixed, distance or file:PATH, got {text!r}")


def _qsr_for(args, system, channel):
    if args.qsr is None:
        raise NetsynError("--qsr is required for this property or mode")
    inputs = system.input_dims if channel == "u" else system.disturbance_dims
    return load_qsr(args.qsr, system.output_dims, inputs)


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def cmd_analyze(args):
    if args.property == "definiteness":
        if args.matrix is None:
            raise NetsynError("--matrix is required for --property definiteness")
        w = block_matrix_from_dict(json.loads(Path(args.matrix).read_text()))
        order = _parse_order(args.order, len(w.row_dims)) if args.order else None
        res = test_positive_definite(w, order)
        for s in res.steps:
            print(f"step {s.step + 1} subsystem {s.label + 1}: min eig {s.min_eig:.6g}")
        report = {"property": "definiteness", "verdict": res.verdict,
                  "margins": res.margins,
                  "failing_subsystem": None if res.failing is None else res.failing + 1}
        if res.verdict:
            print("positive definite")
        else:
            print(f"not positive definite: fails at subsystem {res.failing + 1}")
        if args.out:
            _write_json(args.out, report)
        return EXIT_OK if res.verdict else EXIT_INFEASIBLE

    if args.system is None:
        raise NetsynError("--system is required")
    system = load_system(args.system)
    qsr = _qsr_for(args, system, args.channel) if args.property == "dissipativity" else None
    if args.decentralized:
        mode = Mode.STABILITY if args.property == "stability" else Mode.DISSIPATIVITY
        try:
            res = synthesize(mode, system, DesignSpec(), qsr, options=_synth_options(args),
                             raise_on_infeasible=False)
        except DiagnosticError as exc:
            print(f"inconclusive: {exc}")
            return EXIT_INFEASIBLE
        for s in res.steps:
            pivot = "n/a" if s.pivot_min_eig is None else f"{s.pivot_min_eig:.6g}"
            print(f"step {s.step + 1} subsystem {s.subsystem + 1}: {s.status}, "
                  f"pivot min eig {pivot}")
        report = {"property": args.property, "decentralized": True, **res.to_report()}
        ok = res.success
        if not ok and res.failing is not None:
            print(f"inconclusive: step fails at subsystem {res.failing + 1}")
    else:
        opts = SolveOptions()
        if args.property == "stability":
            a = system.closed_loop_A() if system.K is not None else system.A
            cert = check_stability_centralized(a, options=opts)
        else:
            cert = check_system_dissipativity(system, qsr, args.channel, options=opts)
        ok = cert.feasible
        report = {"property": args.property, "decentralized": False, "verdict": bool(ok),
                  "margin": None if not np.isfinite(cert.margin) else float(cert.margin),
                  "status": cert.status.value}
        if ok:
            report["certificate"] = cert.P.tolist()
    word = {"stability": ("stable", "not certified stable"),
            "dissipativity": ("dissipative", "not certified dissipative")}[args.property]
    print(word[0] if ok else word[1])
    if args.out:
        _write_json(args.out, report)
    return EXIT_OK if ok else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# synthesize / trace
# ---------------------------------------------------------------------------

def _synth_options(args, order=None):
    return SynthesisOptions(order=order, simulate=not getattr(args, "no_simulate", False))


def _run_order(job):
    mode, system, spec, qsr, costs, options = job
    try:
        return synthesize(mode, system, spec, qsr, costs, options, raise_on_infeasible=False)
    except StepInfeasible as exc:  # pragma: no cover - raise_on_infeasible is off
        return exc.result


def _load_problem(args):
    system = load_system(args.system)
    spec = load_design_spec(args.spec, system) if args.spec else DesignSpec()
    mode = Mode(args.mode)
    qsr = None
    if mode.dissipative:
        qsr = _qsr_for(args, system, "u" if mode is Mode.DISSIPATIVITY else "w")
    return system, spec, mode, qsr


def cmd_synthesize(args):
    system, spec, mode, qsr = _load_problem(args)
    costs = _parse_costs(args.costs)
    orders = [_parse_order(o, system.N) for o in args.order] if args.order else [None]
    jobs = [(mode, system, spec, qsr, costs, _synth_options(args, o)) for o in orders]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_order, jobs))
    else:
        results = [_run_order(j) for j in jobs]
    best = _pick(results)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = best.to_report()
    if len(results) > 1:
        report["candidates"] = [{"order": [k + 1 for k in r.order], "status": r.status,
                                 "J_dev": r.J_dev} for r in results]
    _write_json(out / "report.json", report)
    best.trace.save(out / "trace.json")
    for s in best.steps:
        print(f"step {s.step + 1} subsystem {s.subsystem + 1}: {s.status}")
    if best.system is None:
        print(f"infeasible at subsystem {best.failing + 1}")
        return EXIT_INFEASIBLE
    extra = {"certificate": {"dims": list(best.certificate.row_dims),
                             "matrix": best.certificate.data.tolist()}}
    save_system(best.system, out / "result.json", extra)
    (out / "graph.dot").write_text(to_dot(best.system, best.edges, f"{mode.value} synthesis",
                                          (best.J_dev, best.J_nom)))
    print(f"{best.status}: J_Dev={best.J_dev:.6g} J_Nom={best.J_nom:.6g}")
    return EXIT_OK if best.success else EXIT_INFEASIBLE


def _pick(results):
    good = [r for r in results if r.success]
    if good:
        return min(good, key=lambda r: r.J_dev)
    done = [r for r in results if r.system is not None]
    return done[0] if done else results[0]


def cmd_trace(args):
    system, spec, mode, qsr = _load_problem(args)
    order = _parse_order(args.order, system.N) if args.order else None
    res = synthesize(mode, system, spec, qsr, _parse_costs(args.costs),
                     _synth_options(args, order), raise_on_infeasible=False)
    res.trace.save(args.out)
    print(f"{len(res.trace.messages)} messages written to {args.out}")
    return EXIT_OK if res.success else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# generate / compare
# ---------------------------------------------------------------------------

def cmd_generate(args):
    target = Target(args.target)
    qsr = None
    if target in (Target.DISSIPATIVE, Target.DISSIPATIVATABLE) and args.gamma is not None:
        qsr = QsrSpec.l2_gain([1] * args.n, [1] * args.n, args.gamma)
    gen = generate(args.n, args.dims, args.density, target, args.seed, qsr)
    save_system(gen.system, args.out, gen.extra())
    print(f"{target.value} system with N={args.n} written to {args.out} "
          f"(attempts: {gen.attempts})")
    return EXIT_OK


def cmd_compare(args):
    from .dits import compare_methods
    system = load_system(args.system)
    spec = load_design_spec(args.spec, system) if args.spec else DesignSpec()
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    report = compare_methods(system, spec, methods, eps=args.eps, out_dir=args.out)
    for row in report["rows"]:
        costs = ""
        if "J_dev" in row:
            costs = f" J_Dev={row['J_dev']:.6g} J_Nom={row['J_nom']:.6g}"
        print(f"{row['method']:12s} {row['costs']:9s} {row['status']}{costs}")
    return EXIT_OK if any(r["status"] == "success" for r in report["rows"]) else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="netsyn", description="Decentralized topology synthesis for networked "
                "linear systems.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="centralized or sequential certificate search")
    a.add_argument("--system")
    a.add_argument("--property", choices=["stability", "dissipativity", "definiteness"],
                   default="stability")
    a.add_argument("--qsr")
    a.add_argument("--channel", choices=["u", "w"], default="u")
    a.add_argument("--matrix", help="block matrix JSON for --property definiteness")
    a.add_argument("--order", help="processing order, e.g. 3,1,2")
    a.add_argument("--decentralized", action="store_true")
    a.add_argument("--no-simulate", action="store_true")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    modes = [m.value for m in Mode]
    s = sub.add_parser("synthesize", help="sequential topology synthesis")
    s.add_argument("--system", required=True)
    s.add_argument("--spec")
    s.add_argument("--mode", choices=modes, required=True)
    s.add_argument("--qsr")
    s.add_argument("--costs")
    s.add_argument("--order", action="append", help="processing order; repeat to try several")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--no-simulate", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synthesize)

    g = sub.add_parser("generate", help="random system with a guaranteed property")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--dims", type=int, required=True)
    g.add_argument("--density", type=float, required=True)
    g.add_argument("--target", choices=[t.value for t in Target], required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gamma", type=float)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("compare", help="sequential synthesis against the dissipativity baseline")
    c.add_argument("--system", required=True)
    c.add_argument("--spec")
    c.add_argument("--methods", default="dets,dits-weak,dits-strong")
    c.add_argument("--eps", type=float, default=0.01)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("trace", help="write the step-message log of a synthesis run")
    t.add_argument("--system", required=True)
    t.add_argument("--spec")
    t.add_argument("--mode", choices=modes, required=True)
    t.add_argument("--qsr")
    t.add_argument("--costs")
    t.add_argument("--order")
    t.add_argument("--no-simulate", action="store_true")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_trace)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NetsynError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
