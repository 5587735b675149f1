"""Command-line entry point: ``ibrsc {validate,pf,sc,sweep}``.

Exit codes: 0 success, 1 solver non-convergence (reports are still written),
2 input error.  Diagnostics go to standard error; tables to standard output.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .io import NetworkFileError, emit_report, parse_network, parse_scenario
from .mana import NonConvergence, solve_pf
from .netmodel import NetworkError, validate
from .scsolver import FAULT_KINDS, FaultSpec, ScOptions, solve_cases, solve_sc

EXIT_OK, EXIT_NONCONV, EXIT_INPUT = 0, 1, 2


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ibrsc", description="Phasor power flow and short-circuit solver "
                                                          "for networks with inverter-based resources.")
    sub = p.add_subparsers(dest="cmd", required=True)

    v = sub.add_parser("validate", help="check a network file")
    v.add_argument("network")

    f = sub.add_parser("pf", help="three-phase power flow")
    f.add_argument("network")
    f.add_argument("--out", help="machine-readable result file (default: <network>.pf.json)")
    f.add_argument("--tol", type=float, default=1e-8)
    f.add_argument("--max-iter", type=int, default=50)

    s = sub.add_parser("sc", help="steady-state short circuit")
    s.add_argument("network")
    s.add_argument("--bus", required=True)
    s.add_argument("--kind", required=True, choices=FAULT_KINDS)
    s.add_argument("--zf", type=_complex, default=0j, help="fault impedance in pu, e.g. 0.01+0.05j")
    s.add_argument("--zg", type=_complex, default=0j, help="ground impedance in pu")
    s.add_argument("--out", help="machine-readable result file (default: <network>.sc.json)")
    s.add_argument("--trace", help="convergence trace CSV (default: <network>.trace.csv)")
    s.add_argument("--tol", type=float, default=None, help="outer-loop tolerance on |dV| (pu)")
    s.add_argument("--max-iter", type=int, default=20)

    w = sub.add_parser("sweep", help="batch of short-circuit scenarios")
    w.add_argument("network")
    w.add_argument("scenario")
    w.add_argument("--out-dir", help="output directory (default: <scenario>_results)")
    w.add_argument("--workers", type=int, default=1)
    return p


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def _pf_failure(exc: NonConvergence) -> bytes:
    d = exc.diagnostics
    doc = {"type": "power_flow", "converged": False, "message": str(exc),
           "iterations": d.get("iterations"), "worst_row": str(d.get("worst_row")),
           "history": [float(h) for h in d.get("history", [])]}
    return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode()


def _cmd_validate(args) -> int:
    net = parse_network(args.network, check=False)
    rep = validate(net)
    for i in rep.issues:
        _err(f"{args.network}: {i.severity}: [{i.category}] {i.message}")
    if not rep.ok:
        return EXIT_INPUT
    print("OK")
    return EXIT_OK


def _cmd_pf(args) -> int:
    net = parse_network(args.network)
    out = Path(args.out or Path(args.network).stem + ".pf.json")
    try:
        pf = solve_pf(net, args.tol, args.max_iter)
    except NonConvergence as exc:
        _write(out, _pf_failure(exc))
        _err(f"power flow did not converge: {exc}")
        return EXIT_NONCONV
    sys.stdout.write(emit_report(pf, "table").decode())
    _write(out, emit_report(pf, "machine"))
    return EXIT_OK


def _cmd_sc(args) -> int:
    net = parse_network(args.network)
    stem = Path(args.network).stem
    out = Path(args.out or stem + ".sc.json")
    trace = Path(args.trace or stem + ".trace.csv")
    kw = {"max_iter": args.max_iter}
    if args.tol is not None:
        kw["tol"] = args.tol
    opts = ScOptions.from_env(**kw)
    fault = FaultSpec(args.bus, args.kind, args.zf, args.zg)
    if args.bus not in {b.id for b in net.buses}:
        raise NetworkError(f"bus {args.bus!r} does not exist")
    try:
        res = solve_sc(net, fault, opts, raise_on_failure=False)
    except NonConvergence as exc:
        _write(out, _pf_failure(exc))
        _err(f"pre-fault power flow did not converge: {exc}")
        return EXIT_NONCONV
    sys.stdout.write(emit_report(res, "table").decode())
    _write(out, emit_report(res, "machine"))
    _write(trace, emit_report(res, "trace"))
    if not res.converged:
        _err(f"short circuit did not converge: {res.message}")
        return EXIT_NONCONV
    return EXIT_OK


def _cmd_sweep(args) -> int:
    net = parse_network(args.network)
    scn = parse_scenario(args.scenario, net)
    outdir = Path(args.out_dir or Path(args.scenario).stem + "_results")
    cases = scn.fault_list()
    if not cases:
        raise NetworkError("scenario defines no faults")
    opts = ScOptions(**{**scn.sc.__dict__})
    try:
        results = solve_cases(net, cases, opts, workers=args.workers)
    except NonConvergence as exc:
        _write(outdir / "bundle.json", _pf_failure(exc))
        _err(f"pre-fault power flow did not converge: {exc}")
        return EXIT_NONCONV
    _write(outdir / "bundle.json", emit_report(results, "machine"))
    _write(outdir / "tables.txt", emit_report(results, "table"))
    _write(outdir / "trace.csv", emit_report(results, "trace"))
    bad = [r for r in results if not r.converged]
    for r in results:
        state = "converged" if r.converged else "FAILED"
        print(f"{r.fault.kind:<5} bus {r.fault.bus:<10} {state:<10} iterations={r.iterations}")
    for r in bad:
        _err(f"{r.fault.kind} at {r.fault.bus}: {r.message}")
    return EXIT_NONCONV if bad else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    handler = {"validate": _cmd_validate, "pf": _cmd_pf, "sc": _cmd_sc, "sweep": _cmd_sweep}[args.cmd]
    try:
        return handler(args)
    except NetworkFileError as exc:
        _err(str(exc))
    except (NetworkError, OSError, ValueError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
    return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
