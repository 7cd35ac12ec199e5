"""Command-line interface: scenario ingestion, analysis commands, batch runs.

Exit codes: 0 success, 1 usage or file problems, 2 infeasible model,
3 non-convergence.  Reports are JSON (default) or flat CSV key/value rows.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import bidding, brlab, equilibrium
from .errors import (
    EsharingError,
    FileError,
    Infeasible,
    IterationLimit,
    MaxIterExceeded,
)
from .market import Scenario, clear_market, clearing_kkt_residual
from .network import dc_flow_oracle, is_radial, line_flows
from .scenario_io import dump_scenario, gen_scenario, load_scenario

OUTPUT_DIR_ENV = "ESHARING_OUT"


class UsageError(EsharingError):
    """Bad flags or arguments."""


@dataclass(frozen=True, eq=False)
class RunReport:
    command: str
    scenario: str | None
    digest: str | None
    elapsed_s: float
    results: dict
    residuals: dict

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "scenario": self.scenario,
            "digest": self.digest,
            "elapsed_s": self.elapsed_s,
            "results": self.results,
            "residuals": self.residuals,
        }


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise UsageError(message)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _flatten(prefix: str, value, rows: list):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(value, np.ndarray):
        _flatten(prefix, value.tolist(), rows)
    elif isinstance(value, (list, tuple)):
        rows.append((prefix, ",".join(str(_scalar(v)) for v in value)))
    else:
        rows.append((prefix, _scalar(value)))


def _scalar(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def render_report(report: RunReport, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, default=_jsonable,
                          sort_keys=True)
    rows: list = []
    _flatten("", report.to_dict(), rows)
    buf = io.StringIO()
    import csv as _csv

    writer = _csv.writer(buf)
    writer.writerow(["key", "value"])
    writer.writerows(rows)
    return buf.getvalue().rstrip("\n")


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


def _parse_vector(text: str, n: int, what: str) -> np.ndarray:
    try:
        vals = np.array([float(v) for v in text.replace(";", ",").split(",")])
    except ValueError as exc:
        raise UsageError(f"cannot parse {what} {text!r}: {exc}") from exc
    if vals.shape != (n,):
        raise UsageError(f"expected {n} values for {what}, got {vals.size}")
    return vals


def build_parser() -> _Parser:
    parser = _Parser(prog="esharing",
                     description="Equilibrium engine for networked "
                                 "energy-sharing markets")
    parser.add_argument("--format", choices=("json", "csv"), default="json",
                        help="report format (default json)")
    sub = parser.add_subparsers(dest="command", required=True)

    def scen_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", help="scenario JSON file")
        return p

    scen_cmd("validate", "check scenario and network invariants")
    p = scen_cmd("clear", "clear the market for a given bid vector")
    p.add_argument("--bids", required=True, help="comma-separated bids")
    scen_cmd("gne", "regulated-mechanism equilibrium")
    scen_cmd("ve", "variational equilibrium (radial closed form)")
    scen_cmd("social", "social optimum")
    scen_cmd("selfsuff", "self-sufficiency costs")
    scen_cmd("poa", "efficiency ratio and its bound")
    p = scen_cmd("bid", "run the iterative bidding protocol")
    p.add_argument("--eps", type=float, default=None, help="stop tolerance")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--trace", default=None, help="write per-iteration CSV here")
    p = scen_cmd("brlab", "best-response analysis of the unregulated game")
    p.add_argument("--prosumer", type=int, default=None,
                   help="1-based prosumer index to scan")
    p.add_argument("--fix-bids", default=None,
                   help="full bid vector; the scanned slot is ignored")
    p.add_argument("--classify-2bus", action="store_true",
                   help="closed-form regime of the symmetric two-bus game")
    p.add_argument("--verify", default=None, metavar="BIDS",
                   help="check an equilibrium candidate bid vector")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--regulated", action="store_true",
                   help="use regulated payments in scans")
    p.add_argument("--csv", default=None, help="write the scan curve here")
    p = sub.add_parser("gen", help="generate a random radial scenario")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--style", choices=("default", "tight"), default="default")
    p.add_argument("-o", "--output", default=None, help="output path")
    p = sub.add_parser("batch", help="evaluate every scenario in a directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", default=None,
                   help=f"report directory (default $" + OUTPUT_DIR_ENV +
                        " or the scenario directory)")
    return parser


# ---------------------------------------------------------------------------
# command bodies


def _cmd_validate(scenario: Scenario) -> tuple:
    net = scenario.network
    checks = {"prosumer_count": scenario.size, "radial": is_radial(net),
              "slack": net.slack}
    # PTDF against the nodal-equation oracle on deterministic probes
    worst = 0.0
    for i in range(net.bus_count - 1):
        q = np.zeros(net.bus_count)
        q[i], q[-1] = 1.0, -1.0
        worst = max(worst, float(np.abs(
            line_flows(net, q) - dc_flow_oracle(net, -q)).max(initial=0.0)))
    checks["self_sufficiency_feasible"] = bool(
        np.all(np.abs(line_flows(net, np.zeros(net.bus_count)))
               <= net.limits))
    return {"ok": True, **checks}, {"ptdf_oracle_gap": worst}


def _cmd_clear(scenario: Scenario, bids: np.ndarray) -> tuple:
    out = clear_market(scenario, bids)
    results = {
        "prices": out.prices, "quantities": out.quantities, "eta": out.eta,
        "alpha_lower": out.alpha_lower, "alpha_upper": out.alpha_upper,
        "flows": out.flows,
    }
    return results, {"clearing_kkt": clearing_kkt_residual(scenario, bids, out)}


def _cmd_gne(scenario: Scenario) -> tuple:
    eqm = equilibrium.improved_gne(scenario)
    ok, margins = equilibrium.pareto_check(scenario, eqm)
    rent = equilibrium.congestion_rent(scenario, eqm)
    results = {
        "p_bar": eqm.p_bar, "b_bar": eqm.b_bar, "lambda_r": eqm.lambda_r,
        "kappa": eqm.kappa, "tau_lower": eqm.tau_lower,
        "tau_upper": eqm.tau_upper, "costs": eqm.costs,
        "total_disutility": eqm.total_disutility,
        "net_payment": eqm.net_payment, "pareto_ok": ok,
        "pareto_margins": margins,
    }
    residuals = {
        "clearing_price_gap": eqm.clearing_residual,
        "price_structure": equilibrium.price_structure_residual(scenario, eqm),
        "net_payment_vs_rent": abs(eqm.net_payment - rent),
    }
    return results, residuals


def _cmd_ve(scenario: Scenario) -> tuple:
    ve = equilibrium.variational_equilibrium(scenario)
    return ({"p_bar": ve.p_bar, "b_bar": ve.b_bar, "prices": ve.prices,
             "radial": is_radial(scenario.network)}, {})


def _cmd_social(scenario: Scenario) -> tuple:
    so = equilibrium.social_optimum(scenario)
    return ({"p_tilde": so.p_tilde, "kappa": so.kappa,
             "tau_lower": so.tau_lower, "tau_upper": so.tau_upper,
             "costs": so.cost_per_prosumer, "total_cost": so.total_cost}, {})


def _cmd_selfsuff(scenario: Scenario) -> tuple:
    costs, total = equilibrium.self_sufficiency(scenario)
    return {"costs": costs, "total": total}, {}


def _cmd_poa(scenario: Scenario) -> tuple:
    return equilibrium.poa(scenario), {}


def _cmd_bid(scenario: Scenario, args) -> tuple:
    config = bidding.BiddingConfig(epsilon=args.eps, max_iter=args.max_iter)
    eqm = equilibrium.improved_gne(scenario)
    result = bidding.run_bidding(scenario, config)  # may raise MaxIterExceeded
    fejer = bidding.fejer_check(result.trace, eqm)
    if args.trace:
        bidding.write_trace_csv(result.trace, args.trace, eqm=eqm)
    results = {
        "iterations": result.iterations, "production": result.production,
        "bids": result.bids, "prices": result.prices,
        "final_delta": result.final_delta,
        "fejer_monotone": fejer.monotone,
        "gap_to_equilibrium": float(np.abs(result.bids - eqm.b_bar).max()),
    }
    return results, {"fejer_violation": fejer.max_violation}


def _cmd_brlab(scenario: Scenario, args) -> tuple:
    modes = sum([args.classify_2bus, args.verify is not None,
                 args.prosumer is not None])
    if modes != 1:
        raise UsageError(
            "brlab needs exactly one of --prosumer/--fix-bids, "
            "--classify-2bus, or --verify")
    n = scenario.size
    if args.classify_2bus:
        if n != 2 or abs(scenario.a - 1.0) > 1e-12 \
                or np.any(scenario.d != 0.0) or scenario.c[0] != scenario.c[1]:
            raise UsageError(
                "--classify-2bus needs 2 buses, a=1, d=0, equal c")
        limit = float(scenario.network.limits[0])
        cls = brlab.classify_gne_2bus(float(scenario.c[0]),
                                      float(scenario.D[0]),
                                      float(scenario.D[1]), limit)
        results = {"regime": cls.regime, "p_bar": cls.p_bar}
        if cls.regime == "unique":
            results["b_bar"] = cls.b_bar
            results["lam_bar"] = cls.lam_bar
        else:
            results["b2_interval"] = list(cls.b2_interval)
        return results, {}
    if args.verify is not None:
        b = _parse_vector(args.verify, n, "--verify bids")
        check = brlab.verify_gne(scenario, b, tol=args.tol,
                                 regulated=args.regulated)
        return ({"is_gne": check.is_gne, "gaps": check.gaps,
                 "incumbent_costs": check.incumbent_costs,
                 "best_bids": check.best_bids, "tol": check.tol}, {})
    if args.fix_bids is None:
        raise UsageError("--prosumer requires --fix-bids")
    if not 1 <= args.prosumer <= n:
        raise UsageError(f"--prosumer must be in 1..{n}")
    i = args.prosumer - 1
    b = _parse_vector(args.fix_bids, n, "--fix-bids")
    scan = brlab.best_response(scenario, i, np.delete(b, i),
                               regulated=args.regulated)
    if args.csv:
        brlab.write_scan_csv(scan, args.csv)
    return ({"prosumer": args.prosumer, "interval": list(scan.interval),
             "local_minima": [list(mc) for mc in scan.local_minima],
             "best_bid": scan.best_bid, "best_cost": scan.best_cost,
             "regulated": scan.regulated}, {})


def _output_dir(explicit: str | None, fallback: str) -> str:
    return explicit or os.environ.get(OUTPUT_DIR_ENV) or fallback


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _cmd_gen(args, fmt: str) -> tuple:
    scenario = gen_scenario(args.seed, args.size, style=args.style)
    out_dir = _output_dir(None, os.getcwd())
    path = args.output or os.path.join(
        out_dir, f"generated_seed{args.seed}_size{args.size}.json")
    dump_scenario(scenario, path, units="unspecified",
                  labels={"name": scenario.label})
    report = RunReport(command="gen", scenario=path, digest=_digest(path),
                       elapsed_s=0.0,
                       results={"path": path, "size": args.size,
                                "seed": args.seed, "style": args.style,
                                "a": scenario.a,
                                "radial": is_radial(scenario.network)},
                       residuals={})
    return report, 0


def _cmd_batch(args, fmt: str) -> tuple:
    directory = args.dir
    if not os.path.isdir(directory):
        raise FileError(f"not a directory: {directory}")
    out_dir = _output_dir(args.out, directory)
    os.makedirs(out_dir, exist_ok=True)
    names = sorted(f for f in os.listdir(directory)
                   if f.endswith(".json") and not f.endswith(".report.json"))
    summary = {}
    failures = 0
    for name in names:
        path = os.path.join(directory, name)
        started = time.perf_counter()
        try:
            scenario = load_scenario(path)
            results, residuals = _cmd_gne(scenario)
            poa_results, _ = _cmd_poa(scenario)
            results["poa"] = poa_results
            report = RunReport(
                command="batch/gne", scenario=path, digest=_digest(path),
                elapsed_s=time.perf_counter() - started, results=results,
                residuals=residuals)
            out_path = os.path.join(
                out_dir, name[:-len(".json")] + ".report.json")
            _atomic_write(out_path, render_report(report, "json") + "\n")
            summary[name] = "ok"
        except EsharingError as exc:
            summary[name] = f"error: {exc}"
            failures += 1
    report = RunReport(command="batch", scenario=directory, digest=None,
                       elapsed_s=0.0,
                       results={"evaluated": len(names), "failures": failures,
                                "files": summary, "out_dir": out_dir},
                       residuals={})
    return report, (1 if failures else 0)


def run_command(argv) -> tuple:
    """Execute one CLI invocation.  Returns ``(RunReport | None, exit_code)``."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "gen":
            return _cmd_gen(args, args.format)
        if args.command == "batch":
            return _cmd_batch(args, args.format)

        path = args.scenario
        scenario = load_scenario(path)
        started = time.perf_counter()
        if args.command == "validate":
            results, residuals = _cmd_validate(scenario)
        elif args.command == "clear":
            bids = _parse_vector(args.bids, scenario.size, "--bids")
            results, residuals = _cmd_clear(scenario, bids)
        elif args.command == "gne":
            results, residuals = _cmd_gne(scenario)
        elif args.command == "ve":
            results, residuals = _cmd_ve(scenario)
        elif args.command == "social":
            results, residuals = _cmd_social(scenario)
        elif args.command == "selfsuff":
            results, residuals = _cmd_selfsuff(scenario)
        elif args.command == "poa":
            results, residuals = _cmd_poa(scenario)
        elif args.command == "bid":
            results, residuals = _cmd_bid(scenario, args)
        elif args.command == "brlab":
            results, residuals = _cmd_brlab(scenario, args)
        else:  # pragma: no cover - argparse enforces the choices
            raise UsageError(f"unknown command {args.command}")
        report = RunReport(command=args.command, scenario=path,
                           digest=_digest(path),
                           elapsed_s=time.perf_counter() - started,
                           results=results, residuals=residuals)
        return report, 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return None, 1
    except FileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, 1
    except MaxIterExceeded as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return None, 3
    except IterationLimit as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return None, 3
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return None, 2
    except EsharingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, 1


def main(argv=None) -> int:
    report, code = run_command(sys.argv[1:] if argv is None else argv)
    if report is not None:
        fmt = "json"
        source = sys.argv[1:] if argv is None else argv
        if "--format" in source:
            fmt = source[source.index("--format") + 1]
        print(render_report(report, fmt))
    return code


if __name__ == "__main__":
    sys.exit(main())
