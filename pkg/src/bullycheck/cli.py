"""Command-line entry point.

Exit codes: 0 proved/holds (or a completed simulation), 1 refuted,
2 configuration or usage error, 3 inconclusive.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .abstract import (
    FULL_STACK,
    Assumption,
    Guarantee,
    compose_correctness,
    concrete_scaling_run,
    prove_guarantee,
    DISCHARGE_CHAIN,
)
from .direct import ExploreConfig, verify_direct
from .drift import DriftSpec, lemma2_closed_form, verify_lemma2, verify_p3
from .simulator import (
    ConfigError,
    MaxTime,
    MinActivations,
    check_property_p,
    load_config,
    load_jitter_table,
    simulate,
)
from .timebase import TABLE1, TimingConstants, format_rat, parse_rat

EXIT = {"proved": 0, "holds": 0, "refuted": 1, "violated": 1, "error": 2, "inconclusive": 3}


@dataclass
class RunReport:
    command: str
    config: dict
    verdict: str
    details: dict = field(default_factory=dict)
    wall_clock_ms: int = 0
    exit_code: int | None = None

    def to_json(self) -> str:
        body = {
            "command": self.command,
            "config": self.config,
            "verdict": self.verdict,
            "details": self.details,
            "wall_clock_ms": self.wall_clock_ms,
        }
        return json.dumps(body, indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"command: {self.command}", f"verdict: {self.verdict}"]
        for key in sorted(self.details):
            if key == "verdict":
                continue
            value = self.details[key]
            if isinstance(value, (dict, list)):
                value = json.dumps(value, sort_keys=True)
            lines.append(f"{key}: {value}")
        lines.append(f"wall_clock_ms: {self.wall_clock_ms}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument helpers


def _constants(path: str | None) -> TimingConstants:
    if path is None:
        return TABLE1
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"constants: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"constants: invalid JSON: {exc}") from None
    if isinstance(data, dict) and "constants" in data:
        data = data["constants"]
    try:
        return TimingConstants.from_json(data)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc) if str(exc).startswith("constants") else f"constants: {exc}") from None


def _bounds(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--drift-bounds: expected 'lo,hi', got {text!r}") from None
    if not lo <= 0 <= hi:
        raise ConfigError("--drift-bounds: need lo <= 0 <= hi")
    return lo, hi


def _assumptions(text: str | None):
    if text is None:
        return None
    items = [x.strip().lower() for x in text.split(",") if x.strip()]
    try:
        return frozenset(Assumption(x) for x in items)
    except ValueError:
        raise ConfigError(f"--assume: expected a subset of clean,p1,p2,p3, got {text!r}") from None


def _horizon(text: str):
    key, _, value = text.partition("=")
    try:
        if key == "time":
            return MaxTime(parse_rat(value))
        if key == "min-activations":
            return MinActivations(int(value))
    except ValueError:
        pass
    raise ConfigError(f"--horizon: expected time=<t> or min-activations=<n>, got {text!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> RunReport:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        cfg = replace(cfg, seed=args.seed)
    if args.horizon is not None:
        cfg = replace(cfg, horizon=_horizon(args.horizon))
    table = load_jitter_table(args.jitter_table) if args.jitter_table else None
    trace = simulate(cfg, table)
    if args.trace_out:
        trace.write(args.trace_out)
    check = check_property_p(trace.final)
    details = {
        "events": len(trace.events),
        "end_time": format_rat(trace.final.now),
        "property_p": check.status,
        "activations": {str(n.id): c for n, c in zip(cfg.nodes, trace.final.activation_count)},
        "final_states": {str(core.id): core.state.value for core in trace.final.cores},
    }
    if check.offenders:
        details["offenders"] = list(check.offenders)
    if args.trace_out:
        details["trace_file"] = str(args.trace_out)
    return RunReport("simulate", cfg.to_json(), check.status, details, exit_code=0)


def _verify_config(args, tc: TimingConstants) -> dict:
    keep = {
        "drift": ("max_activations", "drift_bounds", "observe"),
        "lemma2": ("reads_every", "probe_depth", "max_activations"),
        "direct": ("nodes", "depth", "engine", "time_budget"),
        "abstract": ("nodes", "depth", "assume", "prove", "scaling_p"),
    }[args.engine_kind]
    echo = {k: getattr(args, k) for k in keep if getattr(args, k, None) is not None}
    echo["constants"] = tc.to_json()
    return echo


def cmd_verify(args) -> RunReport:
    tc = _constants(args.constants)
    echo = _verify_config(args, tc)
    kind = args.engine_kind
    if kind == "drift":
        lo, hi = _bounds(args.drift_bounds)
        spec = DriftSpec(tc, args.max_activations, lo, hi, observe=args.observe)
        v = verify_p3(spec, jobs=args.jobs)
        return RunReport("verify drift", echo, v.status, v.to_json())
    if kind == "lemma2":
        probe = args.probe_depth if args.probe_depth is not None else args.max_activations
        v = verify_lemma2(tc, args.reads_every, probe, jobs=args.jobs)
        details = v.to_json()
        details["closed_form_holds"] = lemma2_closed_form(tc, args.reads_every)
        return RunReport("verify lemma2", echo, v.status, details)
    if kind == "direct":
        cfg = ExploreConfig(
            p=args.nodes,
            constants=tc,
            max_activations_per_node=args.depth if args.depth is not None else 10,
            timing=args.engine,
            time_budget_s=args.time_budget,
        )
        r = verify_direct(cfg)
        return RunReport("verify direct", echo, r.status, r.to_json())
    return _verify_abstract(args, echo)


def _verify_abstract(args, echo: dict) -> RunReport:
    depth = args.depth if args.depth is not None else 8
    chosen = _assumptions(args.assume)
    target = args.prove
    plan = {
        "p1": [(Guarantee.P1, frozenset({Assumption.CLEAN}))],
        "p2": [(Guarantee.P2, frozenset({Assumption.CLEAN}))],
        "p4": [(Guarantee.P4, FULL_STACK)],
        "P": [(Guarantee.P1, frozenset({Assumption.CLEAN})), (Guarantee.P4, FULL_STACK)],
    }[target]
    if chosen is not None:
        plan = [(g, chosen) for g, _ in plan]
    results = []
    for g, assumptions in plan:
        if args.scaling_p is not None:
            if args.scaling_p < 2:
                raise ConfigError("--scaling-p: must be >= 2")
            (res,) = concrete_scaling_run(args.scaling_p, assumptions, depth, [g])
        else:
            if depth < 4:
                raise ConfigError("--depth: must be >= 4")
            res = prove_guarantee(g, assumptions, args.nodes, depth)
        results.append(res)
    details = {"results": [r.to_json() for r in results]}
    if target == "P":
        comp = compose_correctness(results[0].status, results[1].status)
        details["composition"] = comp.to_json()
        details["discharge"] = DISCHARGE_CHAIN
        verdict = comp.status if comp.status == "proved" else "refuted"
        if any(r.status == "inconclusive" for r in results):
            verdict = "inconclusive"
    else:
        verdict = results[0].status
    return RunReport("verify abstract", echo, verdict, details)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bullycheck", description="Simulate and verify periodic bully-style leader election.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--format", choices=("human", "json"), default="human")

    sim = sub.add_parser("simulate", parents=[fmt], help="run the discrete-event simulator")
    sim.add_argument("--config", required=True)
    sim.add_argument("--jitter-table")
    sim.add_argument("--trace-out")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--horizon", help="time=<t> or min-activations=<n>; overrides the config")
    sim.set_defaults(func=cmd_simulate)

    ver = sub.add_parser("verify", help="run a verification engine")
    ver.add_argument("engine_kind", choices=("direct", "drift", "lemma2", "abstract"))
    ver.add_argument("--format", choices=("human", "json"), default="human")
    ver.add_argument("--constants", help="JSON file with period_min/period_max/jitter_min/jitter_max")
    ver.add_argument("--nodes", type=int, default=3)
    ver.add_argument("--depth", type=int)
    ver.add_argument("--max-activations", type=int, default=13)
    ver.add_argument("--drift-bounds", default="-2,1", help="lo,hi (write --drift-bounds=-2,1)")
    ver.add_argument("--observe", choices=("activation", "any"), default="activation")
    ver.add_argument("--reads-every", type=int, default=2)
    ver.add_argument("--probe-depth", type=int)
    ver.add_argument("--assume")
    ver.add_argument("--prove", choices=("p1", "p2", "p4", "P"), default="P")
    ver.add_argument("--scaling-p", type=int)
    ver.add_argument("--engine", choices=("dbm", "parametric"), default="dbm")
    ver.add_argument("--time-budget", type=float, default=3600.0, help="seconds, direct engine only")
    ver.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        report = args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report.wall_clock_ms = int((time.perf_counter() - t0) * 1000)
    print(report.to_json() if args.format == "json" else report.to_text())
    return report.exit_code if report.exit_code is not None else EXIT.get(report.verdict, 2)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
