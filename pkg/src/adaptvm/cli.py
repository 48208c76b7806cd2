"""Command-line harness.

Subcommands::

    adaptvm run WORKLOAD [options]     run a transport program under the adaptive system
    adaptvm sim FILE [--c C --k K]     evaluate the similarity measure on vector pairs
    adaptvm explain REPORT.json        summarize a run report

Exit codes: 0 success, 1 workload trap, 2 usage or configuration error,
3 an ``--assert`` expression failed.

Run report schema (``--report``, JSON object; ``--report-text`` writes the same
records as ``key=value`` lines):

    version        int, currently 1
    config         effective RunConfig fields
    clock          final virtual clock
    output         program output lines (also printed to stdout)
    trap           trap message or null
    stats          {proc: {invocations, self, inclusive}} in virtual-clock units
    swaps          [{proc, old, new, clock, globals, store, frames}]
    optimizations  [{clock, proc, estimate, applied, new, declined, failed, skipped, swapped, ...}]
    measurements   [{clock, proc, speedup, phases, old_mean, new_mean}]
    invalidations  [{clock, global, procs, keys}]
    history        {proc: [{phase, status, last_speedup, count, detail}]}
    manager        {ticks, ages, similarity_checks, final_sleep, errors}
    similarity     {proc: last S value}
    warnings       [text]

Vector file format for ``sim``: one pair per line, ``OLD ; NEW``, each a list of
integers separated by commas or spaces. Blank lines and ``#`` comments are ignored.
"""
from __future__ import annotations

import argparse
import json
import operator
import re
import sys
from pathlib import Path

from . import similarity as sim
from .ir import TransportError
from .system import RunConfig, build_system

EXIT_OK, EXIT_TRAP, EXIT_CONFIG, EXIT_ASSERT = 0, 1, 2, 3

_OPS = {"==": operator.eq, "!=": operator.ne, ">=": operator.ge, "<=": operator.le,
        ">": operator.gt, "<": operator.lt}
_ASSERT = re.compile(r"^\s*([\w.]+)\s*(==|!=|>=|<=|>|<)\s*(-?\d+(?:\.\d+)?)\s*$")


class ConfigError(Exception):
    pass


# -- argument handling -----------------------------------------------------------


def _csv(text: str) -> tuple[str, ...]:
    text = text.strip()
    if text in ("", "none"):
        return ()
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _parse_call(text: str) -> tuple[str, tuple[int, ...]]:
    name, _, rest = text.partition(":")
    args = tuple(int(a) for a in rest.split(",") if a.strip()) if rest else ()
    return name, args


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adaptvm", description="Adaptive optimization VM harness.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a workload")
    r.add_argument("workload", nargs="?", help="transport file or bundled workload name")
    r.add_argument("--config", help="JSON file of RunConfig fields; flags override it")
    r.add_argument("--call", action="append", default=None, metavar="NAME[:A,B]",
                   help="top-level call (repeatable); default is the entry procedure")
    r.add_argument("--phases", help="comma list of optimization phases, or 'none'")
    r.add_argument("--profilers", help="comma list from sampling,path,block, or 'none'")
    r.add_argument("--c", type=float)
    r.add_argument("--k", type=int)
    r.add_argument("--age-sleep", type=int)
    r.add_argument("--sim-sleep", type=int)
    r.add_argument("--gate", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--sample-period", type=int)
    r.add_argument("--mode", choices=("single", "background"))
    r.add_argument("--load-extension", action="append", default=None, metavar="PATH@TRIGGER",
                   help="TRIGGER is a clock tick or NAME>=N on an integer global")
    r.add_argument("--kernel", choices=("auto", "cython", "python"), default="auto")
    r.add_argument("--trace", metavar="OUT", help="write the event trace")
    r.add_argument("--expect-trace", metavar="FILE", help="fail unless the trace matches FILE")
    r.add_argument("--report", metavar="OUT", help="write the JSON run report")
    r.add_argument("--report-text", metavar="OUT", help="write the report as key=value lines")
    r.add_argument("--profile-dump", metavar="OUT")
    r.add_argument("--history-dump", metavar="OUT")
    r.add_argument("--assert", dest="asserts", action="append", default=[], metavar="EXPR",
                   help="e.g. 'swaps>=1' or 'stats.main.invocations==1'")
    r.add_argument("--quiet", action="store_true", help="do not print program output")

    s = sub.add_parser("sim", help="evaluate S on vector pairs")
    s.add_argument("vectors")
    s.add_argument("--c", type=float, default=sim.DEFAULT.c)
    s.add_argument("--k", type=int, default=sim.DEFAULT.k)

    e = sub.add_parser("explain", help="summarize a JSON run report")
    e.add_argument("report")
    return p


_FLAG_FIELDS = ("c", "k", "age_sleep", "sim_sleep", "gate", "seed", "sample_period", "mode")


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    fields: dict = {}
    if ns.config:
        try:
            data = json.loads(Path(ns.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {ns.config}: {exc}") from exc
        known = set(RunConfig.__dataclass_fields__)
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown config keys: {sorted(bad)}")
        fields.update(data)
        if "calls" in fields:
            fields["calls"] = [(c[0], tuple(c[1])) if isinstance(c, list) else _parse_call(c)
                               for c in fields["calls"]]
        for key in ("phases", "profilers"):
            if isinstance(fields.get(key), str):
                fields[key] = _csv(fields[key])
            elif key in fields:
                fields[key] = tuple(fields[key])
    if ns.workload:
        fields["workload"] = ns.workload
    if ns.call is not None:
        fields["calls"] = [_parse_call(c) for c in ns.call]
    if ns.phases is not None:
        fields["phases"] = _csv(ns.phases)
    if ns.profilers is not None:
        fields["profilers"] = _csv(ns.profilers)
    for f in _FLAG_FIELDS:
        v = getattr(ns, f)
        if v is not None:
            fields[f] = v
    if ns.load_extension is not None:
        fields["extensions"] = list(ns.load_extension)
    if not fields.get("workload"):
        raise ConfigError("no workload given")
    cfg = RunConfig(**fields)
    if ns.expect_trace and cfg.mode != "single":
        raise ConfigError("--expect-trace requires --mode single")
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# -- reports ----------------------------------------------------------------------


def lookup(report: dict, key: str):
    """Resolve a dotted key; lists yield their length, null yields 0."""
    cur = report
    for part in key.split("."):
        if isinstance(cur, dict) and part in cur:
            cur = cur[part]
        else:
            raise KeyError(key)
    if isinstance(cur, (list, dict)):
        return len(cur)
    if cur is None:
        return 0
    if isinstance(cur, bool):
        return int(cur)
    if isinstance(cur, str):
        return 1
    return cur


def check_assert(report: dict, expr: str) -> tuple[bool, str]:
    m = _ASSERT.match(expr)
    if not m:
        raise ConfigError(f"bad --assert expression {expr!r}")
    key, op, rhs = m.groups()
    try:
        lhs = lookup(report, key)
    except KeyError:
        raise ConfigError(f"--assert: unknown report key {key!r}") from None
    rhs_v = float(rhs) if "." in rhs else int(rhs)
    ok = _OPS[op](lhs, rhs_v)
    return ok, f"assert {expr.strip()}: {lhs} -> {'ok' if ok else 'FAILED'}"


def report_lines(report: dict, prefix: str = "") -> list[str]:
    """Flatten the report into deterministic ``key=value`` records."""
    lines = []
    if isinstance(report, dict):
        for k, v in report.items():
            lines.extend(report_lines(v, f"{prefix}{k}."))
    elif isinstance(report, (list, tuple)):
        if not report:
            lines.append(f"{prefix[:-1]}=[]")
        for i, v in enumerate(report):
            lines.extend(report_lines(v, f"{prefix}{i}."))
    else:
        lines.append(f"{prefix[:-1]}={json.dumps(report)}")
    return lines


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=False) + "\n"


def _write(path: str, lines) -> None:
    text = lines if isinstance(lines, str) else "".join(f"{x}\n" for x in lines)
    Path(path).write_text(text)


# -- commands ---------------------------------------------------------------------


def _kernel(choice: str):
    from . import kernel
    if choice == "python":
        return kernel.pure
    if choice == "cython":
        if kernel.compiled is None:
            raise ConfigError("compiled kernel is not available")
        return kernel.compiled
    return None


def cmd_run(ns: argparse.Namespace, out=None) -> int:
    out = out or sys.stdout
    cfg = config_from_args(ns)
    try:
        system = build_system(cfg, kernel_impl=_kernel(ns.kernel))
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {exc}") from exc
    except TransportError as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    try:
        result = system.run()
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {exc}") from exc
    report = system.report(result)
    if not ns.quiet:
        for line in report["output"]:
            print(line, file=out)
    if ns.trace:
        _write(ns.trace, system.vm.trace)
    if ns.report:
        _write(ns.report, dumps_report(report))
    if ns.report_text:
        _write(ns.report_text, report_lines(report))
    if ns.profile_dump:
        _write(ns.profile_dump, system.profiling.dump())
    if ns.history_dump:
        _write(ns.history_dump, system.optimizer.history.dump())
    status = EXIT_TRAP if result.trap else EXIT_OK
    if ns.expect_trace:
        expected = Path(ns.expect_trace).read_text().splitlines()
        if expected != system.vm.trace:
            print("trace differs from expected", file=sys.stderr)
            status = max(status, EXIT_ASSERT)
    for expr in ns.asserts:
        ok, msg = check_assert(report, expr)
        print(msg, file=sys.stderr)
        if not ok:
            status = EXIT_ASSERT
    return status


def parse_vectors(text: str) -> list[tuple[list[int], list[int]]]:
    pairs = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.count(";") != 1:
            raise ConfigError(f"line {n}: expected 'OLD ; NEW'")
        try:
            old, new = ([int(t) for t in re.split(r"[,\s]+", side.strip()) if t]
                        for side in line.split(";"))
        except ValueError:
            raise ConfigError(f"line {n}: vectors must hold integers") from None
        if len(old) != len(new):
            raise ConfigError(f"line {n}: vectors differ in length ({len(old)} vs {len(new)})")
        pairs.append((old, new))
    return pairs


def cmd_sim(ns: argparse.Namespace, out=None) -> int:
    out = out or sys.stdout
    try:
        params = sim.SimilarityParams(ns.c, ns.k)
        text = Path(ns.vectors).read_text()
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    for old, new in parse_vectors(text):
        a, b = sim.pad(old, new)
        s = sim.similarity(a, b, params)
        if a == b:
            verdict = "stable"
        elif sim.needs_reoptimization(s, params):
            verdict = "reoptimize"
        else:
            verdict = "no reoptimization"
        print(f"old={a} new={b} alpha={sim.alpha(a, b):.6f} beta={sim.beta(a, b):.6f} "
              f"S={s:.6f} {verdict}", file=out)
    return EXIT_OK


def explain(report: dict) -> list[str]:
    for key in ("version", "optimizations", "swaps"):
        if key not in report:
            raise ConfigError(f"not a run report: missing {key!r}")
    lines = []
    opts = report.get("optimizations", [])
    events = []
    for o in opts:
        state = "swapped" if o.get("swapped") else ("unchanged" if o.get("unchanged") else "pending")
        events.append((o["clock"], 0, f"{o['clock']:>10} optimize {o['proc']} estimate={o['estimate']:.4f} "
                                      f"phases={','.join(o['applied']) or '-'} new={','.join(o['new']) or '-'} {state}"))
    for m in report.get("measurements", []):
        events.append((m["clock"], 1, f"{m['clock']:>10} measured {m['proc']} speedup={m['speedup']:+.4f} "
                                      f"credited to {','.join(m['phases'])}"))
    for inv in report.get("invalidations", []):
        events.append((inv["clock"], 2, f"{inv['clock']:>10} de-optimization: global {inv['global']} overwritten, "
                                        f"recompiled {','.join(inv['procs'])}"))
    if not events:
        lines.append("no optimizations performed")
    else:
        for proc in sorted({o["proc"] for o in opts} | {i for inv in report.get("invalidations", [])
                                                         for i in inv["procs"]}):
            lines.append(f"{proc}:")
            for _, _, text in sorted(e for e in events if _mentions(e[2], proc)):
                lines.append(f"  {text.strip()}")
    lines.append(f"swaps={len(report['swaps'])} clock={report.get('clock')} trap={report.get('trap')}")
    return lines


def _mentions(text: str, proc: str) -> bool:
    words = re.split(r"[\s,=]+", text)
    return proc in words


def cmd_explain(ns: argparse.Namespace, out=None) -> int:
    out = out or sys.stdout
    try:
        report = json.loads(Path(ns.report).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read report: {exc}") from exc
    if not isinstance(report, dict):
        raise ConfigError("not a run report")
    for line in explain(report):
        print(line, file=out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    handler = {"run": cmd_run, "sim": cmd_sim, "explain": cmd_explain}[ns.command]
    try:
        return handler(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
