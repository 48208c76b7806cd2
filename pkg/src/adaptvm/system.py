"""Assembles a VM with profiling, optimizer, replacer and manager from one config."""
from __future__ import annotations

import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .ir import parse_transport
from .loader import load_module
from .manager import Extension, ManagerConfig, RunResult, SystemManager, build_report, format_outputs
from .optimizer import DEFAULT_PHASES, OptimizationManager, standard_phases
from .profiling import BlockProfiler, PathProfiler, ProfilingManager, SamplingProfiler
from .replacer import Replacer
from .similarity import SimilarityParams
from .vm import VM

PROFILERS = ("sampling", "path", "block")
WORKLOADS = Path(__file__).parent / "workloads"


@dataclass
class RunConfig:
    workload: str = ""
    calls: list[tuple[str, tuple]] = field(default_factory=list)
    phases: tuple[str, ...] = DEFAULT_PHASES
    profilers: tuple[str, ...] = ("sampling",)
    c: float = 100.0
    k: int = 8
    age_sleep: int = 1_000_000
    sim_sleep: int = 100_000
    gate: float = 0.05
    seed: int = 0
    sample_period: int = 997
    mode: str = "single"
    extensions: list[str] = field(default_factory=list)  # "PATH@TRIGGER"

    def validate(self) -> None:
        bad = set(self.profilers) - set(PROFILERS)
        if bad:
            raise ValueError(f"unknown profilers: {sorted(bad)}")
        bad = set(self.phases) - set(DEFAULT_PHASES)
        if bad:
            raise ValueError(f"unknown phases: {sorted(bad)}")
        if self.mode not in ("single", "background"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.sample_period < 0:
            raise ValueError("sample period must be non-negative")
        SimilarityParams(self.c, self.k)
        ManagerConfig(self.age_sleep, self.sim_sleep, self.gate)

    def public(self) -> dict:
        d = asdict(self)
        d["calls"] = [[p, list(a)] for p, a in self.calls]
        d["phases"] = list(self.phases)
        d["profilers"] = list(self.profilers)
        return d


def resolve_path(path: str) -> Path:
    """A file path, or the name of a bundled workload."""
    p = Path(path)
    if p.exists():
        return p
    q = WORKLOADS / path
    if q.exists():
        return q
    q = WORKLOADS / f"{path}.tm"
    if q.exists():
        return q
    raise FileNotFoundError(path)


@dataclass
class System:
    vm: VM
    profiling: ProfilingManager
    optimizer: OptimizationManager
    replacer: Replacer
    manager: SystemManager
    config: RunConfig

    def run(self) -> RunResult:
        cfg = self.config
        calls = cfg.calls
        if not calls:
            entry = [n for n, p in self.vm.transport.items() if p.entry]
            if not entry:
                raise ValueError("workload has no entry procedure and no --call given")
            calls = [(entry[0], ())]
        exts = []
        for ext_arg in cfg.extensions:
            path, _, trig = ext_arg.rpartition("@")
            if not path:
                raise ValueError(f"extension argument {ext_arg!r} needs PATH@TRIGGER")
            module = parse_transport(resolve_path(path).read_text())
            exts.append(Extension(path, module, **Extension.parse_trigger(trig)))
        return self.manager.run(calls, exts, mode=cfg.mode)

    def report(self, result: RunResult) -> dict:
        return build_report(self.vm, self.manager, result, self.config.public())

    def output(self, result: RunResult) -> list[str]:
        return format_outputs(self.vm, result)


def build_system(cfg: RunConfig, source: str | None = None, kernel_impl=None) -> System:
    cfg.validate()
    period = cfg.sample_period if "sampling" in cfg.profilers else 0
    offset = random.Random(cfg.seed).randint(1, period) if period else None
    vm = VM(sample_period=period, sample_offset=offset, kernel_impl=kernel_impl)
    params = SimilarityParams(cfg.c, cfg.k)
    profiling = ProfilingManager(params)
    path = None
    for name in PROFILERS:
        if name not in cfg.profilers:
            continue
        if name == "sampling":
            profiling.register_component(SamplingProfiler(vm))
        elif name == "path":
            path = PathProfiler(vm, auto=True)
            profiling.register_component(path)
        else:
            profiling.register_component(BlockProfiler())
    optimizer = OptimizationManager(vm, profiling)
    replacer = Replacer(vm, optimizer)
    optimizer.replacer = replacer
    for phase in standard_phases(cfg.phases, profiler=path):
        optimizer.register_phase(phase)
    manager = SystemManager(vm, profiling, optimizer, replacer,
                            ManagerConfig(cfg.age_sleep, cfg.sim_sleep, cfg.gate))
    text = source if source is not None else resolve_path(cfg.workload).read_text()
    load_module(parse_transport(text), vm)
    return System(vm, profiling, optimizer, replacer, manager, cfg)
