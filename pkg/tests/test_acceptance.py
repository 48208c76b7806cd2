"""Acceptance criteria 1-10. Each test carries an ``acceptance`` marker; the
terminal summary prints one PASS/FAIL line per criterion."""
from __future__ import annotations

import json

import pytest

from adaptvm import cli
from adaptvm import similarity as sim
from adaptvm.ir import BUILD_COUNTER, parse_transport
from adaptvm.manager import ManagerConfig, SystemManager
from adaptvm.optimizer import ConstantFolding, OptimizationManager, OptimizationPhase
from adaptvm.optimizer.phases import CommonSubexpressionElimination, DeadCodeElimination
from adaptvm.profiling import REGISTER, BlockCntMsg, PathCntMsg, ProfilingManager
from adaptvm.replacer import Replacer, ReplaceRefused, TranslationTuple
from adaptvm.system import RunConfig, build_system
from adaptvm.vm import VM
from corpus import CORPUS, INPUTS
from helpers import Rig, block_counts, outcome, plain_vm, random_inputs
from progen import generate, random_args


# -- 1: similarity ------------------------------------------------------------------

@pytest.mark.acceptance(1, "similarity suite")
def test_similarity_identical_vectors_exactly_one():
    for v in ([0], [0, 0], [0, 0, 0, 0], [1], [7, 3], [1000, 0, 5], [10**9, 1, 2, 3]):
        assert sim.similarity(v, v) == 1.0
        assert sim.padded_similarity(v, v) == 1.0


@pytest.mark.acceptance(1, "similarity suite")
def test_similarity_two_path_example_is_not_a_reoptimization():
    a, b = sim.pad([1, 1], [2, 1])
    assert (a, b) == ([1, 1, 2], [2, 1, 2])
    s = sim.similarity(a, b, sim.SimilarityParams(c=100, k=8))
    assert s >= 0.95
    assert not sim.needs_reoptimization(s)


@pytest.mark.acceptance(1, "similarity suite")
def test_similarity_dimension_one_unpadded_is_one_and_padding_fixes_it():
    for x, y in [(1, 1), (1, 1000), (1000, 1), (3, 5), (10**6, 2), (0.5, 7.25)]:
        assert sim.similarity([x], [y]) == 1.0
    s = sim.padded_similarity([1], [1000], sim.SimilarityParams(c=100, k=8))
    assert s < 0.95


@pytest.mark.acceptance(1, "similarity suite")
def test_similarity_monotone_in_beta_for_fixed_alpha():
    params = sim.SimilarityParams(c=100, k=8)
    betas = [i * 3.0 for i in range(100)]  # 100-point grid across the turning point
    for al in (0.0, 0.25, 0.5, 0.9, 0.999):
        values = [sim.combine(al, b, params) for b in betas]
        for lo, hi in zip(values, values[1:]):
            assert hi <= lo + 1e-12


# -- 2: estimate ------------------------------------------------------------------------

class _Prior(OptimizationPhase):
    def __init__(self, name, prior, placement=("last",)):
        self.name, self.prior, self.placement = name, prior, placement

    def optimize(self, ir, ctx):
        return None


def _estimator(text="module m\nproc p nparams 0 entry\nblock b\n  r = const 1\n  ret r\n"):
    vm = plain_vm(text)
    om = OptimizationManager(vm, ProfilingManager())
    om.register_phase(CommonSubexpressionElimination())
    om.register_phase(_Prior("prefetch", 0.05))
    return om


@pytest.mark.acceptance(2, "estimate suite")
def test_estimate_fresh_procedure_is_prior_sum():
    om = _estimator()
    assert CommonSubexpressionElimination.prior == 0.20
    assert om.estimate("p") == pytest.approx(0.25, abs=1e-12)


@pytest.mark.acceptance(2, "estimate suite")
def test_estimate_zero_when_everything_applied_and_partial_otherwise():
    om = _estimator()
    om.history.record_applied("p", "cse", None)
    assert om.estimate("p") == pytest.approx(0.05, abs=1e-12)
    om.history.record_applied("p", "prefetch", None)
    assert om.estimate("p") == 0.0


@pytest.mark.acceptance(2, "estimate suite")
def test_estimate_builds_no_ir():
    om = _estimator()
    before = BUILD_COUNTER["builds"]
    for _ in range(5):
        om.estimate("p")
    assert BUILD_COUNTER["builds"] == before
    om.optimize("p")
    assert BUILD_COUNTER["builds"] == before + 1


# -- 3: manager loop --------------------------------------------------------------------------

def _idle_manager(age_sleep=64):
    vm = plain_vm("module m\nproc p nparams 0 entry\nblock b\n  r = const 1\n  ret r\n")
    prof = ProfilingManager()
    om = OptimizationManager(vm, prof)
    rep = Replacer(vm, om)
    om.replacer = rep
    return vm, SystemManager(vm, prof, om, rep, ManagerConfig(age_sleep=age_sleep, sim_sleep=32))


@pytest.mark.acceptance(3, "manager loop behavior")
def test_idle_sleep_sequence_doubles_to_cap():
    vm, mgr = _idle_manager(age_sleep=64)
    seen = []
    for n in range(1, 12):
        vm.clock = mgr.next_wake
        assert mgr.tick() in ([], ["age"])
        seen.append(mgr.sleep)
        assert mgr.sleep == min(2 ** n, 64)
    assert seen == [2, 4, 8, 16, 32, 64, 64, 64, 64, 64, 64]


def _recording(system):
    ticks = []
    orig = system.manager.tick

    def tick():
        actions = orig()
        ticks.append((actions, system.manager.sleep))
        return actions

    system.manager.tick = tick
    return ticks


@pytest.mark.acceptance(3, "manager loop behavior")
def test_sleep_resets_after_optimization_and_doubles_when_idle():
    s = build_system(RunConfig(workload="hotloop"))
    ticks = _recording(s)
    s.run()
    assert any(any(a.startswith("optimize") for a in acts) for acts, _ in ticks)
    prev = s.manager.config.initial_sleep
    for acts, sleep in ticks:
        if any(a.startswith("optimize") for a in acts):
            assert sleep == 1
        else:
            assert sleep == min(prev * 2, s.manager.config.age_sleep)
        prev = sleep
    assert all(o["estimate"] > 0.05 for o in s.manager.optimizations)


@pytest.mark.acceptance(3, "manager loop behavior")
@pytest.mark.parametrize("prior", [0.03, 0.05])
def test_no_optimization_at_or_below_gate(prior):
    s = build_system(RunConfig(workload="hotloop", phases=()))
    s.optimizer.register_phase(_Prior("lowgain", prior))
    ticks = _recording(s)
    s.run()
    assert s.manager.sim_checks > 0
    assert s.manager.optimizations == []
    assert not any(any(a.startswith(("optimize", "enqueue")) for a in acts) for acts, _ in ticks)


# -- 4: oracle equivalence ------------------------------------------------------------------

FUZZ_SEEDS = range(6)


def _equivalence_cases():
    cases = [("corpus", CORPUS, INPUTS)]
    for seed in FUZZ_SEEDS:
        text, arities = generate(seed)
        cases.append((f"fuzz{seed}", text, {p: (n, None, None) for p, n in arities.items()}))
    return cases


def _inputs(seed, shape, n):
    arity, lo, hi = shape
    if lo is None:
        import random
        rng = random.Random(seed)
        return [random_args(rng, arity) for _ in range(n)]
    return random_inputs(seed, arity, lo, hi, n)


@pytest.mark.acceptance(4, "oracle equivalence")
def test_optimized_images_agree_with_unoptimized(kernel_impl):
    total_procs = 0
    transformed = 0
    divergences = []
    for label, text, shapes in _equivalence_cases():
        plain = plain_vm(text, kernel_impl)
        rig = Rig(text, sampling=True, sample_period=97, kernel_impl=kernel_impl)
        for i, name in enumerate(sorted(shapes)):  # warm-up feeds the profile-driven phases
            for args in _inputs(1000 + i, shapes[name], 40):
                assert outcome(plain, name, args) == outcome(rig.vm, name, args)
        results = rig.optimize_all()
        assert not rig.replacer.pending
        for i, name in enumerate(sorted(shapes)):
            total_procs += 1
            assert rig.vm.image_of(name).origin == "optimizer"
            if set(results[name].applied) - {"instrument"}:
                transformed += 1
            for args in _inputs(i, shapes[name], 1000):
                a, b = outcome(plain, name, args), outcome(rig.vm, name, args)
                if a != b:
                    divergences.append((label, name, args, a, b))
        for g in plain.global_index:
            if plain.describe(plain.get_global(g)) != rig.vm.describe(rig.vm.get_global(g)):
                divergences.append((label, "global", g))
    assert total_procs >= 20
    assert transformed >= total_procs // 2
    assert divergences == []


# -- 5: end-to-end adaptation ------------------------------------------------------------------

def _cli_output(capsys, *args):
    code = cli.main(["run", *args])
    return code, capsys.readouterr().out


@pytest.mark.acceptance(5, "end-to-end adaptation")
def test_hotloop_adapts_and_output_is_unchanged(capsys):
    s = build_system(RunConfig(workload="hotloop"))
    result = s.run()
    swaps = s.replacer.swaps
    assert len(swaps) >= 1
    work = [w for w in swaps if w.proc == "work"]
    assert work, "the hot procedure was never swapped"
    before = s.vm.handle_snapshot(work[0].old)
    after = s.vm.handle_snapshot(work[-1].new)
    assert after.invocations > 0
    assert after.mean_self < before.mean_self

    code_opt, out_opt = _cli_output(capsys, "hotloop")
    code_none, out_none = _cli_output(capsys, "hotloop", "--phases", "none")
    assert code_opt == code_none == 0
    assert out_opt.encode() == out_none.encode()
    assert out_opt.splitlines() == s.output(result)


# -- 6: de-optimization ---------------------------------------------------------------------------

DEOPT = RunConfig(workload="deopt_base", extensions=["deopt_ext@iter>=12000"],
                  profilers=("sampling", "path"))


def _deopt_run(**overrides):
    cfg = RunConfig(**{**DEOPT.__dict__, **overrides})
    s = build_system(cfg)
    return s, s.run()


@pytest.mark.acceptance(6, "de-optimization scenario")
def test_extension_overwrite_undoes_devirtualization():
    s, result = _deopt_run()
    # the call through `handler` was bound statically before the extension arrived
    devirt = [o for o in s.manager.optimizations if o["proc"] == "step" and "devirtualize" in o["new"]]
    assert devirt and devirt[0]["swapped"]
    assert len(s.replacer.invalidations) == 1
    inv = s.replacer.invalidations[0]
    assert inv["global"] == "handler" and inv["procs"] == ["step"]
    load_clock = int(next(t for t in s.vm.trace if "event=load module=ext" in t).split()[0])
    assert devirt[0]["swap_clock"] < load_clock
    # (a) history entry removed
    assert s.optimizer.history.entry("step", "devirtualize") is None
    # (b) recompiled and swapped before the new value became visible
    deopt_swaps = [w for w in s.replacer.swaps if w.proc == "step" and w.clock == inv["clock"]]
    assert len(deopt_swaps) == 1
    trace = s.vm.trace
    i_swap = trace.index(next(t for t in trace if f"event=swap proc=step old=H{deopt_swaps[0].old}" in t))
    i_load = trace.index(next(t for t in trace if "event=load module=ext" in t))
    assert i_swap < i_load
    assert s.vm.image_of("step").count_ops("call_indirect") >= 1
    # (c) calls through the global now reach the new target
    assert s.vm.stats["triple"][0] == 20000 - 12000
    assert s.vm.invoke("step", [4]) == 3 * (2 * (4 + 1))
    # (d) output identical to a never-optimized run
    plain, presult = _deopt_run(phases=(), profilers=())
    assert s.output(result) == plain.output(presult)
    assert result.trap is None


# -- 7: replacement integrity -------------------------------------------------------------------

def _checked_replace(replacer, log):
    orig = replacer.replace

    def replace(tt):
        rep = orig(tt)
        counts = replacer.vm.count_refs(tt.old.id)
        log.append((tt.old.id, counts, replacer.vm.stale_refs()))
        return rep

    replacer.replace = replace


@pytest.mark.acceptance(7, "replacement integrity")
@pytest.mark.parametrize("workload", ["hotloop", "deopt", "phaseshift"])
def test_no_stale_handles_after_any_swap(workload):
    if workload == "deopt":
        s = build_system(RunConfig(**DEOPT.__dict__))
    else:
        s = build_system(RunConfig(workload=workload, profilers=("sampling", "path")))
    log = []
    _checked_replace(s.replacer, log)
    s.run()
    assert log, "no swap happened"
    for old, counts, stale in log:
        assert counts == {"globals": 0, "store": 0, "frames": 0}
        assert stale == []


SWAP_SRC = """
module sw
global g1 = &f
global g2 = &f
global other = &h
proc f nparams 1 export
block b
  r = add a0 a0
  ret r
proc h nparams 1 export
block b
  ret a0
proc spin nparams 1 export
block b0
  s = const 0
  i = const 0
  one = const 1
  br head
block head
  c = cmp_lt i a0
  br_if c body done
block body
  f = load_global g1
  t = call_indirect f (i)
  s = add s t
  i = add i one
  br head
block done
  ret s
"""


@pytest.mark.acceptance(7, "replacement integrity")
def test_swap_refused_while_frame_active_then_succeeds(kernel_impl):
    rig = Rig(SWAP_SRC, phases=("cse",), path=False, kernel_impl=kernel_impl)
    vm = rig.vm
    expected = outcome(plain_vm(SWAP_SRC), "spin", [50])
    task = vm.start("spin", [50])
    for _ in range(10):
        vm.run_until_safepoint(task)
    old = vm.handle_of("spin")
    assert old.id in vm.active_handles()
    image = rig.optimizer.recompile("spin")
    new = vm.new_handle(image)
    with pytest.raises(ReplaceRefused):
        rig.replacer.replace(TranslationTuple(old, new))
    assert rig.replacer.install("spin", image) is None
    assert "spin" in rig.replacer.pending
    assert vm.handle_of("spin") == old
    assert rig.replacer.retry_pending() == []
    result = vm.finish(task)
    assert vm.describe(result) == expected
    reps = rig.replacer.retry_pending()
    assert len(reps) == 1 and reps[0].old == old.id
    assert vm.stale_refs() == []
    assert outcome(vm, "spin", [50]) == expected


@pytest.mark.acceptance(7, "replacement integrity")
def test_sweep_counts_globals_store_frames(kernel_impl):
    rig = Rig(SWAP_SRC, phases=("cse",), path=False, kernel_impl=kernel_impl)
    vm = rig.vm
    old = vm.handle_of("f")
    obj = vm.new_object(2)
    from adaptvm.vm import ObjRef
    vm.set_field(ObjRef(obj), 1, old)
    new = vm.new_handle(rig.optimizer.recompile("f"))
    rep = rig.replacer.replace(TranslationTuple(old, new))
    assert rep.counts() == {"globals": 2, "store": 1, "frames": 0}
    assert vm.get_global("g1").id == new.id
    assert vm.get_field(ObjRef(obj), 1).id == new.id
    assert vm.stale_refs() == []
    assert outcome(vm, "spin", [4]) == "12"


# -- 8: profiler composition ---------------------------------------------------------------------

ACYCLIC = """
module acy
proc multi nparams 3 export
block b0
  z = const 0
  c = cmp_lt a0 z
  br_if c neg pos
block neg
  x = sub z a0
  br j1
block pos
  x = add a0 z
  br j1
block j1
  d = cmp_lt a1 x
  br_if d small big
block small
  e = cmp_eq a2 z
  br_if e zero nonzero
block zero
  y = const 1
  br j2
block nonzero
  y = const 2
  br j2
block big
  y = const 3
  br j2
block j2
  f = cmp_lt a2 a1
  br_if f last1 last2
block last1
  r = add x y
  ret r
block last2
  r = sub x y
  ret r
"""


@pytest.mark.acceptance(8, "profiler composition")
def test_block_counts_from_paths_match_brute_force(kernel_impl):
    rig = Rig(ACYCLIC, phases=(), path=True, kernel_impl=kernel_impl)
    from adaptvm.profiling import BlockProfiler
    rig.profiling.register_component(BlockProfiler())
    rig.profiling.broadcast(PathCntMsg(request_code=REGISTER, proc="multi"))
    rig.optimize_all()
    proc = parse_transport(ACYCLIC).procedure("multi")
    expected: dict[str, int] = {}
    inputs = random_inputs(8, 3, -5, 5, 700)
    for args in inputs:
        rig.vm.invoke("multi", args)
        block_counts(proc, args, expected)
    plan = rig.path.plan("multi")
    assert plan.num_paths == 12
    for b in proc.blocks:
        got = rig.profiling.broadcast(BlockCntMsg(proc="multi", target=b.label)).reply
        assert got == expected.get(b.label, 0), b.label
    total = sum(rig.profiling.broadcast(PathCntMsg(proc="multi", target=p)).reply for p in range(plan.num_paths))
    assert total == len(inputs) == rig.vm.handle_snapshot(rig.vm.handle_of("multi")).invocations


# -- 9: history discipline -----------------------------------------------------------------------

class Pessimize(OptimizationPhase):
    """Adversarial phase: prepends a pointless counting loop to the procedure."""

    name = "pessimize"
    placement = ("last",)
    prior = 0.5

    def __init__(self, spins: int = 200):
        self.spins = spins
        self.calls = 0

    def optimize(self, ir, ctx):
        from adaptvm.ir import BasicBlock, Instr, Phi
        self.calls += 1
        entry = ir.blocks[0]
        pre, head, body = (ir.fresh_label(x) for x in ("spin.pre", "spin.head", "spin.body"))
        i0, i1, i2, n, one, c = (ir.fresh_name(x) for x in ("spin.i0", "spin.i1", "spin.i2", "spin.n", "spin.one",
                                                           "spin.c"))
        blocks = [
            BasicBlock(pre, [], [Instr("const", i0, (0,)), Instr("const", n, (self.spins,)),
                                 Instr("const", one, (1,))], Instr("br", None, (head,))),
            BasicBlock(head, [Phi(i1, {pre: i0, body: i2})], [Instr("cmp_lt", c, (i1, n))],
                       Instr("br_if", None, (c, body, entry.label))),
            BasicBlock(body, [], [Instr("add", i2, (i1, one))], Instr("br", None, (head,))),
        ]
        ir.blocks = blocks + ir.blocks
        return {"spins": self.spins}


HOT = """
module hot
proc work nparams 1 export
block b0
  two = const 2
  r = mul a0 two
  ret r
"""


@pytest.mark.acceptance(9, "history discipline")
def test_negative_speedup_marks_non_profitable_and_is_never_reapplied(kernel_impl):
    rig = Rig(HOT, phases=("constfold",), path=False, kernel_impl=kernel_impl)
    adv = Pessimize()
    rig.optimizer.register_phase(adv)
    vm, om = rig.vm, rig.optimizer
    for i in range(40):
        vm.invoke("work", [i])
    res = om.optimize("work")
    assert "pessimize" in res.newly_applied
    rig.replacer.install("work", res.image, lambda o, n: om.note_swap("work", o, n, res.newly_applied))
    for i in range(40):
        vm.invoke("work", [i])
    measured = om.measure_pending()
    assert len(measured) == 1 and measured[0][1] < 0  # one measurement cycle, negative
    assert om.history.entry("work", "pessimize").last_speedup < 0
    clean = None
    for cycle in range(11):
        res = om.optimize("work")
        assert om.history.is_non_profitable("work", "pessimize")
        assert "pessimize" in res.skipped and "pessimize" not in res.applied
        rig.replacer.install("work", res.image)
        if clean is None:
            clean = res.image
        assert res.image.same_code(clean)
        assert len(res.image) < 10
        image = om.recompile("work")
        assert image.same_code(clean)
    assert adv.calls == 1
    assert om.phase_estimates("work")["pessimize"] == 0.0


# -- 10: determinism --------------------------------------------------------------------------------

@pytest.mark.acceptance(10, "determinism")
@pytest.mark.parametrize("args", [
    ["hotloop", "--profilers", "sampling,path,block", "--seed", "7"],
    ["deopt_base", "--profilers", "sampling,path", "--load-extension", "deopt_ext@iter>=12000", "--seed", "3"],
    ["phaseshift", "--seed", "11", "--sample-period", "101"],
])
def test_identical_config_gives_identical_trace_and_report(tmp_path, capsys, args):
    files = []
    for run in range(2):
        trace, report = tmp_path / f"t{run}.txt", tmp_path / f"r{run}.json"
        code = cli.main(["run", *args, "--mode", "single", "--trace", str(trace), "--report", str(report)])
        assert code == 0
        files.append((trace.read_bytes(), report.read_bytes()))
    capsys.readouterr()
    assert files[0][0] == files[1][0]
    assert files[0][1] == files[1][1]
    rep = json.loads(files[0][1])
    swaps_in_trace = [t for t in files[0][0].decode().splitlines() if " event=swap " in t]
    assert len(swaps_in_trace) == len(rep["swaps"])
