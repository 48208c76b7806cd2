import pytest

from adaptvm.loader import LoadDeferred, load_extension
from adaptvm.replacer import ReplaceRefused, TranslationTuple
from adaptvm.system import resolve_path
from helpers import Rig, outcome, plain_vm
from test_acceptance import SWAP_SRC

BASE = resolve_path("deopt_base").read_text()
EXT = resolve_path("deopt_ext").read_text()


def test_translation_tuple_needs_distinct_handles():
    rig = Rig(SWAP_SRC, phases=(), path=False)
    h = rig.vm.handle_of("f")
    with pytest.raises(ValueError):
        TranslationTuple(h, h)


def test_replace_refuses_stale_old_handle():
    rig = Rig(SWAP_SRC, phases=("cse",), path=False)
    vm = rig.vm
    old = vm.handle_of("f")
    first = vm.new_handle(rig.optimizer.recompile("f"))
    rig.replacer.replace(TranslationTuple(old, first))
    with pytest.raises(ReplaceRefused):
        rig.replacer.replace(TranslationTuple(old, vm.new_handle(rig.optimizer.recompile("f"))))
    assert old.id not in vm.images  # retired


def test_swap_rewrites_registers_of_suspended_frames(kernel_impl):
    rig = Rig(SWAP_SRC, phases=("cse",), path=False, kernel_impl=kernel_impl)
    vm = rig.vm
    task = vm.start("spin", [40])
    while True:
        rep = vm.run_until_safepoint(task)
        if rep.kind == "backedge" and vm.count_refs(vm.handle_of("f").id)["frames"]:
            break
    old = vm.handle_of("f")
    assert old.id not in vm.active_handles()
    rep = rig.replacer.install("f", rig.optimizer.recompile("f"))
    assert rep.frames >= 1 and rep.globals == 2
    assert vm.count_refs(old.id) == {"globals": 0, "store": 0, "frames": 0}
    assert vm.describe(vm.finish(task)) == outcome(plain_vm(SWAP_SRC), "spin", [40])
    assert vm.stale_refs() == []


def test_pending_install_is_replaced_by_a_newer_one():
    rig = Rig(SWAP_SRC, phases=("cse",), path=False)
    vm = rig.vm
    task = vm.start("spin", [5])
    vm.run_until_safepoint(task)
    a, b = rig.optimizer.recompile("spin"), rig.optimizer.recompile("spin")
    assert rig.replacer.install("spin", a) is None
    assert rig.replacer.install("spin", b) is None
    assert rig.replacer.pending["spin"].image is b
    vm.finish(task)
    rig.replacer.retry_pending()
    assert vm.image_of("spin") is b


def _devirtualized():
    rig = Rig(BASE, phases=("devirtualize", "cse"), path=False)
    res = rig.optimizer.optimize("step")
    rig.replacer.install("step", res.image)
    assert rig.replacer.registry == {("handler", "double"): {"step"}}
    return rig


def test_extension_is_deferred_while_a_dependent_frame_is_live():
    rig = _devirtualized()
    vm = rig.vm
    task = vm.start("step", [1])
    before = (dict(vm.procedure_table), dict(rig.replacer.registry), len(rig.replacer.swaps))
    with pytest.raises(LoadDeferred):
        load_extension(EXT, vm)
    assert (dict(vm.procedure_table), dict(rig.replacer.registry), len(rig.replacer.swaps)) == before
    assert rig.optimizer.history.is_applied("step", "devirtualize")
    assert vm.describe(vm.get_global("handler")) == "&double"
    assert vm.finish(task) == 8
    load_extension(EXT, vm)
    assert rig.replacer.registry == {}
    assert rig.optimizer.history.entry("step", "devirtualize") is None
    assert rig.optimizer.history.is_applied("step", "cse")  # unrelated entries survive
    assert vm.image_of("step").count_ops("call_indirect") == 1
    assert vm.invoke("step", [1]) == 12


def test_rewriting_the_same_binding_does_not_deoptimize():
    rig = _devirtualized()
    ext = "module same\nimport base\nglobal handler = &double\n"
    swaps = len(rig.replacer.swaps)
    load_extension(ext, rig.vm)
    assert rig.replacer.invalidations == []
    assert len(rig.replacer.swaps) == swaps
    assert rig.replacer.registry == {("handler", "double"): {"step"}}


def test_extension_storing_to_the_global_invalidates_conservatively():
    rig = _devirtualized()
    ext = ("module writer\nimport base\nproc poke nparams 0 export\nblock b\n"
           "  f = proc_ref double\n  store_global handler f\n  ret f\n")
    load_extension(ext, rig.vm)
    assert [i["global"] for i in rig.replacer.invalidations] == ["handler"]
    assert rig.replacer.registry == {}


def test_recompile_after_invalidation_drops_only_the_broken_binding():
    rig = Rig(BASE + "\nglobal other = &double\nproc two nparams 1 export\nblock b\n"
                     "  f = load_global handler\n  g = load_global other\n  x = call_indirect f (a0)\n"
                     "  y = call_indirect g (x)\n  ret y\n", phases=("devirtualize",), path=False)
    rig.replacer.install("two", rig.optimizer.optimize("two").image)
    assert rig.optimizer.history.entry("two", "devirtualize").detail == (("handler", "double"), ("other", "double"))
    load_extension(EXT, rig.vm)
    assert rig.optimizer.history.entry("two", "devirtualize").detail == (("other", "double"),)
    assert rig.vm.image_of("two").count_ops("call_indirect") == 1
    assert rig.vm.invoke("two", [1]) == 6
