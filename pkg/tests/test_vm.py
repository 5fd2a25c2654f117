"""Vector machine semantics: strip mining, tracing, cycle accounting."""

import numpy as np
import pytest

from vecboost.errors import ConfigError, DispatchError, DomainError, MemoryFault, ShapeError
from vecboost.memory import CacheConfig, CacheModel
from vecboost.vm import (
    CostTable,
    StripPlan,
    TraceEntry,
    VLoad,
    VMap,
    VStore,
    VectorKernelProgram,
    VectorMachine,
    VmConfig,
    lint_trace,
    register_vmap_fn,
    strip_plan,
)


def make_vm(memory=None, **cfg):
    return VectorMachine(VmConfig(**cfg) if cfg else None, memory=memory)


# -- strip planning -----------------------------------------------------------

def test_strip_plan_splits_with_short_tail():
    plan = strip_plan(5000, 2048)
    assert plan.strips == ((0, 2048), (2048, 2048), (4096, 904))
    assert plan.total == 5000


def test_strip_plan_exact_multiple_and_empty():
    assert strip_plan(4096, 2048).strips == ((0, 2048), (2048, 2048))
    assert strip_plan(0, 2048).strips == ()
    assert strip_plan(7, 16).strips == ((0, 7),)


def test_strip_plan_rejects_bad_args():
    with pytest.raises(DomainError):
        strip_plan(-1, 2048)
    with pytest.raises(ConfigError):
        strip_plan(10, 0)


def test_strip_count_is_ceil_division():
    rng = np.random.default_rng(11)
    for _ in range(50):
        total = int(rng.integers(0, 10000))
        maxvl = int(rng.integers(1, 3000))
        plan = strip_plan(total, maxvl)
        assert len(plan.strips) == -(-total // maxvl)
        assert sum(length for _, length in plan.strips) == total


# -- configuration ------------------------------------------------------------

def test_cost_table_defaults():
    c = CostTable()
    assert (c.setup, c.scalar_move, c.strip_compute, c.fetch_dispatch, c.fence) == (
        5, 1, 2, 1, 0)
    assert c.prefetch_hint == 3


def test_cost_table_rejects_negative():
    with pytest.raises(ConfigError):
        CostTable(setup=-1)


def test_vm_config_validation():
    with pytest.raises(ConfigError):
        VmConfig(maxvl=0)
    with pytest.raises(ConfigError):
        VmConfig(num_vregs=0)


def test_setvcfg_bounds():
    vm = make_vm()
    vm.setvcfg(1, 1)
    assert vm.vcfg == (1, 1)
    with pytest.raises(ConfigError):
        vm.setvcfg(0, 0)
    with pytest.raises(ConfigError):
        vm.setvcfg(vm.config.num_vregs + 1, 0)
    with pytest.raises(ConfigError):
        vm.setvcfg(1, vm.config.num_pregs + 1)


def test_setvlen_clamps_to_maxvl():
    vm = make_vm()
    assert vm.setvlen(12) == 12
    assert vm.setvlen(2048) == 2048
    assert vm.setvlen(2049) == 2048
    assert vm.setvlen(0) == 0
    with pytest.raises(DomainError):
        vm.setvlen(-1)


def test_vmca_sets_register_and_rejects_bad_index():
    vm = make_vm()
    vm.vmca(3, 0x4000)
    assert vm.aregs[3] == 0x4000
    with pytest.raises(ConfigError):
        vm.vmca(vm.config.num_aregs, 1)


# -- load/store data movement ---------------------------------------------------

def test_vload_vstore_roundtrip():
    vm = make_vm()
    src = np.arange(32, dtype=np.float32)
    dst = np.zeros(32, dtype=np.float32)
    b_in = vm.register_buffer("in", src)
    b_out = vm.register_buffer("out", dst)
    vm.setvcfg(1)
    vm.setvlen(32)
    vm.vmca(0, b_in)
    vm.vmca(1, b_out)
    vm.vload(0, 0)
    vm.vstore(0, 1)
    vm.fence()
    assert np.array_equal(dst, src)


def test_strided_load_gathers_every_other_element():
    vm = make_vm()
    src = np.arange(16, dtype=np.float32)
    base = vm.register_buffer("in", src)
    vm.setvcfg(1)
    vm.setvlen(8)
    vm.vmca(0, base)
    vm.vload(0, 0, stride_elems=2)
    assert np.array_equal(vm.vregs[0], src[::2])


def test_strided_store_scatter():
    vm = make_vm()
    src = np.array([1, 2, 3, 4], dtype=np.float32)
    dst = np.zeros(8, dtype=np.float32)
    b_in = vm.register_buffer("in", src)
    b_out = vm.register_buffer("out", dst)
    vm.setvcfg(1)
    vm.setvlen(4)
    vm.vmca(0, b_in)
    vm.vmca(1, b_out)
    vm.vload(0, 0)
    vm.vstore(0, 1, stride_elems=2)
    assert np.array_equal(dst, [1, 0, 2, 0, 3, 0, 4, 0])


def test_byte_stride_from_address_register():
    # the kernel reads its stride, in raw bytes, from an address register
    vm = make_vm()
    src = np.arange(12, dtype=np.float32)
    dst = np.zeros(4, dtype=np.float32)
    b_in = vm.register_buffer("in", src)
    b_out = vm.register_buffer("out", dst)
    prog = VectorKernelProgram(
        name="gather3",
        body=(VLoad(0, base_areg=0, stride_areg=2), VStore(0, base_areg=1)),
        vregs=1,
    )
    vm.register_kernel(prog)
    vm.setvcfg(1)
    vm.setvlen(4)
    vm.vmca(0, b_in)
    vm.vmca(1, b_out)
    vm.vmca(2, 12)  # 3 float32 elements
    vm.vfetch("gather3")
    vm.fence()
    assert np.array_equal(dst, src[::3])


def test_vload_out_of_bounds_faults_and_traces():
    vm = make_vm()
    base = vm.register_buffer("in", np.zeros(4, dtype=np.float32))
    vm.setvcfg(1)
    vm.setvlen(8)
    vm.vmca(0, base)
    with pytest.raises(MemoryFault):
        vm.vload(0, 0)
    assert vm.trace[-1].mnemonic == "fault"


def test_vload_unmapped_base_faults():
    vm = make_vm()
    vm.setvcfg(1)
    vm.setvlen(4)
    vm.vmca(0, 0x10)  # below the allocator base, never mapped
    with pytest.raises(MemoryFault):
        vm.vload(0, 0)


def test_misaligned_element_access_faults():
    vm = make_vm()
    base = vm.register_buffer("in", np.zeros(8, dtype=np.float32))
    vm.setvcfg(1)
    vm.setvlen(2)
    vm.vmca(0, base + 2)  # halfway into an element
    with pytest.raises(MemoryFault):
        vm.vload(0, 0)


def test_vstore_dtype_mismatch_rejected():
    vm = make_vm()
    b_in = vm.register_buffer("in", np.ones(4, dtype=np.float32))
    b_out = vm.register_buffer("out", np.zeros(4, dtype=np.int8))
    vm.setvcfg(1)
    vm.setvlen(4)
    vm.vmca(0, b_in)
    vm.vmca(1, b_out)
    vm.vload(0, 0)
    with pytest.raises(ShapeError):
        vm.vstore(0, 1)


def test_vstore_requires_populated_register():
    vm = make_vm()
    base = vm.register_buffer("out", np.zeros(4, dtype=np.float32))
    vm.setvcfg(2)
    vm.setvlen(4)
    vm.vmca(0, base)
    with pytest.raises(ConfigError):
        vm.vstore(1, 0)


def test_vreg_index_outside_configured_file():
    vm = make_vm()
    base = vm.register_buffer("in", np.zeros(8, dtype=np.float32))
    vm.setvcfg(1)
    vm.setvlen(4)
    vm.vmca(0, base)
    with pytest.raises(ConfigError):
        vm.vload(1, 0)


def test_predicated_store_writes_only_masked_lanes():
    vm = make_vm()
    src = np.array([1, 2, 3, 4], dtype=np.float32)
    dst = np.full(4, -1.0, dtype=np.float32)
    b_in = vm.register_buffer("in", src)
    b_out = vm.register_buffer("out", dst)
    vm.setvcfg(1, 1)
    vm.setvlen(4)
    vm.vmca(0, b_in)
    vm.vmca(1, b_out)
    vm.set_pred(0, np.array([True, False, True, False]))
    vm.vload(0, 0)
    vm.vstore(0, 1, pred=0)
    assert np.array_equal(dst, [1, -1, 3, -1])


# -- vfetch dispatch ----------------------------------------------------------

def test_vfetch_unknown_kernel_raises():
    vm = make_vm()
    vm.setvcfg(1)
    with pytest.raises(DispatchError):
        vm.vfetch("nope")


def test_vfetch_register_pressure_checked():
    vm = make_vm()
    prog = VectorKernelProgram("wide", body=(VLoad(2, 0),), vregs=3)
    vm.register_kernel(prog)
    vm.setvcfg(2)
    with pytest.raises(ConfigError):
        vm.vfetch("wide")


def test_vfetch_zero_length_charges_dispatch_only():
    vm = make_vm()
    prog = VectorKernelProgram("p", body=(VLoad(0, 0), VStore(0, 1)), vregs=1)
    vm.register_kernel(prog)
    vm.setvcfg(1)
    vm.setvlen(0)
    before = len(vm.trace)
    vm.vfetch("p")
    total, breakdown = vm.cycles()
    assert [e.mnemonic for e in vm.trace[before:]] == ["vf"]
    assert breakdown["fetch_dispatch"] == 1
    assert breakdown["strip_compute"] == 0


def test_vmap_applies_registered_fn():
    register_vmap_fn("test_scale2", lambda x: x * np.float32(2))
    vm = make_vm()
    src = np.arange(6, dtype=np.float32)
    dst = np.zeros(6, dtype=np.float32)
    b_in = vm.register_buffer("in", src)
    b_out = vm.register_buffer("out", dst)
    prog = VectorKernelProgram(
        "dbl", body=(VLoad(0, 0), VMap(1, 0, "test_scale2"), VStore(1, 1)), vregs=2)
    vm.register_kernel(prog)
    vm.setvcfg(2)
    vm.setvlen(6)
    vm.vmca(0, b_in)
    vm.vmca(1, b_out)
    vm.vfetch("dbl")
    vm.fence()
    assert np.array_equal(dst, src * 2)


def test_vmap_unknown_fn_raises():
    vm = make_vm()
    base = vm.register_buffer("in", np.zeros(4, dtype=np.float32))
    prog = VectorKernelProgram("bad", body=(VLoad(0, 0), VMap(0, 0, "missing")), vregs=1)
    vm.register_kernel(prog)
    vm.setvcfg(1)
    vm.setvlen(4)
    vm.vmca(0, base)
    with pytest.raises(DispatchError):
        vm.vfetch("bad")


def test_program_body_register_validation():
    with pytest.raises(ConfigError):
        VectorKernelProgram("oops", body=(VLoad(1, 0),), vregs=1)
    with pytest.raises(ConfigError):
        VectorKernelProgram("oops", body=("not-an-instruction",), vregs=1)


# -- cycle accounting -----------------------------------------------------------

def test_single_strip_sequence_costs_fifteen_cycles():
    # setup 5 + row scalar ops 2 + 3 moves + dispatch 1 + load 2 + store 2.
    vm = make_vm()
    src = np.arange(8, dtype=np.float32)
    dst = np.zeros(8, dtype=np.float32)
    b_in = vm.register_buffer("in", src)
    b_out = vm.register_buffer("out", dst)
    prog = VectorKernelProgram(
        "copy", body=(VLoad(0, base_areg=0, stride_areg=2), VStore(0, base_areg=1)),
        vregs=1)
    vm.register_kernel(prog)
    vm.setvcfg(1, 1)
    vm.scalar_ops(2)
    vm.setvlen(8)
    vm.vmca(0, b_in)
    vm.vmca(1, b_out)
    vm.vmca(2, 4)
    vm.vfetch("copy")
    vm.fence()
    total, breakdown = vm.cycles()
    assert total == 15
    assert breakdown == {
        "setup": 5,
        "scalar_move": 5,
        "strip_compute": 4,
        "fetch_dispatch": 1,
        "fence": 0,
        "prefetch_hint": 0,
        "stall": 0,
    }


def test_trace_total_matches_cycle_counter():
    vm = make_vm()
    src = np.arange(100, dtype=np.float32)
    dst = np.zeros(100, dtype=np.float32)
    b_in = vm.register_buffer("in", src)
    b_out = vm.register_buffer("out", dst)
    vm.setvcfg(1)
    for off in (0, 50):
        vm.setvlen(50)
        vm.vmca(0, b_in + 4 * off)
        vm.vmca(1, b_out + 4 * off)
        vm.vload(0, 0)
        vm.vstore(0, 1)
    vm.fence()
    total, _ = vm.cycles()
    assert total == sum(e.cycles + e.stalls for e in vm.trace)
    assert np.array_equal(dst, src)


def test_trace_lines_csv_shape():
    vm = make_vm()
    vm.setvcfg(1)
    vm.setvlen(4)
    lines = vm.trace_lines()
    assert lines == ["1,setvcfg,0,5,0", "2,setvlen,4,0,0"]


def test_custom_cost_table_respected():
    vm = make_vm(cost=CostTable(setup=7, scalar_move=2, strip_compute=3,
                                fetch_dispatch=4, fence=1))
    base = vm.register_buffer("b", np.zeros(4, dtype=np.float32))
    vm.setvcfg(1)
    vm.setvlen(4)
    vm.vmca(0, base)
    vm.vload(0, 0)
    vm.fence()
    total, breakdown = vm.cycles()
    assert breakdown["setup"] == 7
    assert breakdown["scalar_move"] == 2
    assert breakdown["strip_compute"] == 3
    assert breakdown["fence"] == 1
    assert total == 13


def test_summary_reports_counts():
    vm = make_vm()
    vm.setvcfg(1)
    s = vm.summary()
    assert s["total_cycles"] == 5
    assert s["instructions"] == 1
    assert "breakdown" in s and "memory" in s


# -- stalls against the cache model ------------------------------------------------

def make_cached_vm():
    mem = CacheModel(CacheConfig())
    return VectorMachine(memory=mem), mem


def test_cold_vector_line_stalls_then_l2_hits():
    vm, mem = make_cached_vm()
    base = vm.register_buffer("in", np.zeros(16, dtype=np.float32))
    vm.setvcfg(1)
    vm.setvlen(16)  # exactly one 64-byte line
    vm.vmca(0, base)
    vm.vload(0, 0)
    assert vm.trace[-1].stalls == mem.config.miss - mem.config.l1_hit
    vm.vload(0, 0)  # vector port filled into L2, so this is an L2 hit
    assert vm.trace[-1].stalls == mem.config.l2_hit - mem.config.l1_hit


def test_immature_hint_still_pending_then_matures():
    vm, mem = make_cached_vm()
    base = vm.register_buffer("in", np.zeros(32, dtype=np.float32))
    vm.setvcfg(1)
    vm.setvlen(16)
    vm.vmca(0, base + 64)
    vm.prefetch(base + 64)
    # same strip: too young to help, the load pays the full miss
    vm.vload(0, 0)
    assert vm.trace[-1].stalls == mem.config.miss - mem.config.l1_hit
    prog = VectorKernelProgram("ld", body=(VLoad(0, 0),), vregs=1)
    vm.vfetch(prog)  # strip advanced: the hint matured and is consumed
    assert vm.trace[-1].mnemonic == "vload" and vm.trace[-1].stalls == 0
    assert mem.stats.prefetch_useful == 1


def test_prefetch_hint_cost_and_maturity():
    vm, mem = make_cached_vm()
    src = np.zeros(32, dtype=np.float32)
    base = vm.register_buffer("in", src)
    prog = VectorKernelProgram("ld", body=(VLoad(0, 0),), vregs=1)
    vm.register_kernel(prog)
    vm.setvcfg(1)
    vm.setvlen(16)
    # hint the second line while "processing" the first strip
    vm.vmca(0, base)
    vm.prefetch(base + 64)
    vm.vfetch("ld")
    # next strip: the hinted line is now mature and costs only an L1 hit
    vm.vmca(0, base + 64)
    vm.vfetch("ld")
    assert vm.trace[-1].mnemonic == "vload" and vm.trace[-1].stalls == 0
    assert mem.stats.prefetch_useful == 1
    _, breakdown = vm.cycles()
    assert breakdown["prefetch_hint"] == vm.config.cost.prefetch_hint


def test_scalar_read_returns_bytes_and_charges_stall():
    vm, mem = make_cached_vm()
    arr = np.array([7], dtype=np.float32)
    base = vm.register_buffer("x", arr)
    raw = vm.scalar_read(base, 4)
    assert np.frombuffer(raw, dtype=np.float32)[0] == 7
    assert vm.trace[-1].stalls == mem.config.miss - mem.config.l1_hit


# -- fence discipline ----------------------------------------------------------------

def run_store_then_read(with_fence: bool):
    vm = make_vm()
    src = np.ones(16, dtype=np.float32)
    dst = np.zeros(16, dtype=np.float32)
    b_in = vm.register_buffer("in", src)
    b_out = vm.register_buffer("out", dst)
    vm.setvcfg(1)
    vm.setvlen(16)
    vm.vmca(0, b_in)
    vm.vmca(1, b_out)
    vm.vload(0, 0)
    vm.vstore(0, 1)
    if with_fence:
        vm.fence()
    vm.scalar_read(b_out, 4)
    return vm


def test_lint_flags_scalar_read_before_fence():
    vm = run_store_then_read(with_fence=False)
    problems = lint_trace(vm.trace)
    assert len(problems) == 1 and "before fence" in problems[0]


def test_lint_passes_with_fence():
    assert lint_trace(run_store_then_read(with_fence=True).trace) == []


def test_lint_ignores_disjoint_scalar_reads():
    vm = make_vm()
    src = np.ones(16, dtype=np.float32)
    other = np.zeros(4, dtype=np.float32)
    b_in = vm.register_buffer("in", src)
    b_other = vm.register_buffer("other", other)
    vm.setvcfg(1)
    vm.setvlen(16)
    vm.vmca(0, b_in)
    vm.vmca(1, b_other)
    vm.vload(0, 0)
    vm.scalar_read(b_other, 4)  # untouched buffer: fine
    assert lint_trace(vm.trace) == []


# -- replay determinism and scalar-interpreter agreement -----------------------------

OPS_FNS = {"test_scale2": lambda x: x * np.float32(2)}


def run_ops_on_vm(ops, src, dst):
    vm = make_vm()
    b_in = vm.register_buffer("in", src.copy())
    b_out = vm.register_buffer("out", dst.copy())
    bases = {"in": b_in, "out": b_out}
    register_vmap_fn("test_scale2", OPS_FNS["test_scale2"])
    vm.setvcfg(4)
    for op in ops:
        kind = op[0]
        if kind == "setvlen":
            vm.setvlen(op[1])
        elif kind == "vmca":
            _, areg, buf, elem_off = op
            arr = src if buf == "in" else dst
            vm.vmca(areg, bases[buf] + elem_off * arr.itemsize)
        elif kind == "vload":
            vm.vload(op[1], op[2], stride_elems=op[3])
        elif kind == "vstore":
            vm.vstore(op[1], op[2], stride_elems=op[3])
        elif kind == "vmap":
            prog = VectorKernelProgram("m", body=(VMap(op[1], op[2], op[3]),),
                                       vregs=max(op[1], op[2]) + 1)
            vm.vfetch(prog)
    vm.fence()
    out_buf = vm.space.buffer_at(b_out, 1)
    return out_buf.array.copy(), vm


def run_ops_on_scalar_interpreter(ops, src, dst, maxvl=2048):
    """Plain element-at-a-time reference interpreter for the same op stream."""
    mem = {"in": list(src.copy()), "out": list(dst.copy())}
    aregs = [("in", 0)] * 8  # (buffer, element offset)
    vregs = [None] * 4
    vl = 0
    for op in ops:
        kind = op[0]
        if kind == "setvlen":
            vl = min(op[1], maxvl)
        elif kind == "vmca":
            _, areg, buf, elem_off = op
            aregs[areg] = (buf, elem_off)
        elif kind == "vload":
            _, vreg, areg, stride = op
            buf, off = aregs[areg]
            vregs[vreg] = [mem[buf][off + stride * k] for k in range(vl)]
        elif kind == "vstore":
            _, vreg, areg, stride = op
            buf, off = aregs[areg]
            for k in range(vl):
                mem[buf][off + stride * k] = vregs[vreg][k]
        elif kind == "vmap":
            _, dst_r, src_r, fn = op
            f = OPS_FNS[fn]
            vregs[dst_r] = [f(v) for v in vregs[src_r]]
    return np.array(mem["out"], dtype=dst.dtype)


def random_program(rng, n_elems):
    """A short random-but-valid op sequence over one in and one out buffer."""
    ops = []
    loaded = set()
    for _ in range(int(rng.integers(2, 8))):
        stride = int(rng.integers(1, 4))
        vl = int(rng.integers(1, max(2, n_elems // stride)))
        start_lim = n_elems - stride * (vl - 1)
        src_off = int(rng.integers(0, start_lim))
        dst_off = int(rng.integers(0, start_lim))
        vreg = int(rng.integers(0, 4))
        ops.append(("setvlen", vl))
        ops.append(("vmca", 0, "in", src_off))
        ops.append(("vload", vreg, 0, stride))
        loaded.add(vreg)
        if rng.random() < 0.4:
            dst_r = int(rng.integers(0, 4))
            ops.append(("vmap", dst_r, vreg, "test_scale2"))
            vreg = dst_r
        ops.append(("vmca", 1, "out", dst_off))
        ops.append(("vstore", vreg, 1, stride))
    return ops


def test_vm_agrees_with_scalar_interpreter():
    rng = np.random.default_rng(2026)
    for case in range(100):
        n = int(rng.integers(8, 64))
        src = rng.standard_normal(n).astype(np.float32)
        dst = np.zeros(n, dtype=np.float32)
        ops = random_program(rng, n)
        got, _ = run_ops_on_vm(ops, src, dst)
        want = run_ops_on_scalar_interpreter(ops, src, dst)
        assert np.array_equal(got, want), f"case {case} diverged"


def test_replay_is_deterministic():
    rng = np.random.default_rng(7)
    src = rng.standard_normal(32).astype(np.float32)
    dst = np.zeros(32, dtype=np.float32)
    ops = random_program(rng, 32)
    out1, vm1 = run_ops_on_vm(ops, src, dst)
    out2, vm2 = run_ops_on_vm(ops, src, dst)
    assert np.array_equal(out1, out2)
    assert vm1.trace == vm2.trace
    assert vm1.cycles() == vm2.cycles()
