"""Drive the abstract vector machine by hand and read its instruction trace.

The machine models an RVV-flavored strip-mining core: configure the register
budget once (setvcfg, 5 cycles), then per strip request a vector length
(setvlen, free, clamped to MAXVL), point address registers at buffers (vmca,
1 cycle each), and dispatch a named kernel body (vfetch, 1 cycle + 2 per
load/store it performs). A fence closes the sequence for 0 cycles.

The single-strip copy below costs exactly 12 cycles on the default cost table
(5 + 0 + 1 + 1 + 1 + 2 + 2 + 0); re-planning the same copy with MAXVL=2 shows
how strip count and cycle count grow together.

Run:  python3 demos/02_vector_machine_trace.py
"""

import numpy as np

from vecboost import CostTable, VectorMachine, VmConfig, strip_plan
from vecboost.vm import VLoad, VStore, VectorKernelProgram

COPY = VectorKernelProgram("copy", body=(VLoad(0, 0), VStore(0, 1)), vregs=1)


def run_copy(maxvl, n=4):
    vm = VectorMachine(VmConfig(maxvl=maxvl))
    src = np.arange(n, dtype=np.float32)
    dst = np.zeros(n, dtype=np.float32)
    b_in = vm.register_buffer("in", src)
    b_out = vm.register_buffer("out", dst)
    vm.register_kernel(COPY)

    vm.setvcfg(1)
    for off, length in strip_plan(n, vm.config.maxvl).strips:
        vm.setvlen(length)
        vm.vmca(0, b_in + 4 * off)
        vm.vmca(1, b_out + 4 * off)
        vm.vfetch("copy")
    vm.fence()
    return vm, dst


vm, out = run_copy(maxvl=2048)
total, breakdown = vm.cycles()
print("single strip (vl=4 fits in MAXVL=2048)")
print("trace: seq,mnemonic,vl,cycles,stalls")
for line in vm.trace_lines():
    print(" ", line)
print(f"total {total} cycles, breakdown {breakdown}")
print(f"copied: {out.tolist()}")

print()
vm2, _ = run_copy(maxvl=2)
total2, _ = vm2.cycles()
print(f"same copy with MAXVL=2 -> {len(strip_plan(4, 2).strips)} strips, {total2} cycles")
print("(each extra strip re-pays the two vmca moves, the dispatch, and the body)")

# cost tables are data, not code: double every class and the count doubles too
expensive = CostTable(setup=10, scalar_move=2, strip_compute=4,
                      fetch_dispatch=2, fence=0, prefetch_hint=6)
vm3 = VectorMachine(VmConfig(cost=expensive))
src = np.arange(4, dtype=np.float32)
b_in = vm3.register_buffer("in", src)
b_out = vm3.register_buffer("out", np.zeros(4, np.float32))
vm3.register_kernel(COPY)
vm3.setvcfg(1)
vm3.setvlen(4)
vm3.vmca(0, b_in)
vm3.vmca(1, b_out)
vm3.vfetch("copy")
vm3.fence()
print(f"\ndoubled cost table: {vm3.cycles()[0]} cycles (was {total})")
