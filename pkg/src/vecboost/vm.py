"""Abstract strip-mined vector machine with instruction tracing.

The machine follows the decoupled vector-fetch style: a scalar control
thread configures the register file (`setvcfg`), requests a vector length
per strip (`setvlen`), moves base addresses and strides into address
registers (`vmca`), then dispatches a named kernel program to the vector
unit (`vfetch`). A `fence` orders vector stores before later scalar reads.

Cycle accounting is additive: every instruction charges its cost-table
class, and memory stalls (latency beyond an L1 hit, as reported by the
memory model) are charged on top of the load/store that caused them. The
trace records one line per executed instruction, so the trace total always
equals `cycles()`.

Costs are calibrated so the feature-depth conversion kernel has the closed
form `setup + C*H*2 + C*H*8*ceil(w/MAXVL)` under the default table: each
strip spends 3 cycles on vmca moves, 1 on dispatch, and 2+2 on its
load/store pair; each (channel, row) iteration spends 2 scalar cycles on
address setup; setvlen is free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigError, DispatchError, DomainError, MemoryFault, ShapeError
from .memory import AddressSpace, ZeroLatencyMemory


@dataclass(frozen=True)
class CostTable:
    """Cycles per instruction class."""

    setup: int = 5
    scalar_move: int = 1
    strip_compute: int = 2
    fetch_dispatch: int = 1
    fence: int = 0
    prefetch_hint: int = 3

    def __post_init__(self) -> None:
        for name, v in self.__dict__.items():
            if v < 0:
                raise ConfigError(f"cost {name} must be >= 0, got {v}")


@dataclass(frozen=True)
class VmConfig:
    maxvl: int = 2048
    num_vregs: int = 8
    num_pregs: int = 2
    num_aregs: int = 8
    cost: CostTable = field(default_factory=CostTable)

    def __post_init__(self) -> None:
        if self.maxvl < 1:
            raise ConfigError(f"maxvl must be >= 1, got {self.maxvl}")
        for name in ("num_vregs", "num_pregs", "num_aregs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass(frozen=True)
class StripPlan:
    total: int
    strips: tuple[tuple[int, int], ...]


def strip_plan(total: int, maxvl: int) -> StripPlan:
    """Split [0, total) into ceil(total/maxvl) strips, all full but the last."""
    if total < 0:
        raise DomainError(f"total must be >= 0, got {total}")
    if maxvl < 1:
        raise ConfigError(f"maxvl must be >= 1, got {maxvl}")
    strips = []
    off = 0
    while off < total:
        length = min(maxvl, total - off)
        strips.append((off, length))
        off += length
    return StripPlan(total=total, strips=tuple(strips))


class TraceEntry(NamedTuple):
    seq: int
    mnemonic: str
    vl: int
    cycles: int
    stalls: int
    addr: int | None = None
    span: int = 0


# -- kernel program instructions (bodies executed by vfetch) ----------------

@dataclass(frozen=True)
class VLoad:
    """Load vl elements into a vector register.

    Stride comes from `stride_areg` (raw byte units, as a real kernel would
    read it) when given, otherwise `stride_elems` scaled by the target
    buffer's element width.
    """

    vreg: int
    base_areg: int
    stride_areg: int | None = None
    stride_elems: int = 1


@dataclass(frozen=True)
class VStore:
    vreg: int
    base_areg: int
    stride_areg: int | None = None
    stride_elems: int = 1


@dataclass(frozen=True)
class VMap:
    """Elementwise transform between vector registers by registered fn name."""

    dst: int
    src: int
    fn: str


_VMAP_FNS: dict[str, Callable] = {}


def register_vmap_fn(name: str, fn: Callable) -> None:
    _VMAP_FNS[name] = fn


@dataclass(frozen=True)
class VectorKernelProgram:
    name: str
    body: tuple
    vregs: int = 1
    pregs: int = 0

    def __post_init__(self) -> None:
        for instr in self.body:
            regs = ()
            if isinstance(instr, (VLoad, VStore)):
                regs = (instr.vreg,)
            elif isinstance(instr, VMap):
                regs = (instr.dst, instr.src)
            else:
                raise ConfigError(f"unknown body instruction {instr!r}")
            for r in regs:
                if not 0 <= r < self.vregs:
                    raise ConfigError(
                        f"kernel {self.name!r} references v{r} but declares {self.vregs} vregs"
                    )


class VectorMachine:
    """One simulated machine: registers, trace, cycle counters, memory.

    Not safe for concurrent use; run independent machines in parallel
    instead.
    """

    CLASSES = ("setup", "scalar_move", "strip_compute", "fetch_dispatch",
               "fence", "prefetch_hint")

    def __init__(self, config: VmConfig | None = None, memory=None):
        self.config = config or VmConfig()
        self.memory = memory if memory is not None else ZeroLatencyMemory()
        self.space: AddressSpace = self.memory.space
        self.vl = 0
        self.vcfg = (0, 0)
        self.aregs = [0] * self.config.num_aregs
        self.vregs: list[np.ndarray | None] = [None] * self.config.num_vregs
        self.pregs: list[np.ndarray | None] = [None] * self.config.num_pregs
        self.trace: list[TraceEntry] = []
        self._seq = 0
        self._class_cycles = dict.fromkeys(self.CLASSES, 0)
        self._stalls = 0
        self._kernels: dict[str, VectorKernelProgram] = {}
        self._arange = np.arange(self.config.maxvl, dtype=np.int64)

    # -- plumbing ------------------------------------------------------------
    def register_buffer(self, name: str, array: np.ndarray) -> int:
        """Map a 1-D numpy array into the address space; returns its base."""
        return self.space.register(name, array).base

    def register_kernel(self, program: VectorKernelProgram) -> None:
        self._kernels[program.name] = program

    def _emit(self, mnemonic: str, vl: int, cycles: int, cls: str | None,
              stalls: int = 0, addr: int | None = None, span: int = 0) -> None:
        self._seq += 1
        self.trace.append(TraceEntry(self._seq, mnemonic, vl, cycles, stalls, addr, span))
        if cls is not None:
            self._class_cycles[cls] += cycles
        self._stalls += stalls

    # -- scalar-side instructions ---------------------------------------------
    def setvcfg(self, nvreg: int, npred: int = 0) -> None:
        if not 1 <= nvreg <= self.config.num_vregs:
            raise ConfigError(
                f"requested {nvreg} vregs, machine has {self.config.num_vregs}"
            )
        if not 0 <= npred <= self.config.num_pregs:
            raise ConfigError(
                f"requested {npred} pregs, machine has {self.config.num_pregs}"
            )
        self.vcfg = (nvreg, npred)
        self._emit("setvcfg", 0, self.config.cost.setup, "setup")

    def setvlen(self, requested: int) -> int:
        if requested < 0:
            raise DomainError(f"requested length must be >= 0, got {requested}")
        self.vl = min(requested, self.config.maxvl)
        self._emit("setvlen", self.vl, 0, None)
        return self.vl

    def vmca(self, areg: int, value: int) -> None:
        if not 0 <= areg < self.config.num_aregs:
            raise ConfigError(f"address register a{areg} out of range")
        self.aregs[areg] = int(value)
        self._emit("vmca", 0, self.config.cost.scalar_move, "scalar_move")

    def scalar_ops(self, n: int) -> None:
        """Charge n generic scalar ALU cycles (address setup and the like)."""
        self._emit("scalar", 0, n * self.config.cost.scalar_move, "scalar_move")

    def set_pred(self, idx: int, mask: np.ndarray) -> None:
        if not 0 <= idx < self.vcfg[1]:
            raise ConfigError(f"predicate register p{idx} not configured")
        m = np.asarray(mask, dtype=bool)
        if m.shape != (self.vl,):
            raise ShapeError(f"predicate mask must have shape ({self.vl},)")
        self.pregs[idx] = m
        self._emit("setpred", 0, self.config.cost.scalar_move, "scalar_move")

    def prefetch(self, addr: int) -> None:
        """Issue one software-prefetch hint instruction."""
        self.memory.prefetch_hint(addr)
        self._emit("prefetch", 0, self.config.cost.prefetch_hint, "prefetch_hint")

    def scalar_read(self, addr: int, width: int) -> bytes:
        """Read raw bytes through the scalar port (subject to the fence rule)."""
        try:
            buf = self.space.buffer_at(addr, width)
        except MemoryFault:
            self._emit("fault", 0, 0, None, addr=addr, span=width)
            raise
        before = self.memory.stats.stall_cycles
        self.memory.access(addr, width, port="scalar")
        stall = self.memory.stats.stall_cycles - before
        self._emit("scalar-load", 0, self.config.cost.scalar_move, "scalar_move",
                   stalls=stall, addr=addr, span=width)
        off = addr - buf.base
        return buf.array.view(np.uint8)[off : off + width].tobytes()

    # -- vector memory ops -----------------------------------------------------
    def _check_vreg(self, idx: int) -> None:
        if not 0 <= idx < self.vcfg[0]:
            raise ConfigError(f"v{idx} outside configured register file {self.vcfg[0]}")

    def _pred_mask(self, pred: int | None) -> np.ndarray | None:
        if pred is None:
            return None
        if not 0 <= pred < self.vcfg[1] or self.pregs[pred] is None:
            raise ConfigError(f"predicate register p{pred} not set")
        return self.pregs[pred]

    def _addrs_and_lines(self, base: int, stride_bytes: int, count: int,
                         itemsize: int, mask: np.ndarray | None):
        """Element addresses plus the distinct cache lines they touch."""
        addrs = base + stride_bytes * self._arange[:count]
        if mask is not None:
            addrs = addrs[mask]
        lb = self.space.line_bytes
        if stride_bytes == itemsize and mask is None:
            # contiguous: a simple line range
            lines = range(int(base) // lb, int(base + itemsize * count - 1) // lb + 1)
        elif abs(stride_bytes) >= lb:
            lines = (addrs // lb).tolist()  # every element on its own line
        else:
            lines = np.unique(addrs // lb).tolist()
        return addrs, lines

    def _element_indices(self, buf, addrs: np.ndarray, itemsize: int, mnemonic: str):
        offs = addrs - buf.base
        if len(offs) and (offs.min() < 0 or offs.max() > buf.nbytes - itemsize):
            self._emit("fault", self.vl, 0, None, addr=int(addrs.min()), span=itemsize)
            raise MemoryFault(
                f"{mnemonic}: access [{addrs.min():#x}, {addrs.max():#x}] outside "
                f"buffer {buf.name!r}"
            )
        if len(offs) and (offs % itemsize).any():
            self._emit("fault", self.vl, 0, None, addr=int(addrs.min()), span=itemsize)
            raise MemoryFault(f"{mnemonic}: misaligned element access in {buf.name!r}")
        return offs // itemsize

    def _charge_lines(self, lines) -> int:
        before = self.memory.stats.stall_cycles
        self.memory.access_lines(lines, port="vector")
        return self.memory.stats.stall_cycles - before

    def _exec_load(self, vreg: int, base: int, stride_bytes: int,
                   pred: int | None) -> None:
        self._check_vreg(vreg)
        cost = self.config.cost.strip_compute
        if self.vl == 0:
            self._emit("vload", 0, cost, "strip_compute")
            return
        try:
            buf = self.space.buffer_at(base, 1)
        except MemoryFault:
            self._emit("fault", self.vl, 0, None, addr=base, span=1)
            raise
        itemsize = buf.array.itemsize
        mask = self._pred_mask(pred)
        addrs, lines = self._addrs_and_lines(base, stride_bytes, self.vl, itemsize, mask)
        idx = self._element_indices(buf, addrs, itemsize, "vload")
        if mask is None:
            data = buf.array[idx]
        else:
            data = np.zeros(self.vl, buf.array.dtype)
            data[mask] = buf.array[idx]
        self.vregs[vreg] = data
        stall = self._charge_lines(lines)
        span = int(addrs.max() - addrs.min()) + itemsize if len(addrs) else 0
        self._emit("vload", self.vl, cost, "strip_compute", stalls=stall,
                   addr=int(addrs.min()) if len(addrs) else base, span=span)

    def _exec_store(self, vreg: int, base: int, stride_bytes: int,
                    pred: int | None) -> None:
        self._check_vreg(vreg)
        cost = self.config.cost.strip_compute
        if self.vl == 0:
            self._emit("vstore", 0, cost, "strip_compute")
            return
        data = self.vregs[vreg]
        if data is None or len(data) != self.vl:
            raise ConfigError(f"v{vreg} does not hold {self.vl} elements")
        try:
            buf = self.space.buffer_at(base, 1)
        except MemoryFault:
            self._emit("fault", self.vl, 0, None, addr=base, span=1)
            raise
        itemsize = buf.array.itemsize
        if data.dtype != buf.array.dtype:
            raise ShapeError(
                f"vstore dtype mismatch: v{vreg} holds {data.dtype}, "
                f"buffer {buf.name!r} is {buf.array.dtype}"
            )
        mask = self._pred_mask(pred)
        addrs, lines = self._addrs_and_lines(base, stride_bytes, self.vl, itemsize, mask)
        idx = self._element_indices(buf, addrs, itemsize, "vstore")
        buf.array[idx] = data if mask is None else data[mask]
        stall = self._charge_lines(lines)
        span = int(addrs.max() - addrs.min()) + itemsize if len(addrs) else 0
        self._emit("vstore", self.vl, cost, "strip_compute", stalls=stall,
                   addr=int(addrs.min()) if len(addrs) else base, span=span)

    def _elem_stride_bytes(self, base: int, stride_elems: int) -> int:
        if self.vl == 0:
            return 0
        try:
            itemsize = self.space.buffer_at(base, 1).array.itemsize
        except MemoryFault:
            self._emit("fault", self.vl, 0, None, addr=base, span=1)
            raise
        return stride_elems * itemsize

    def vload(self, vreg: int, areg_base: int, stride_elems: int = 1,
              pred: int | None = None) -> None:
        base = self.aregs[areg_base]
        self._exec_load(vreg, base, self._elem_stride_bytes(base, stride_elems), pred)

    def vstore(self, vreg: int, areg_base: int, stride_elems: int = 1,
               pred: int | None = None) -> None:
        base = self.aregs[areg_base]
        self._exec_store(vreg, base, self._elem_stride_bytes(base, stride_elems), pred)

    # -- vector fetch -----------------------------------------------------------
    def _stride_bytes(self, instr, base: int) -> int:
        if instr.stride_areg is not None:
            return self.aregs[instr.stride_areg]
        return self._elem_stride_bytes(base, instr.stride_elems)

    def vfetch(self, kernel: str | VectorKernelProgram, args: dict | None = None) -> None:
        """Dispatch a kernel program; executes its body once at the current vl."""
        if isinstance(kernel, VectorKernelProgram):
            program = kernel
        else:
            program = self._kernels.get(kernel)
            if program is None:
                raise DispatchError(f"unknown kernel {kernel!r}")
        nvreg, npred = self.vcfg
        if program.vregs > nvreg or program.pregs > npred:
            raise ConfigError(
                f"kernel {program.name!r} needs {program.vregs} vregs/"
                f"{program.pregs} pregs, configured {self.vcfg}"
            )
        self.memory.advance_strip()
        self._emit("vf", self.vl, self.config.cost.fetch_dispatch, "fetch_dispatch")
        if self.vl == 0:
            return
        args = args or {}
        for instr in program.body:
            if isinstance(instr, VLoad):
                base = self.aregs[instr.base_areg]
                self._exec_load(instr.vreg, base, self._stride_bytes(instr, base), None)
            elif isinstance(instr, VStore):
                base = self.aregs[instr.base_areg]
                self._exec_store(instr.vreg, base, self._stride_bytes(instr, base), None)
            else:  # VMap
                fn = _VMAP_FNS.get(instr.fn)
                if fn is None:
                    raise DispatchError(f"unknown vmap function {instr.fn!r}")
                self._check_vreg(instr.dst)
                self._check_vreg(instr.src)
                src = self.vregs[instr.src]
                if src is None or len(src) != self.vl:
                    raise ConfigError(f"v{instr.src} does not hold {self.vl} elements")
                self.vregs[instr.dst] = fn(src, **args)
                self._emit("vmap", self.vl, self.config.cost.strip_compute,
                           "strip_compute")

    def fence(self) -> None:
        self._emit("fence", 0, self.config.cost.fence, "fence")

    # -- accounting ---------------------------------------------------------------
    def cycles(self) -> tuple[int, dict]:
        breakdown = dict(self._class_cycles)
        breakdown["stall"] = self._stalls
        total = sum(self._class_cycles.values()) + self._stalls
        return total, breakdown

    def trace_lines(self) -> list[str]:
        return [f"{e.seq},{e.mnemonic},{e.vl},{e.cycles},{e.stalls}" for e in self.trace]

    def summary(self) -> dict:
        total, breakdown = self.cycles()
        return {
            "total_cycles": total,
            "breakdown": breakdown,
            "instructions": len(self.trace),
            "memory": self.memory.stats.as_dict(),
        }


def lint_trace(trace) -> list[str]:
    """Flag scalar reads of vector-written ranges that precede a fence."""
    pending: list[tuple[int, int]] = []
    violations = []
    for e in trace:
        if e.mnemonic == "vstore" and e.addr is not None and e.span:
            pending.append((e.addr, e.addr + e.span))
        elif e.mnemonic == "fence":
            pending.clear()
        elif e.mnemonic == "scalar-load" and e.addr is not None:
            lo, hi = e.addr, e.addr + e.span
            if any(lo < phi and plo < hi for plo, phi in pending):
                violations.append(
                    f"seq {e.seq}: scalar read of vector-written memory before fence"
                )
    return violations
