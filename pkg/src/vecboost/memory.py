"""Two-level set-associative LRU cache model with a software-prefetch queue.

The model prices each cache-line touch at one of three levels: l1 hit, l2
hit, or miss (service from memory). Scalar-port accesses walk L1 then L2;
vector-port accesses go straight to L2 when `vector_l2_direct` is set (the
default), modeling a decoupled vector unit that shares only the outer cache.

Stall accounting: `stall_cycles` counts latency in excess of an L1 hit, the
portion a pipelined core actually idles for. A run whose accesses all hit L1
therefore reports zero stalls.

Prefetch is the minimum mechanism that shows the effect of injected hint
instructions: a hint enqueues a line; an access to that line issued at least
`prefetch_distance` strips later is priced as an L1 hit and counted as
`prefetch_useful`. Hints never mutate LRU state, so enabling them cannot
make any access slower (monotonicity). The hierarchy is non-inclusive,
write-allocate, with no read/write latency distinction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MemoryFault

LINE_BYTES = 64


@dataclass
class CacheConfig:
    l1_size: int = 16 * 1024
    l1_ways: int = 4
    line_bytes: int = LINE_BYTES
    l2_size: int = 4 * 1024 * 1024
    l2_ways: int = 16
    l1_hit: int = 2
    l2_hit: int = 20
    miss: int = 82
    prefetch_distance: int = 1
    vector_l2_direct: bool = True

    def __post_init__(self) -> None:
        for name in ("l1_hit", "l2_hit", "miss"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.prefetch_distance < 0:
            raise ConfigError("prefetch_distance must be >= 0")
        for size, ways, label in ((self.l1_size, self.l1_ways, "l1"),
                                  (self.l2_size, self.l2_ways, "l2")):
            if ways < 1 or self.line_bytes < 1 or size % (ways * self.line_bytes):
                raise ConfigError(
                    f"{label}_size {size} not divisible by ways*line "
                    f"({ways}*{self.line_bytes})"
                )


@dataclass
class CacheStats:
    accesses: int = 0
    l1_hits: int = 0
    l2_hits: int = 0
    misses: int = 0
    prefetch_issued: int = 0
    prefetch_useful: int = 0
    stall_cycles: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


class SetAssocCache:
    """One set-associative LRU array. Ways are kept MRU-first per set."""

    def __init__(self, size: int, ways: int, line_bytes: int):
        self.ways = ways
        self.num_sets = size // (ways * line_bytes)
        self.sets: list[list[int]] = [[] for _ in range(self.num_sets)]

    def lookup(self, line: int) -> bool:
        """Touch `line`; True on hit (moves it to MRU)."""
        s = self.sets[line % self.num_sets]
        try:
            s.remove(line)
        except ValueError:
            return False
        s.insert(0, line)
        return True

    def fill(self, line: int) -> None:
        s = self.sets[line % self.num_sets]
        if len(s) >= self.ways:
            s.pop()
        s.insert(0, line)


@dataclass
class Buffer:
    name: str
    base: int
    nbytes: int
    array: np.ndarray

    @property
    def end(self) -> int:
        return self.base + self.nbytes


class AddressSpace:
    """Byte-addressed bump allocator mapping named numpy buffers.

    Buffers are line-aligned so no two buffers share a cache line.
    """

    def __init__(self, base: int = 0x10000, line_bytes: int = LINE_BYTES):
        self._next = base
        self.line_bytes = line_bytes
        self._buffers: list[Buffer] = []  # sorted by base

    def register(self, name: str, array: np.ndarray) -> Buffer:
        arr = np.ascontiguousarray(array)
        if arr.ndim != 1:
            raise ConfigError(f"buffer {name!r} must be 1-D, got shape {arr.shape}")
        buf = Buffer(name=name, base=self._next, nbytes=arr.nbytes, array=arr)
        self._buffers.append(buf)
        self._next += -(-arr.nbytes // self.line_bytes) * self.line_bytes
        return buf

    def buffer_at(self, addr: int, width: int = 1) -> Buffer:
        """The buffer fully containing [addr, addr+width); MemoryFault otherwise."""
        for buf in self._buffers:
            if buf.base <= addr and addr + width <= buf.end:
                return buf
        raise MemoryFault(f"address 0x{addr:x}+{width} maps to no registered buffer")

    def is_mapped(self, addr: int) -> bool:
        return any(b.base <= addr < b.end for b in self._buffers)


class CacheModel:
    """Latency model per the module docstring. One instance per simulation."""

    def __init__(self, config: CacheConfig | None = None, space: AddressSpace | None = None):
        self.config = config or CacheConfig()
        self.space = space or AddressSpace(line_bytes=self.config.line_bytes)
        self.l1 = SetAssocCache(self.config.l1_size, self.config.l1_ways, self.config.line_bytes)
        self.l2 = SetAssocCache(self.config.l2_size, self.config.l2_ways, self.config.line_bytes)
        self.stats = CacheStats()
        self._pending: dict[int, int] = {}  # line -> strip at hint issue
        self._strip = 0

    # -- strip clock -------------------------------------------------------
    def advance_strip(self) -> None:
        self._strip += 1

    # -- accesses ----------------------------------------------------------
    def access(self, addr: int, width: int = 1, kind: str = "read", port: str = "scalar") -> int:
        """Charge an access of `width` bytes at `addr`; returns total latency.

        Straddling accesses charge each touched line exactly once.
        """
        self.space.buffer_at(addr, width)
        lb = self.config.line_bytes
        first, last = addr // lb, (addr + width - 1) // lb
        return self.access_lines(range(first, last + 1), port=port)

    def access_lines(self, lines, port: str = "scalar") -> int:
        """Charge a sequence of (pre-validated) line touches; returns latency."""
        total = 0
        for line in lines:
            total += self._access_line(int(line), port)
        return total

    def access_run(self, line: int, count: int, port: str = "scalar") -> int:
        """One classified touch plus `count - 1` immediate re-touches.

        A line just accessed is resident at the level that served it, so
        repeats are priced at that port's best latency without LRU churn.
        """
        if count < 1:
            return 0
        lat = self._access_line(line, port)
        if count > 1:
            cfg = self.config
            if port == "vector" and cfg.vector_l2_direct:
                repeat, bucket = cfg.l2_hit, "l2_hits"
            else:
                repeat, bucket = cfg.l1_hit, "l1_hits"
            st = self.stats
            st.accesses += count - 1
            setattr(st, bucket, getattr(st, bucket) + count - 1)
            st.stall_cycles += (count - 1) * max(0, repeat - cfg.l1_hit)
            lat += (count - 1) * repeat
        return lat

    def _access_line(self, line: int, port: str) -> int:
        cfg = self.config
        st = self.stats
        st.accesses += 1

        # placement evolves identically whether or not the line was hinted
        if port == "vector" and cfg.vector_l2_direct:
            if self.l2.lookup(line):
                level = "l2"
            else:
                level = "miss"
                self.l2.fill(line)
        else:
            if self.l1.lookup(line):
                level = "l1"
            elif self.l2.lookup(line):
                level = "l2"
                self.l1.fill(line)
            else:
                level = "miss"
                self.l2.fill(line)
                self.l1.fill(line)

        issued = self._pending.get(line)
        if issued is not None and self._strip - issued >= cfg.prefetch_distance:
            del self._pending[line]
            st.prefetch_useful += 1
            st.l1_hits += 1
            lat = cfg.l1_hit
        elif level == "l1":
            st.l1_hits += 1
            lat = cfg.l1_hit
        elif level == "l2":
            st.l2_hits += 1
            lat = cfg.l2_hit
        else:
            st.misses += 1
            lat = cfg.miss
        st.stall_cycles += max(0, lat - cfg.l1_hit)
        return lat

    # -- prefetch ----------------------------------------------------------
    def prefetch_hint(self, addr: int) -> None:
        """Enqueue a line fill; hints to unmapped addresses are dropped."""
        if not self.space.is_mapped(addr):
            return
        self.stats.prefetch_issued += 1
        self._pending.setdefault(addr // self.config.line_bytes, self._strip)

    # -- bookkeeping -------------------------------------------------------
    def reset(self) -> None:
        self.stats = CacheStats()
        self._pending.clear()
        self._strip = 0
        self.l1 = SetAssocCache(self.config.l1_size, self.config.l1_ways, self.config.line_bytes)
        self.l2 = SetAssocCache(self.config.l2_size, self.config.l2_ways, self.config.line_bytes)


class ZeroLatencyMemory:
    """Stand-in memory model: every access is free, no cache state.

    Used for pure functional runs and for pinning compute-only cycle counts.
    """

    def __init__(self, space: AddressSpace | None = None):
        self.space = space or AddressSpace()
        self.stats = CacheStats()
        self.config = None

    def advance_strip(self) -> None:
        pass

    def access(self, addr: int, width: int = 1, kind: str = "read", port: str = "scalar") -> int:
        self.space.buffer_at(addr, width)
        self.stats.accesses += 1
        return 0

    def access_lines(self, lines, port: str = "scalar") -> int:
        self.stats.accesses += len(lines)
        return 0

    def access_run(self, line: int, count: int, port: str = "scalar") -> int:
        self.stats.accesses += count
        return 0

    def prefetch_hint(self, addr: int) -> None:
        if self.space.is_mapped(addr):
            self.stats.prefetch_issued += 1

    def reset(self) -> None:
        self.stats = CacheStats()
