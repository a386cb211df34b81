"""Bank state machine, latency accounting and request scheduling.

Every access is classified as a page hit, miss (conflict) or empty against the
bank's row buffer and charged the matching cost:

    hit    tCL
    empty  tRCD + tCL
    miss   tRP + tRCD + tCL

On top of that an access may stall for a precharge still in flight (a row
closed less than tRP cycles earlier) and for the per-bank tRC
activate-to-activate gap. Auto-close timeouts are applied lazily: a bank whose
``auto_close_at`` has passed is treated as having issued its precharge at that
cycle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .addrmap import DecodedAddress, MappingScheme, decode_array


class AccessClass(str, enum.Enum):
    HIT = "hit"
    MISS = "miss"
    EMPTY = "empty"


class Op(str, enum.Enum):
    READ = "R"
    WRITE = "W"


class SchedulerMode(str, enum.Enum):
    IN_ORDER = "in_order"
    FR_FCFS = "fr_fcfs"

    @classmethod
    def parse(cls, value):
        from .errors import ConfigError

        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", "_"))
        except ValueError:
            raise ConfigError(f"unknown scheduler {value!r} (expected in_order or fr_fcfs)") from None


@dataclass(frozen=True)
class MemoryRequest:
    arrival: int
    op: Op
    addr: int
    source: int = 0


@dataclass
class BankState:
    open_row: int | None = None
    busy_until: int = 0
    auto_close_at: float | None = None
    last_closed_row: int | None = None
    last_close_cycle: int | None = None
    # bookkeeping beyond the row register
    precharge_done: int = 0
    last_activate: int | None = None
    last_access_end: int | None = None
    timeouts: int = 0

    def close(self, cycle, tRP):
        """Precharge the open row at ``cycle``."""
        self.last_closed_row = self.open_row
        self.last_close_cycle = cycle
        self.open_row = None
        self.auto_close_at = None
        self.precharge_done = cycle + tRP

    def expire(self, now, tRP):
        """Fire a pending auto-close whose deadline is at or before ``now``."""
        if self.auto_close_at is not None and self.auto_close_at <= now:
            self.close(int(self.auto_close_at), tRP)
            self.timeouts += 1
            return True
        return False

    def row_open_at(self, row, now):
        if self.open_row != row:
            return False
        return self.auto_close_at is None or self.auto_close_at > now


@dataclass(frozen=True)
class AccessOutcome:
    cls: AccessClass
    service_latency: int
    completion: int
    start: int = 0
    stall: int = 0
    # cycles the bank sat idle since its previous access completed (None on first touch)
    idle_before: int | None = None
    # page-empty to the row that was last closed in this bank: a lost hit
    lost_hit: bool = False
    timed_out: bool = False


def service_latency(cls, geo):
    if cls is AccessClass.HIT:
        return geo.tCL
    if cls is AccessClass.EMPTY:
        return geo.tRCD + geo.tCL
    return geo.tRP + geo.tRCD + geo.tCL


def classify(bank, row, now, tRP=0):
    """Hit / miss / empty for ``row`` at cycle ``now``.

    An auto-close deadline at or before ``now`` is fired first, so a row whose
    timeout already elapsed classifies as empty.
    """
    bank.expire(now, tRP)
    if bank.open_row is None:
        return AccessClass.EMPTY
    if bank.open_row == row:
        return AccessClass.HIT
    return AccessClass.MISS


def access(bank, req, decision, geo, *, row, now=None):
    """Service ``req`` on ``bank`` and apply the policy ``decision``.

    ``decision`` needs ``close_now`` and ``timeout`` attributes (see
    ``happysim.policy.PolicyDecision``). Service starts at
    ``max(now, bank.busy_until)`` where ``now`` defaults to the arrival cycle.
    """
    if now is None:
        now = req.arrival
    start = max(now, bank.busy_until)
    idle_before = None if bank.last_access_end is None else start - bank.last_access_end
    timed_out = bank.expire(start, geo.tRP)
    cls = classify(bank, row, start, geo.tRP)
    lost_hit = cls is AccessClass.EMPTY and bank.last_closed_row == row
    latency = service_latency(cls, geo)

    stall = 0
    if cls is not AccessClass.HIT:
        if cls is AccessClass.EMPTY:
            stall = max(0, bank.precharge_done - start)
            activate = start + stall
        else:
            bank.close(start, geo.tRP)
            activate = start + geo.tRP
        if bank.last_activate is not None and activate < bank.last_activate + geo.tRC:
            gap = bank.last_activate + geo.tRC - activate
            stall += gap
            activate += gap
        bank.last_activate = activate
        bank.open_row = row

    completion = start + stall + latency
    bank.busy_until = completion
    bank.last_access_end = completion
    if decision.close_now:
        bank.close(completion, geo.tRP)
    elif math.isinf(decision.timeout):
        bank.auto_close_at = None
    else:
        bank.auto_close_at = completion + decision.timeout
    return AccessOutcome(cls, latency, completion, start, stall, idle_before, lost_hit, timed_out)


@dataclass
class QueueEntry:
    seq: int
    bank: int
    row: int
    bypassed: int = 0


def schedule(queue, banks, mode=SchedulerMode.FR_FCFS, now=0, bypass_cap=16):
    """Index into ``queue`` of the request to issue at ``now``, or None.

    ``queue`` is ordered oldest first. Only requests whose bank is idle are
    eligible. ``IN_ORDER`` issues strictly the oldest request. ``FR_FCFS``
    prefers the oldest eligible row hit, falling back to the oldest eligible
    request; a request bypassed ``bypass_cap`` times can no longer be
    overtaken by requests to its own bank.
    """
    if not queue:
        return None
    if mode is SchedulerMode.IN_ORDER:
        head = queue[0]
        return 0 if banks[head.bank].busy_until <= now else None

    blocked = set()
    for idx, entry in enumerate(queue):
        if entry.bypassed >= bypass_cap and entry.bank not in blocked:
            if banks[entry.bank].busy_until <= now:
                return idx
            blocked.add(entry.bank)
    first_ready = None
    for idx, entry in enumerate(queue):
        bank = banks[entry.bank]
        if entry.bank in blocked or bank.busy_until > now:
            continue
        if bank.row_open_at(entry.row, now):
            return idx
        if first_ready is None:
            first_ready = idx
    return first_ready


@dataclass
class RunResult:
    """Raw per-run counters produced by ``simulate``."""

    requests: int = 0
    hits: int = 0
    misses: int = 0
    empties: int = 0
    timeouts: int = 0
    total_latency: int = 0
    service_latency: int = 0
    stall_cycles: int = 0
    # trace indices in issue order
    order: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    latency: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    classes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    decisions: list | None = None

    @property
    def mean_latency(self):
        return self.total_latency / self.requests if self.requests else 0.0


_CLASS_CODE = {AccessClass.HIT: 0, AccessClass.MISS: 1, AccessClass.EMPTY: 2}


def simulate(trace, geo, policy, scheme=MappingScheme.ROW_LOCALITY, *,
             mode=SchedulerMode.IN_ORDER, queue_capacity=32, bypass_cap=16,
             record_decisions=False):
    """Replay ``trace`` through one controller and return a ``RunResult``.

    The controller admits requests into a bounded queue as they arrive,
    issues at most one request per cycle, and asks ``policy`` for a
    close/keep decision right before each access, training it right after.
    """
    scheme = MappingScheme.parse(scheme)
    mode = SchedulerMode.parse(mode) if not isinstance(mode, SchedulerMode) else mode
    n = len(trace)
    arrivals = trace.arrival.tolist()
    addrs = trace.addr.tolist()
    writes = trace.is_write.tolist()
    ch, rk, bk, rw, cl = decode_array(trace.addr, geo, scheme)
    flat_bank = ((ch * geo.ranks + rk) * geo.banks + bk).tolist()
    ch, rk, bk, rw, cl = ch.tolist(), rk.tolist(), bk.tolist(), rw.tolist(), cl.tolist()

    banks = [BankState() for _ in range(geo.total_banks)]
    order = np.empty(n, dtype=np.int64)
    latency = np.empty(n, dtype=np.int64)
    classes = np.empty(n, dtype=np.int8)
    decisions = [] if record_decisions else None
    res = RunResult(requests=n)

    queue = []
    nxt = 0
    now = 0
    issued = 0
    while nxt < n or queue:
        while nxt < n and len(queue) < queue_capacity and arrivals[nxt] <= now:
            queue.append(QueueEntry(nxt, flat_bank[nxt], rw[nxt]))
            nxt += 1
        if not queue:
            now = arrivals[nxt]
            continue
        j = schedule(queue, banks, mode, now, bypass_cap)
        if j is None:
            wake = min(banks[e.bank].busy_until for e in queue if banks[e.bank].busy_until > now)
            if nxt < n and len(queue) < queue_capacity:
                wake = min(wake, arrivals[nxt])
            now = wake
            continue
        entry = queue.pop(j)
        if mode is SchedulerMode.FR_FCFS:
            for older in queue[:j]:
                older.bypassed += 1
        i = entry.seq
        decoded = DecodedAddress(ch[i], rk[i], bk[i], rw[i], cl[i])
        addr = addrs[i]
        decision = policy.decide(decoded, addr)
        bank = banks[entry.bank]
        req = MemoryRequest(arrivals[i], Op.WRITE if writes[i] else Op.READ, addr)
        outcome = access(bank, req, decision, geo, row=entry.row, now=now)
        policy.train(decoded, addr, outcome)

        code = _CLASS_CODE[outcome.cls]
        order[issued] = i
        classes[issued] = code
        latency[issued] = outcome.completion - arrivals[i]
        issued += 1
        if code == 0:
            res.hits += 1
        elif code == 1:
            res.misses += 1
        else:
            res.empties += 1
        res.service_latency += outcome.service_latency
        res.stall_cycles += outcome.stall
        if record_decisions:
            decisions.append(decision)
        now += 1

    res.timeouts = sum(b.timeouts for b in banks)
    res.order = order
    res.classes = classes
    res.latency = latency
    res.total_latency = int(latency.sum())
    res.decisions = decisions
    return res
