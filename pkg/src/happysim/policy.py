"""Page-closure predictors.

Every policy exposes ``decide(decoded, addr) -> PolicyDecision`` (called right
before an access) and ``train(decoded, addr, outcome)`` (called right after,
with the ``AccessOutcome`` from :func:`happysim.dram.access`). Setting
``policy.training = False`` freezes a predictor at its initial state.

Implemented: open, close, fixed_open, hybrid, hybrid_happy, intel_adaptive,
intel_happy. The ``*_happy`` variants replace per-row / per-bank state with a
pair of predictor units per participant address bit (one consulted when the
bit is 1, one when it is 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .addrmap import MappingScheme, participant_bits
from .dram import AccessClass
from .errors import ConfigError

POLICY_NAMES = ("open", "close", "fixed_open", "hybrid", "intel_adaptive",
                "hybrid_happy", "intel_happy")


@dataclass(frozen=True)
class PolicyDecision:
    close_now: bool
    timeout: float = math.inf

    def __post_init__(self):
        if not self.close_now and not self.timeout > 0:
            raise ValueError(f"keep-open timeout must be positive, got {self.timeout!r}")

    @classmethod
    def keep_open(cls, timeout=math.inf):
        return cls(False, timeout)

    def __str__(self):
        if self.close_now:
            return "close"
        return "open" if math.isinf(self.timeout) else f"open({self.timeout})"


CLOSE_NOW = PolicyDecision(True, 0)
KEEP_OPEN = PolicyDecision(False, math.inf)


class SaturatingCounter:
    __slots__ = ("width", "value", "max")

    def __init__(self, width=2, value=0):
        self.width = width
        self.max = (1 << width) - 1
        if not 0 <= value <= self.max:
            raise ValueError(f"initial value {value} outside [0, {self.max}]")
        self.value = value

    def increment(self):
        if self.value < self.max:
            self.value += 1

    def decrement(self):
        if self.value > 0:
            self.value -= 1

    @property
    def msb(self):
        return self.value >> (self.width - 1)

    def __repr__(self):
        return f"SaturatingCounter(width={self.width}, value={self.value})"


def _flat_row(decoded, geo):
    return (((decoded.channel * geo.ranks + decoded.rank) * geo.banks + decoded.bank)
            * geo.rows + decoded.row)


def _flat_bank(decoded, geo):
    return (decoded.channel * geo.ranks + decoded.rank) * geo.banks + decoded.bank


class PagePolicy:
    name = "base"

    def __init__(self, geo):
        self.geo = geo
        self.training = True

    def decide(self, decoded, addr):
        raise NotImplementedError

    def train(self, decoded, addr, outcome):
        pass

    def storage_cost(self):
        return storage_cost(self.name, self.geo)

    def __repr__(self):
        return f"{type(self).__name__}()"


class OpenPage(PagePolicy):
    name = "open"

    def decide(self, decoded, addr):
        return KEEP_OPEN


class ClosePage(PagePolicy):
    name = "close"

    def decide(self, decoded, addr):
        return CLOSE_NOW


class FixedOpen(PagePolicy):
    """Keep every row open for a fixed time (tRC by default)."""

    name = "fixed_open"

    def __init__(self, geo, timeout=None):
        super().__init__(geo)
        self.timeout = geo.tRC if timeout is None else timeout
        self._decision = PolicyDecision.keep_open(self.timeout)

    def decide(self, decoded, addr):
        return self._decision


class Hybrid(PagePolicy):
    """One saturating counter per DRAM row.

    Counters start at zero (open-page). A miss increments the accessed row's
    counter, a hit decrements it; page-empties leave it alone. The row is
    closed after the access when the counter's upper half is reached.
    """

    name = "hybrid"

    def __init__(self, geo, counter_bits=2):
        super().__init__(geo)
        self.counter_bits = counter_bits
        self.cmax = (1 << counter_bits) - 1
        self.close_at = 1 << (counter_bits - 1)
        self.counters = {}  # flat row -> value; absent means 0

    def decide(self, decoded, addr):
        if self.counters.get(_flat_row(decoded, self.geo), 0) >= self.close_at:
            return CLOSE_NOW
        return KEEP_OPEN

    def train(self, decoded, addr, outcome):
        if not self.training or outcome.cls is AccessClass.EMPTY:
            return
        key = _flat_row(decoded, self.geo)
        value = self.counters.get(key, 0)
        if outcome.cls is AccessClass.MISS:
            value = min(self.cmax, value + 1)
        else:
            value = max(0, value - 1)
        self.counters[key] = value

    def storage_cost(self):
        return storage_cost(self.name, self.geo, hybrid_bits=self.counter_bits)


class HybridHappy(PagePolicy):
    """Hybrid predictor keyed by participant address bits.

    Each participant bit ``b`` owns two counters; the one matching the bit's
    value in the accessed address is consulted and trained. ``decision`` is
    ``"majority"`` (close when more than half the consulted counters have
    their MSB set; a tie keeps the row open) or ``"aggregation"`` (close when
    the sum of consulted counters reaches ``nbits * counter_max / 2``).
    """

    name = "hybrid_happy"

    def __init__(self, geo, scheme=MappingScheme.ROW_LOCALITY, decision="majority", counter_bits=2):
        super().__init__(geo)
        if decision not in ("majority", "aggregation"):
            raise ConfigError(f"happy.decision must be 'majority' or 'aggregation', got {decision!r}")
        self.decision = decision
        self.counter_bits = counter_bits
        self.cmax = (1 << counter_bits) - 1
        self.msb_at = 1 << (counter_bits - 1)
        self.bits = participant_bits(geo, scheme)
        self.ones = [0] * len(self.bits)
        self.zeros = [0] * len(self.bits)
        self.threshold = len(self.bits) * self.cmax / 2

    def _matching(self, addr):
        ones, zeros = self.ones, self.zeros
        return [ones[k] if (addr >> b) & 1 else zeros[k] for k, b in enumerate(self.bits)]

    def decide(self, decoded, addr):
        values = self._matching(addr)
        if self.decision == "majority":
            votes = sum(1 for v in values if v >= self.msb_at)
            return CLOSE_NOW if 2 * votes > len(values) else KEEP_OPEN
        return CLOSE_NOW if sum(values) >= self.threshold else KEEP_OPEN

    def train(self, decoded, addr, outcome):
        if not self.training or outcome.cls is AccessClass.EMPTY:
            return
        step = 1 if outcome.cls is AccessClass.MISS else -1
        cmax = self.cmax
        for k, b in enumerate(self.bits):
            table = self.ones if (addr >> b) & 1 else self.zeros
            table[k] = min(cmax, max(0, table[k] + step))

    def storage_cost(self):
        return storage_cost(self.name, self.geo, hybrid_bits=self.counter_bits,
                            nbits=len(self.bits))


@dataclass(frozen=True)
class IntelParams:
    """Tunables of the timeout predictors, in DRAM cycles / timeout ticks.

    ``None`` fields derive from the geometry: ``tick_cycles = tRC // 4`` and
    ``tr_init = tRC // tick_cycles``. ``happy_tr_max`` is the per-bit TR
    ceiling of intel_happy and defaults to ``tr_max``.
    """

    check_interval: int = 128
    low_threshold: int = 6
    high_threshold: int = 10
    mc_bits: int = 4
    mc_init: int = 8
    tr_init: int | None = None
    tr_min: int = 1
    tr_max: int = 16
    tick_cycles: int | None = None
    happy_tr_max: int | None = None

    @classmethod
    def from_mapping(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown intel keys: {', '.join(sorted(unknown))}")
        return cls(**values)

    def resolve(self, geo):
        tick = self.tick_cycles if self.tick_cycles is not None else max(1, geo.tRC // 4)
        tr_init = self.tr_init if self.tr_init is not None else max(1, geo.tRC // tick)
        happy_max = self.happy_tr_max if self.happy_tr_max is not None else self.tr_max
        out = IntelParams(self.check_interval, self.low_threshold, self.high_threshold, self.mc_bits,
                          self.mc_init, tr_init, self.tr_min, self.tr_max, tick, happy_max)
        out.validate()
        return out

    def validate(self):
        mc_max = (1 << self.mc_bits) - 1
        if self.check_interval < 1:
            raise ConfigError("intel.check_interval must be >= 1")
        if not 0 <= self.mc_init <= mc_max:
            raise ConfigError(f"intel.mc_init must lie in [0, {mc_max}]")
        if not 0 <= self.low_threshold <= self.high_threshold <= mc_max:
            raise ConfigError("intel thresholds must satisfy 0 <= low <= high <= mc max")
        if not 1 <= self.tr_min <= self.tr_max:
            raise ConfigError("intel TR bounds must satisfy 1 <= tr_min <= tr_max")
        if not self.tr_min <= self.tr_init <= self.tr_max:
            raise ConfigError(f"intel.tr_init={self.tr_init} outside [{self.tr_min}, {self.tr_max}]")
        if self.tick_cycles < 1:
            raise ConfigError("intel.tick_cycles must be >= 1")
        if self.happy_tr_max < self.tr_min:
            raise ConfigError("intel.happy_tr_max must be >= tr_min")


class MonitorUnit:
    """Mistake counter plus timeout register, re-tuned every ``interval`` updates."""

    __slots__ = ("mc", "tr", "count", "p", "tr_cap")

    def __init__(self, params, tr_cap=None):
        self.p = params
        self.tr_cap = params.tr_max if tr_cap is None else tr_cap
        self.mc = SaturatingCounter(params.mc_bits, params.mc_init)
        self.tr = min(params.tr_init, self.tr_cap)
        self.count = 0

    def observe(self, outcome, tRP):
        if outcome.cls is AccessClass.MISS:
            if outcome.idle_before is not None and outcome.idle_before >= tRP:
                self.mc.decrement()
        elif outcome.cls is AccessClass.EMPTY and outcome.lost_hit:
            self.mc.increment()
        self.count += 1
        if self.count >= self.p.check_interval:
            self.count = 0
            if self.mc.value > self.p.high_threshold:
                self.tr = min(self.tr_cap, self.tr + 1)
            elif self.mc.value < self.p.low_threshold:
                self.tr = max(self.p.tr_min, self.tr - 1)
            self.mc.value = self.p.mc_init


class IntelAdaptive(PagePolicy):
    """Per-bank adaptive timeout.

    Each bank keeps the row open for ``TR * tick_cycles`` cycles. A miss that
    arrived after the bank had been idle for at least tRP (the row could have
    been closed in time) decrements the mistake counter; a page-empty to the
    row that was just closed increments it. Every ``check_interval`` accesses
    to the bank TR moves one step toward fewer mistakes and MC is reset.
    """

    name = "intel_adaptive"

    def __init__(self, geo, params=None):
        super().__init__(geo)
        self.params = (params or IntelParams()).resolve(geo)
        self.units = [MonitorUnit(self.params) for _ in range(geo.total_banks)]
        self._decisions = {}

    def _decision(self, ticks):
        d = self._decisions.get(ticks)
        if d is None:
            d = self._decisions[ticks] = PolicyDecision.keep_open(ticks * self.params.tick_cycles)
        return d

    def decide(self, decoded, addr):
        return self._decision(self.units[_flat_bank(decoded, self.geo)].tr)

    def train(self, decoded, addr, outcome):
        if self.training:
            self.units[_flat_bank(decoded, self.geo)].observe(outcome, self.geo.tRP)

    def storage_cost(self):
        return storage_cost(self.name, self.geo, mc_bits=self.params.mc_bits,
                            tr_max=self.params.tr_max)


class IntelHappy(PagePolicy):
    """Adaptive timeout assembled from per-address-bit monitor units.

    Each participant bit has a monitor unit for value 1 and one for value 0.
    The open time for an access is the sum of the TRs of the matching units,
    scaled so that all units at ``happy_tr_max`` give exactly ``tr_max``
    ticks (the same ceiling as one per-bank register). Mistake counting is the
    per-bank rule applied to every matching unit; each unit re-tunes after
    ``check_interval`` of its own updates.
    """

    name = "intel_happy"

    def __init__(self, geo, scheme=MappingScheme.ROW_LOCALITY, params=None):
        super().__init__(geo)
        self.params = p = (params or IntelParams()).resolve(geo)
        self.bits = participant_bits(geo, scheme)
        n = len(self.bits)
        self.ones = [MonitorUnit(p, p.happy_tr_max) for _ in range(n)]
        self.zeros = [MonitorUnit(p, p.happy_tr_max) for _ in range(n)]
        # cycles per unit of summed per-bit TR
        self.scale = p.tr_max * p.tick_cycles / (max(n, 1) * p.happy_tr_max)
        self._cache = {}

    def _units(self, addr):
        return [self.ones[k] if (addr >> b) & 1 else self.zeros[k] for k, b in enumerate(self.bits)]

    def timeout_cycles(self, addr):
        """Open time (cycles) the current state assigns to ``addr``."""
        total = sum(u.tr for u in self._units(addr))
        return max(1, round(total * self.scale))

    def decide(self, decoded, addr):
        cycles = self.timeout_cycles(addr)
        d = self._cache.get(cycles)
        if d is None:
            d = self._cache[cycles] = PolicyDecision.keep_open(cycles)
        return d

    def train(self, decoded, addr, outcome):
        if not self.training:
            return
        tRP = self.geo.tRP
        for unit in self._units(addr):
            unit.observe(outcome, tRP)

    def storage_cost(self):
        return storage_cost(self.name, self.geo, mc_bits=self.params.mc_bits,
                            tr_max=self.params.tr_max, happy_tr_max=self.params.happy_tr_max,
                            nbits=len(self.bits))


@dataclass(frozen=True)
class StorageCost:
    policy: str
    counters: int
    bits: int
    bytes: int


def _width(max_value):
    return max(1, math.ceil(math.log2(max_value + 1)))


def storage_cost(policy, geo, *, hybrid_bits=2, mc_bits=4, tr_max=16, happy_tr_max=None, nbits=None):
    """Predictor counters/registers and their storage for ``policy`` on ``geo``.

    Counter counts follow the closed forms

        hybrid          X*Y*Z*W
        hybrid_happy    (log2 X + log2 Y + log2 Z + log2 W) * 2
        intel_adaptive  (X*Y*Z) * 2          (TR + MC per bank)
        intel_happy     (log2 X + log2 Y + log2 Z + log2 W) * 4

    Static and fixed-open policies carry no predictor state. ``bytes`` rounds
    every counter up to whole bytes individually; ``bits`` is the packed size.
    """
    if nbits is None:
        nbits = sum(int(v).bit_length() - 1 for v in (geo.channels, geo.ranks, geo.banks, geo.rows))
    if happy_tr_max is None:
        happy_tr_max = tr_max
    nbanks = geo.channels * geo.ranks * geo.banks
    if policy in ("open", "close", "fixed_open"):
        widths = []
    elif policy == "hybrid":
        widths = [(nbanks * geo.rows, hybrid_bits)]
    elif policy == "hybrid_happy":
        widths = [(2 * nbits, hybrid_bits)]
    elif policy == "intel_adaptive":
        widths = [(nbanks, mc_bits), (nbanks, _width(tr_max))]
    elif policy == "intel_happy":
        widths = [(2 * nbits, mc_bits), (2 * nbits, _width(happy_tr_max))]
    else:
        raise ConfigError(f"unknown policy {policy!r}")
    counters = sum(c for c, _ in widths)
    bits = sum(c * w for c, w in widths)
    nbytes = sum(c * math.ceil(w / 8) for c, w in widths)
    return StorageCost(policy, counters, bits, nbytes)


def scaling_table(capacities, *, rank_bytes=2 << 30, banks=8, columns=128, line_bytes=64,
                  channels=1, **cost_kw):
    """Storage of every dynamic policy across memory sizes.

    ``capacities`` are in bytes. Each row holds the geometry, the counters and
    bytes per policy and the original / HAPPY ratios.
    """
    from .addrmap import DramGeometry

    rows = []
    for cap in capacities:
        geo = DramGeometry.from_capacity(int(cap), rank_bytes=rank_bytes, banks=banks,
                                         columns=columns, line_bytes=line_bytes, channels=channels)
        costs = {name: storage_cost(name, geo, **cost_kw)
                 for name in ("hybrid", "hybrid_happy", "intel_adaptive", "intel_happy")}
        rows.append({
            "capacity_bytes": int(cap),
            "channels": geo.channels,
            "ranks": geo.ranks,
            "banks": geo.banks,
            "rows": geo.rows,
            **{f"{k}_counters": c.counters for k, c in costs.items()},
            **{f"{k}_bytes": c.bytes for k, c in costs.items()},
            "hybrid_ratio": costs["hybrid"].counters / costs["hybrid_happy"].counters,
            "intel_ratio": costs["intel_adaptive"].counters / costs["intel_happy"].counters,
            "hybrid_bytes_ratio": costs["hybrid"].bytes / costs["hybrid_happy"].bytes,
            "intel_bytes_ratio": costs["intel_adaptive"].bytes / costs["intel_happy"].bytes,
        })
    return rows


def make_policy(name, geo, scheme=MappingScheme.ROW_LOCALITY, *, happy_decision="majority",
                hybrid_bits=2, happy_bits=2, intel=None, fixed_timeout=None, training=True):
    """Build a policy instance by its config name."""
    scheme = MappingScheme.parse(scheme)
    if name == "open":
        pol = OpenPage(geo)
    elif name == "close":
        pol = ClosePage(geo)
    elif name == "fixed_open":
        pol = FixedOpen(geo, fixed_timeout)
    elif name == "hybrid":
        pol = Hybrid(geo, hybrid_bits)
    elif name == "hybrid_happy":
        pol = HybridHappy(geo, scheme, happy_decision, happy_bits)
    elif name == "intel_adaptive":
        pol = IntelAdaptive(geo, intel)
    elif name == "intel_happy":
        pol = IntelHappy(geo, scheme, intel)
    else:
        raise ConfigError(f"unknown policy {name!r} (expected one of {', '.join(POLICY_NAMES)})")
    pol.training = training
    return pol
