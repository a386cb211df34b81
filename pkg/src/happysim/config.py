"""Run configuration: TOML file + environment + command-line overrides.

Sections and keys (all optional; defaults in ``SCHEMA``)::

    [geometry]  channels ranks banks rows columns line_bytes tRCD tCL tRP tRC bus_mhz
    [mapping]   scheme = row_locality | permutation | minimalist
    [dram]      scheduler = in_order | fr_fcfs, queue_capacity, bypass_cap
    [policy]    names = [...], baseline = best_static | <policy>, training, fixed_timeout
    [hybrid]    counter_bits
    [happy]     decision = majority | aggregation, counter_bits
    [intel]     check_interval low_threshold high_threshold mc_bits mc_init
                tr_init tr_min tr_max tick_cycles happy_tr_max
    [run]       seed, out, workers
    [scaling]   capacities_gb = [...], rank_gb, banks, columns, line_bytes, channels

    [[traces]]  one table per workload, exactly one of
                path = "file.trace"
                kind = stream | uniform | zipf | phase   (+ GeneratorSpec fields)
                mix = ["name", ...]                      (names of earlier entries)
                plus name, simulate (default true), layout (generator mapping)

Overrides use ``section.key=value`` (``--set``) or environment variables
``HAPPYSIM_<SECTION>__<KEY>=value``; values are parsed as TOML literals and
fall back to plain strings. Unknown sections or keys are errors, and the same
key given different values by two override sources is an error.
"""

from __future__ import annotations

import copy
import os
import sys
from dataclasses import dataclass, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .addrmap import DramGeometry, MappingScheme
from .dram import SchedulerMode
from .errors import ConfigError
from .policy import POLICY_NAMES, IntelParams
from .trace import GeneratorSpec

ENV_PREFIX = "HAPPYSIM_"

_OPTIONAL = object()  # key has no default; absent means "derive"

SCHEMA = {
    "geometry": {f.name: f.default for f in fields(DramGeometry)},
    "mapping": {"scheme": "row_locality"},
    "dram": {"scheduler": "in_order", "queue_capacity": 32, "bypass_cap": 16},
    "policy": {"names": list(POLICY_NAMES), "baseline": "best_static", "training": True,
               "fixed_timeout": _OPTIONAL},
    "hybrid": {"counter_bits": 2},
    "happy": {"decision": "majority", "counter_bits": 2},
    "intel": {f.name: (_OPTIONAL if f.default is None else f.default) for f in fields(IntelParams)},
    "run": {"seed": 0, "out": "out", "workers": 1},
    "scaling": {"capacities_gb": [4, 8, 16, 32, 64, 128, 256, 512], "rank_gb": 2, "banks": 8,
                "columns": 128, "line_bytes": 64, "channels": 1},
}

_GEN_KEYS = {f.name for f in fields(GeneratorSpec)}
TRACE_KEYS = {"name", "path", "mix", "simulate", "layout"} | _GEN_KEYS


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _split_key(key, source):
    parts = key.split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"{source}: override key {key!r} must look like section.key")
    section, name = parts
    if section not in SCHEMA:
        raise ConfigError(f"{source}: unknown config section {section!r}")
    if name not in SCHEMA[section]:
        raise ConfigError(f"{source}: unknown config key {section}.{name}")
    return section, name


def collect_overrides(sets=(), env=None, extra=()):
    """Merge ``--set`` strings, environment variables and ``extra`` pairs.

    ``extra`` is a sequence of ``(key, value, source)`` from dedicated flags
    such as ``--seed``. Returns ``{(section, key): (value, source)}``.
    """
    env = os.environ if env is None else env
    merged = {}

    def add(key, value, source):
        section, name = _split_key(key, source)
        prev = merged.get((section, name))
        if prev is not None and prev[0] != value:
            raise ConfigError(f"conflicting overrides for {section}.{name}: "
                              f"{prev[1]} gives {prev[0]!r}, {source} gives {value!r}")
        merged[(section, name)] = (value, source)

    for var in sorted(env):
        if not var.startswith(ENV_PREFIX):
            continue
        rest = var[len(ENV_PREFIX):]
        if "__" not in rest:
            raise ConfigError(f"environment override {var} must look like {ENV_PREFIX}SECTION__KEY")
        section, name = rest.split("__", 1)
        section = section.lower()
        keys = {k.lower(): k for k in SCHEMA.get(section, {})}
        add(f"{section}.{keys.get(name.lower(), name.lower())}", _parse_value(env[var]), f"env {var}")
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, text = item.split("=", 1)
        add(key.strip(), _parse_value(text.strip()), f"--set {key.strip()}")
    for key, value, source in extra:
        add(key, value, source)
    return merged


def _check_type(section, key, value, default):
    if default is _OPTIONAL:
        return value
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}")
        value = float(value)
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be a list, got {value!r}")
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}")
    return value


@dataclass
class TraceEntry:
    name: str
    path: str | None = None
    spec: GeneratorSpec | None = None
    mix: list | None = None
    simulate: bool = True
    layout: MappingScheme | None = None


@dataclass
class RunConfig:
    geometry: DramGeometry
    scheme: MappingScheme
    scheduler: SchedulerMode
    queue_capacity: int
    bypass_cap: int
    policies: list
    baseline: str
    training: bool
    fixed_timeout: int | None
    hybrid_bits: int
    happy_decision: str
    happy_bits: int
    intel: IntelParams
    seed: int
    out: str
    workers: int
    scaling: dict
    traces: list
    resolved: dict
    base_dir: str = "."

    def policy_kwargs(self):
        return dict(happy_decision=self.happy_decision, hybrid_bits=self.hybrid_bits,
                    happy_bits=self.happy_bits, intel=self.intel,
                    fixed_timeout=self.fixed_timeout, training=self.training)


def _trace_entries(raw, seed, scheme):
    if not isinstance(raw, list):
        raise ConfigError("traces must be an array of tables ([[traces]])")
    entries = []
    seen = set()
    for idx, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigError(f"traces[{idx}] must be a table")
        unknown = set(item) - TRACE_KEYS
        if unknown:
            raise ConfigError(f"traces[{idx}]: unknown keys {', '.join(sorted(unknown))}")
        name = item.get("name", f"trace{idx}")
        if name in seen:
            raise ConfigError(f"traces[{idx}]: duplicate trace name {name!r}")
        seen.add(name)
        sources = [k for k in ("path", "kind", "mix") if k in item]
        if len(sources) != 1:
            raise ConfigError(f"traces[{idx}] ({name}): give exactly one of path, kind or mix")
        entry = TraceEntry(name=name, simulate=bool(item.get("simulate", True)))
        if "path" in item:
            extra = set(item) - {"name", "path", "simulate"}
            if extra:
                raise ConfigError(f"traces[{idx}] ({name}): keys {sorted(extra)} do not apply to file traces")
            entry.path = item["path"]
        elif "mix" in item:
            comps = item["mix"]
            if not isinstance(comps, list) or not comps:
                raise ConfigError(f"traces[{idx}] ({name}): mix must be a non-empty list of names")
            missing = [c for c in comps if c not in seen or c == name]
            if missing:
                raise ConfigError(f"traces[{idx}] ({name}): mix references unknown or later traces {missing}")
            entry.mix = list(comps)
        else:
            gen = {k: v for k, v in item.items() if k in _GEN_KEYS}
            gen.setdefault("seed", seed * 1_000_003 + idx)
            try:
                entry.spec = GeneratorSpec(**gen)
            except TypeError as exc:
                raise ConfigError(f"traces[{idx}] ({name}): {exc}") from None
            entry.layout = MappingScheme.parse(item.get("layout", scheme.value))
        entries.append(entry)
    return entries


def load_config(path=None, overrides=None, text=None):
    """Parse and validate a config file; returns a ``RunConfig``.

    ``overrides`` is the mapping produced by ``collect_overrides``.
    """
    base_dir = "."
    if text is not None:
        raw = tomllib.loads(text)
    elif path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base_dir = os.path.dirname(os.path.abspath(path))
    else:
        raw = {}
    raw = copy.deepcopy(raw)
    traces_raw = raw.pop("traces", [])
    for section in raw:
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in raw[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")

    resolved = {}
    for section, keys in SCHEMA.items():
        resolved[section] = {}
        for key, default in keys.items():
            if key in raw.get(section, {}):
                value = raw[section][key]
            elif default is _OPTIONAL:
                continue
            else:
                value = copy.deepcopy(default)
            resolved[section][key] = value
    for (section, key), (value, _source) in (overrides or {}).items():
        resolved[section][key] = value
    for section, keys in resolved.items():
        for key, value in keys.items():
            keys[key] = _check_type(section, key, value, SCHEMA[section][key])

    geometry = DramGeometry(**resolved["geometry"])
    scheme = MappingScheme.parse(resolved["mapping"]["scheme"])
    scheduler = SchedulerMode.parse(resolved["dram"]["scheduler"])
    pol = resolved["policy"]
    names = pol["names"]
    if not names:
        raise ConfigError("policy.names is empty: list at least one policy")
    for name in names:
        if name not in POLICY_NAMES:
            raise ConfigError(f"policy.names: unknown policy {name!r} (expected {', '.join(POLICY_NAMES)})")
    if len(set(names)) != len(names):
        raise ConfigError("policy.names lists a policy twice")
    if pol["baseline"] != "best_static" and pol["baseline"] not in POLICY_NAMES:
        raise ConfigError(f"policy.baseline: unknown policy {pol['baseline']!r}")
    happy = resolved["happy"]
    if happy["decision"] not in ("majority", "aggregation"):
        raise ConfigError(f"happy.decision must be majority or aggregation, got {happy['decision']!r}")
    intel = IntelParams.from_mapping(resolved["intel"])
    intel.resolve(geometry)  # validate early
    dram = resolved["dram"]
    if dram["queue_capacity"] < 1 or dram["bypass_cap"] < 0:
        raise ConfigError("dram.queue_capacity must be >= 1 and dram.bypass_cap >= 0")
    run = resolved["run"]
    if run["workers"] < 1:
        raise ConfigError("run.workers must be >= 1")
    traces = _trace_entries(traces_raw, run["seed"], scheme)
    resolved["traces"] = copy.deepcopy(traces_raw)
    return RunConfig(
        geometry=geometry, scheme=scheme, scheduler=scheduler,
        queue_capacity=dram["queue_capacity"], bypass_cap=dram["bypass_cap"],
        policies=list(names), baseline=pol["baseline"], training=pol["training"],
        fixed_timeout=pol.get("fixed_timeout"), hybrid_bits=resolved["hybrid"]["counter_bits"],
        happy_decision=happy["decision"], happy_bits=happy["counter_bits"], intel=intel,
        seed=run["seed"], out=run["out"], workers=run["workers"], scaling=resolved["scaling"],
        traces=traces, resolved=resolved, base_dir=base_dir,
    )
