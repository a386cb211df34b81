"""Trace-driven DRAM row-buffer page-policy simulator with compact predictors."""

from .addrmap import DecodedAddress, DramGeometry, MappingScheme, decode, encode, participant_bits
from .dram import AccessClass, RunResult, SchedulerMode, simulate
from .errors import AddressRangeError, ConfigError, TraceParseError, UsageError
from .metrics import OracleBounds, SimReport, accuracy, build_report, oracle
from .policy import POLICY_NAMES, IntelParams, PolicyDecision, make_policy, scaling_table, storage_cost
from .trace import GeneratorKind, GeneratorSpec, Trace, generate, mix, parse, serialize

__version__ = "0.1.0"
