"""Shared domain types, the integer timing model and run configuration.

All times are integer ticks. Bits are 0/1 and map to spins via ``1 - 2b``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterator, Mapping

import numpy as np

DARK_ID = -1


class BellSimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(BellSimError, ValueError):
    """A configuration violated one or more constraints.

    ``violations`` holds ``(kind, message)`` tuples, one per broken rule.
    """

    kind = "config"

    def __init__(self, violations: list[tuple[str, str]]):
        self.violations = list(violations)
        super().__init__("; ".join(msg for _, msg in self.violations))


class InvalidTiming(ConfigError):
    kind = "timing"


class InvalidMode(ConfigError):
    kind = "mode"


class InvalidProbability(ConfigError):
    kind = "probability"


class WrongPayload(BellSimError, TypeError):
    """A responder received a bullet whose payload it cannot interpret."""


class Side(str, enum.Enum):
    A = "A"
    B = "B"

    @property
    def code(self) -> int:
        return 0 if self is Side.A else 1


class InstructionSet(str, enum.Enum):
    I = "i"
    II = "ii"


class Strategy(str, enum.Enum):
    APP1 = "app1"
    APP2 = "app2"
    TABLE = "table"
    QM = "qm"


class Pmap(str, enum.Enum):
    OFF = "off"
    PAPER_EQ3 = "paper-eq3"
    PAPER_EQ4 = "paper-eq4"
    CALIBRATED = "calibrated"


def spin(b: int) -> int:
    """Map bit 0 to +1 and bit 1 to -1."""
    return 1 - 2 * b


@dataclass(frozen=True)
class CarriedBit:
    bit: int


@dataclass(frozen=True)
class Table:
    """Predetermined outcome for every (side, setting) pair."""

    a1: int
    a2: int
    b1: int
    b2: int

    @classmethod
    def from_index(cls, index: int) -> "Table":
        # bit order A1 A2 B1 B2, most significant first
        if not 0 <= index < 16:
            raise ValueError(f"table index must be in 0..15, got {index}")
        return cls((index >> 3) & 1, (index >> 2) & 1, (index >> 1) & 1, index & 1)

    @property
    def index(self) -> int:
        return (self.a1 << 3) | (self.a2 << 2) | (self.b1 << 1) | self.b2

    def entry(self, side: Side, setting: int) -> int:
        if side is Side.A:
            return self.a1 if setting == 1 else self.a2
        return self.b1 if setting == 1 else self.b2


Payload = CarriedBit | InstructionSet | Table


@dataclass(frozen=True)
class Bullet:
    id: int
    emission_time: int
    payload: Payload


@dataclass(frozen=True)
class DetectionRecord:
    side: Side
    setting: int
    outcome: int
    time: int
    bullet_id: int

    @property
    def is_dark(self) -> bool:
        return self.bullet_id == DARK_ID


@dataclass(frozen=True)
class TimingModel:
    period: int = 100
    delta_app1: int = 30
    delta_app2: int = 30
    window: int = 5


@dataclass(frozen=True)
class NoiseParams:
    dark_rate: float = 0.0
    drop_prob: float = 0.0
    flip_prob: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.dark_rate == 0 and self.drop_prob == 0 and self.flip_prob == 0


@dataclass(frozen=True)
class SimConfig:
    strategy: Strategy = Strategy.APP1
    n_trials: int = 10_000
    timing: TimingModel = field(default_factory=TimingModel)
    phi: float = 0.0
    pmap: Pmap = Pmap.OFF
    seed: int = 0
    noise: NoiseParams = field(default_factory=NoiseParams)
    table: int | None = None
    # fixed delay probability used when pmap is off; None -> strategy default
    p_delay: float | None = None
    b2_nodelay_not: bool = True
    # skips the "+ window < period" slot-separation checks
    allow_slot_overlap: bool = False

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["strategy"] = self.strategy.value
        d["pmap"] = self.pmap.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SimConfig":
        d = dict(d)
        d["strategy"] = Strategy(d["strategy"])
        d["pmap"] = Pmap(d["pmap"])
        d["timing"] = TimingModel(**d["timing"])
        d["noise"] = NoiseParams(**d["noise"])
        return cls(**d)

    def with_(self, **changes: Any) -> "SimConfig":
        return replace(self, **changes)

    @property
    def label(self) -> str:
        if self.strategy is Strategy.TABLE:
            return f"table:{self.table}"
        return self.strategy.value


def _int_like(x: Any) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _timing_violations(tm: TimingModel, allow_slot_overlap: bool) -> list[str]:
    out = []
    T, dt, d, w = tm.period, tm.delta_app1, tm.delta_app2, tm.window
    for name, v in (("period", T), ("delta_app1", dt), ("delta_app2", d), ("window", w)):
        if not _int_like(v):
            out.append(f"{name} must be an integer tick count, got {v!r}")
    if out:
        return out
    if T <= 0:
        out.append(f"period must be > 0 (got {T})")
    if w <= 0:
        out.append(f"window must be > 0 (got {w})")
    if w >= dt:
        out.append(f"window {w} must be < delta_app1 {dt}")
    if w >= d:
        out.append(f"window {w} must be < delta_app2 {d}")
    if not allow_slot_overlap:
        if dt + w >= T:
            out.append(f"delta_app1 + window ({dt + w}) must be < period {T}")
        if d + w >= T:
            out.append(f"delta_app2 + window ({d + w}) must be < period {T}")
    return out


def validate_config(cfg: SimConfig) -> SimConfig:
    """Return ``cfg`` unchanged if every constraint holds.

    Raises a :class:`ConfigError` subclass listing all violations. When the
    violations are of mixed kinds the base class is raised.
    """
    v: list[tuple[str, str]] = []
    v += [("timing", m) for m in _timing_violations(cfg.timing, cfg.allow_slot_overlap)]

    if not _int_like(cfg.n_trials) or cfg.n_trials < 1:
        v.append(("config", f"n_trials must be a positive integer, got {cfg.n_trials!r}"))
    if not _int_like(cfg.seed) or not -(2**63) <= cfg.seed < 2**64:
        v.append(("config", f"seed must be a 64-bit integer, got {cfg.seed!r}"))
    if not (isinstance(cfg.phi, (int, float)) and math.isfinite(cfg.phi)
            and 0.0 <= cfg.phi <= math.pi / 2 + 1e-12):
        v.append(("config", f"phi must lie in [0, pi/2], got {cfg.phi!r}"))

    s, pm = cfg.strategy, cfg.pmap
    if pm in (Pmap.PAPER_EQ3, Pmap.CALIBRATED) and s is not Strategy.APP1:
        v.append(("mode", f"pmap {pm.value} requires strategy app1, got {cfg.label}"))
    if pm is Pmap.PAPER_EQ4 and s is not Strategy.APP2:
        v.append(("mode", f"pmap {pm.value} requires strategy app2, got {cfg.label}"))
    if s is Strategy.TABLE:
        if cfg.table is None or not _int_like(cfg.table) or not 0 <= cfg.table < 16:
            v.append(("mode", f"strategy table needs an index in 0..15, got {cfg.table!r}"))
    elif cfg.table is not None:
        v.append(("mode", f"table index given for strategy {s.value}"))
    if cfg.p_delay is not None:
        if s not in (Strategy.APP1, Strategy.APP2):
            v.append(("mode", f"p_delay only applies to app1/app2, got {cfg.label}"))
        elif pm is not Pmap.OFF:
            v.append(("mode", "p_delay conflicts with a phi-dependent pmap"))

    probs = [("p_delay", cfg.p_delay), ("drop_prob", cfg.noise.drop_prob),
             ("flip_prob", cfg.noise.flip_prob)]
    for name, p in probs:
        if p is not None and not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
            v.append(("probability", f"{name} must lie in [0, 1], got {p!r}"))
    dr = cfg.noise.dark_rate
    if not (isinstance(dr, (int, float)) and math.isfinite(dr) and dr >= 0):
        v.append(("probability", f"dark_rate must be a non-negative real, got {dr!r}"))

    if not v:
        return cfg
    kinds = {k for k, _ in v}
    cls = ConfigError
    if len(kinds) == 1:
        cls = {"timing": InvalidTiming, "mode": InvalidMode,
               "probability": InvalidProbability}.get(kinds.pop(), ConfigError)
    raise cls(v)


# -- record streams ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RecordStream:
    """Time-ordered detections of one side, stored column-wise."""

    side: Side
    setting: np.ndarray
    outcome: np.ndarray
    time: np.ndarray
    bullet_id: np.ndarray

    def __post_init__(self) -> None:
        cols = []
        for name, dtype in (("setting", np.int8), ("outcome", np.int8),
                            ("time", np.int64), ("bullet_id", np.int64)):
            a = np.array(getattr(self, name), dtype=dtype).reshape(-1)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
            cols.append(a.size)
        if len(set(cols)) != 1:
            raise ValueError(f"column lengths differ: {cols}")

    @classmethod
    def empty(cls, side: Side) -> "RecordStream":
        return cls(side, [], [], [], [])

    @classmethod
    def from_records(cls, side: Side, records: list[DetectionRecord]) -> "RecordStream":
        return cls(side, [r.setting for r in records], [r.outcome for r in records],
                   [r.time for r in records], [r.bullet_id for r in records])

    def __len__(self) -> int:
        return int(self.time.size)

    def __getitem__(self, i: int) -> DetectionRecord:
        return DetectionRecord(self.side, int(self.setting[i]), int(self.outcome[i]),
                               int(self.time[i]), int(self.bullet_id[i]))

    def __iter__(self) -> Iterator[DetectionRecord]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RecordStream):
            return NotImplemented
        return self.side is other.side and all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("setting", "outcome", "time", "bullet_id"))

    def select(self, mask_or_idx: np.ndarray) -> "RecordStream":
        return RecordStream(self.side, self.setting[mask_or_idx], self.outcome[mask_or_idx],
                            self.time[mask_or_idx], self.bullet_id[mask_or_idx])

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.time) >= 0))

    def sorted(self) -> "RecordStream":
        """Sort by time; equal ticks keep older bullets first, dark counts last."""
        origin = np.where(self.bullet_id < 0, np.iinfo(np.int64).max, self.bullet_id)
        order = np.lexsort((origin, self.time))
        return self.select(order)


# -- random substreams -------------------------------------------------------

_PURPOSES = {"setting": 1, "source": 2, "branch": 3, "noise": 4, "qm": 5}


def substream(seed: int, purpose: str, side: Side | None = None) -> np.random.Generator:
    """Independent generator keyed by (seed, purpose, side).

    The k-th draw of a per-trial stream belongs to trial k; every trial consumes
    the same number of draws, so no stream depends on what another consumed.
    """
    key = (_PURPOSES[purpose], 2 if side is None else side.code)
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


# -- text options -------------------------------------------------------------

OPTION_KEYS = ("strategy", "n", "phi", "seed", "pmap", "p-delay", "period", "delta-app1",
               "delta-app2", "window", "noise-dark", "noise-drop", "noise-flip",
               "b2-nodelay-not", "allow-slot-overlap")


def parse_angle(text: str) -> float:
    """``"22.5deg"`` is degrees, a bare number is radians."""
    s = str(text).strip().lower()
    if s.endswith("deg"):
        return math.radians(float(s[:-3]))
    return float(s)


def parse_bool(text: str) -> bool:
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_strategy(text: str) -> tuple[Strategy, int | None]:
    s = str(text).strip().lower()
    if s.startswith("table:"):
        return Strategy.TABLE, int(s.split(":", 1)[1])
    if s == "table":
        return Strategy.TABLE, None
    return Strategy(s), None


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys raise."""
    out = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError([("config", f"config line {no}: expected key=value")])
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in OPTION_KEYS:
            raise ConfigError([("config", f"config line {no}: unknown key {key!r}")])
        out[key] = value
    return out


def config_from_options(opts: Mapping[str, Any], base: SimConfig | None = None) -> SimConfig:
    """Apply string (or typed) options on top of ``base``. Does not validate."""
    cfg = base or SimConfig()
    tm, nz = cfg.timing, cfg.noise
    ch: dict[str, Any] = {}
    try:
        for key, val in opts.items():
            if val is None:
                continue
            if key == "strategy":
                ch["strategy"], ch["table"] = parse_strategy(val)
            elif key == "n":
                ch["n_trials"] = int(val)
            elif key == "phi":
                ch["phi"] = parse_angle(val)
            elif key == "seed":
                ch["seed"] = int(val)
            elif key == "pmap":
                ch["pmap"] = Pmap(str(val).strip().lower())
            elif key == "p-delay":
                ch["p_delay"] = None if str(val).lower() == "none" else float(val)
            elif key in ("period", "delta-app1", "delta-app2", "window"):
                tm = replace(tm, **{key.replace("-", "_"): int(val)})
            elif key in ("noise-dark", "noise-drop", "noise-flip"):
                attr = {"noise-dark": "dark_rate", "noise-drop": "drop_prob",
                        "noise-flip": "flip_prob"}[key]
                nz = replace(nz, **{attr: float(val)})
            elif key == "b2-nodelay-not":
                ch["b2_nodelay_not"] = parse_bool(val)
            elif key == "allow-slot-overlap":
                ch["allow_slot_overlap"] = parse_bool(val)
            else:
                raise ConfigError([("config", f"unknown option {key!r}")])
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError([("config", f"bad value for {key!r}: {exc}")]) from None
    return replace(cfg, timing=tm, noise=nz, **ch)
