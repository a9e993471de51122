"""Source and detector response rules.

Every responder sees only its own side, its own setting, the bullet payload,
side-local state and a side-local random draw. There is no argument through
which the other side could leak in.

The scalar functions (``app1_respond`` and friends) define the rules one
bullet at a time. The ``*_side`` kernels apply the same rules to whole
trial arrays and are what the engine runs; the test-suite checks the two
agree record for record.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DARK_ID,
    Bullet,
    CarriedBit,
    InstructionSet,
    NoiseParams,
    RecordStream,
    Side,
    Table,
    TimingModel,
    WrongPayload,
)


@dataclass(frozen=True)
class ScheduledOutput:
    outcome: int
    emit_time: int
    setting: int
    bullet_id: int


@dataclass(frozen=True)
class StoredBit:
    outcome: int
    setting: int
    bullet_id: int


@dataclass(frozen=True)
class DetectorState:
    pending: tuple[StoredBit, ...] = ()


# -- apparatus 1 ------------------------------------------------------------


def app1_emit(trial_id: int, source, period: int = 100) -> tuple[Bullet, Bullet]:
    """Complementary bit pair. ``source`` is a Generator or an already drawn bit."""
    if isinstance(source, (int, np.integer)):
        a = int(source)
    else:
        a = int(source.integers(0, 2))
    t = trial_id * period
    return Bullet(trial_id, t, CarriedBit(a)), Bullet(trial_id, t, CarriedBit(1 - a))


def app1_respond(side: Side, setting: int, bullet: Bullet, p_delay_b2: float, u: float,
                 timing: TimingModel = TimingModel(),
                 b2_nodelay_not: bool = True) -> ScheduledOutput:
    """Apparatus 1 detector. ``u`` is this side's uniform draw for the trial.

    A1: prompt x, or NOT x after delta (u < 1/2 picks prompt).
    A2: x, prompt or after delta.
    B1: prompt x.
    B2: NOT x; delayed by delta when u < p_delay_b2, else prompt.
    """
    if not isinstance(bullet.payload, CarriedBit):
        raise WrongPayload(f"apparatus 1 expects a carried bit, got {bullet.payload!r}")
    x = bullet.payload.bit
    t, dt = bullet.emission_time, timing.delta_app1
    if side is Side.A:
        if u < 0.5:
            return ScheduledOutput(x, t, setting, bullet.id)
        out = 1 - x if setting == 1 else x
        return ScheduledOutput(out, t + dt, setting, bullet.id)
    if setting == 1:
        return ScheduledOutput(x, t, setting, bullet.id)
    if u < p_delay_b2:
        return ScheduledOutput(1 - x, t + dt, setting, bullet.id)
    return ScheduledOutput(1 - x if b2_nodelay_not else x, t, setting, bullet.id)


def app1_side(side: Side, settings: np.ndarray, bits: np.ndarray, u: np.ndarray,
              p_delay_b2: float, timing: TimingModel,
              b2_nodelay_not: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`app1_respond`; returns ``(outcome, emit_time)`` per trial."""
    n = settings.size
    t = np.arange(n, dtype=np.int64) * timing.period
    dt = timing.delta_app1
    s1 = settings == 1
    if side is Side.A:
        prompt = u < 0.5
        out = np.where(prompt | ~s1, bits, 1 - bits)
        time = t + np.where(prompt, 0, dt)
    else:
        delayed = ~s1 & (u < p_delay_b2)
        flip = ~s1 & (delayed | b2_nodelay_not)
        out = np.where(flip, 1 - bits, bits)
        time = t + np.where(delayed, dt, 0)
    return out.astype(np.int8), time.astype(np.int64)


# -- apparatus 2 ------------------------------------------------------------

# instruction value per (set, side, setting)
APP2_VALUES = {
    InstructionSet.I: {(Side.A, 1): 0, (Side.A, 2): 1, (Side.B, 1): 0, (Side.B, 2): 1},
    InstructionSet.II: {(Side.A, 1): 1, (Side.A, 2): 0, (Side.B, 1): 1, (Side.B, 2): 0},
}
# how the output leaves the detector: now, after the slight delay, at next bullet
APP2_TIMING = {
    InstructionSet.I: {(Side.A, 1): "now", (Side.A, 2): "next",
                       (Side.B, 1): "next", (Side.B, 2): "now"},
    InstructionSet.II: {(Side.A, 1): "now", (Side.A, 2): "delay",
                        (Side.B, 1): "next", (Side.B, 2): "delay"},
}


def app2_emit(trial_id: int, period: int = 100) -> tuple[Bullet, Bullet]:
    iset = InstructionSet.I if trial_id % 2 == 0 else InstructionSet.II
    t = trial_id * period
    return Bullet(trial_id, t, iset), Bullet(trial_id, t, iset)


def app2_respond(side: Side, setting: int, bullet: Bullet, state: DetectorState,
                 timing: TimingModel = TimingModel(),
                 b2_as_written: bool = True) -> tuple[list[ScheduledOutput], DetectorState]:
    """Apparatus 2 detector for one arriving bullet.

    Bits stored by the previous bullet are released first, at this bullet's
    arrival tick, labelled with the setting that stored them. With
    ``b2_as_written=False`` setting B2 skips its delay/storage and fires now.
    """
    if not isinstance(bullet.payload, InstructionSet):
        raise WrongPayload(f"apparatus 2 expects an instruction set, got {bullet.payload!r}")
    iset = bullet.payload
    t = bullet.emission_time
    out = [ScheduledOutput(s.outcome, t, s.setting, s.bullet_id) for s in state.pending]
    value = APP2_VALUES[iset][(side, setting)]
    how = APP2_TIMING[iset][(side, setting)]
    if side is Side.B and setting == 2 and not b2_as_written:
        how = "now"
    if how == "next":
        return out, DetectorState((StoredBit(value, setting, bullet.id),))
    emit = t if how == "now" else t + timing.delta_app2
    out.append(ScheduledOutput(value, emit, setting, bullet.id))
    return out, DetectorState()


def app2_flush(state: DetectorState, time: int) -> tuple[list[ScheduledOutput], DetectorState]:
    """Payload-free arrival after the last bullet: releases whatever is stored."""
    out = [ScheduledOutput(s.outcome, time, s.setting, s.bullet_id) for s in state.pending]
    return out, DetectorState()


_HOW_OFFSET = {"now": 0, "delay": 1, "next": 2}


def app2_side(side: Side, settings: np.ndarray, b2_as_written: np.ndarray,
              timing: TimingModel) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`app2_respond` including the final flush.

    Returns ``(outcome, emit_time)`` per bullet, in bullet order.
    """
    n = settings.size
    ids = np.arange(n, dtype=np.int64)
    iset_idx = ids % 2
    value = np.zeros((2, 3), dtype=np.int8)
    offset = np.zeros((2, 3), dtype=np.int64)
    ticks = (0, timing.delta_app2, timing.period)
    for k, iset in enumerate((InstructionSet.I, InstructionSet.II)):
        for s in (1, 2):
            value[k, s] = APP2_VALUES[iset][(side, s)]
            offset[k, s] = ticks[_HOW_OFFSET[APP2_TIMING[iset][(side, s)]]]
    out = value[iset_idx, settings]
    off = offset[iset_idx, settings]
    if side is Side.B:
        off = np.where((settings == 2) & ~b2_as_written, 0, off)
    return out, ids * timing.period + off


# -- deterministic tables ---------------------------------------------------


def table_emit(trial_id: int, table: Table, period: int = 100) -> tuple[Bullet, Bullet]:
    t = trial_id * period
    return Bullet(trial_id, t, table), Bullet(trial_id, t, table)


def table_respond(side: Side, setting: int, bullet: Bullet) -> ScheduledOutput:
    if not isinstance(bullet.payload, Table):
        raise WrongPayload(f"table strategy expects a table, got {bullet.payload!r}")
    return ScheduledOutput(bullet.payload.entry(side, setting), bullet.emission_time,
                           setting, bullet.id)


def table_side(side: Side, settings: np.ndarray, table: Table,
               timing: TimingModel) -> tuple[np.ndarray, np.ndarray]:
    lut = np.array([0, table.entry(side, 1), table.entry(side, 2)], dtype=np.int8)
    return lut[settings], np.arange(settings.size, dtype=np.int64) * timing.period


# -- noise --------------------------------------------------------------------


def apply_noise(records: RecordStream, params: NoiseParams, rng: np.random.Generator, *,
                n_trials: int, period: int, settings: np.ndarray) -> RecordStream:
    """Drop, flip and add dark counts on one side's stream.

    Per record, one draw decides the drop and one the flip. Dark counts are
    Poisson(dark_rate * n_trials) records at uniform ticks in the run span with
    uniform outcomes, labelled with the setting held at that tick.
    """
    if params.is_zero:
        return records
    n = len(records)
    keep = rng.random(n) >= params.drop_prob
    flip = rng.random(n) < params.flip_prob
    outcome = np.where(flip, 1 - records.outcome, records.outcome)

    k = int(rng.poisson(params.dark_rate * n_trials)) if params.dark_rate > 0 else 0
    ticks = rng.integers(0, n_trials * period, size=k, dtype=np.int64)
    dark_out = rng.integers(0, 2, size=k).astype(np.int8)
    held = np.asarray(settings)[np.minimum(ticks // period, n_trials - 1)]

    merged = RecordStream(
        records.side,
        np.concatenate([records.setting[keep], held]),
        np.concatenate([outcome[keep], dark_out]),
        np.concatenate([records.time[keep], ticks]),
        np.concatenate([records.bullet_id[keep], np.full(k, DARK_ID, dtype=np.int64)]),
    )
    return merged.sorted()
