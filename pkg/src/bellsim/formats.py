"""Text encodings: event JSON-lines, match JSON-lines and CSV tables.

Functions here read from and write to already opened text streams; opening
files is left to the command-line layer.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import IO, Any, Iterable

import numpy as np

from .coincidence import COMBOS, ComboTally, MatchResult
from .core import BellSimError, RecordStream, Side
from .engine import RunOutput
from .estimator import ChshEstimate, SweepRow

SUMMARY_COLUMNS = ["basis", "E11", "E12", "E21", "E22", "S", "S_abs", "stderr",
                   "n_pairs", "n_singles"]
SWEEP_COLUMNS = ["φ_deg", "S_coinc", "S_event", "stderr", "singles_frac", "S_qm"]


class MalformedEvents(BellSimError, ValueError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}")


def _record_line(side: str, setting: int, outcome: int, t: int, bullet: int) -> str:
    return (f'{{"side":"{side}","setting":{setting},"outcome":{outcome},'
            f'"t":{t},"bullet":{bullet}}}\n')


def write_events(out: RunOutput, fh: IO[str]) -> None:
    """Header line with the config echo, then records merged in time order.

    At equal ticks A records precede B records; within a side the stream
    order is kept, which preserves the stored-first tie order on reload.
    """
    fh.write(json.dumps(out.header(), sort_keys=True) + "\n")
    streams = [out.left, out.right]
    if streams[0].side is Side.B:
        streams.reverse()
    times = np.concatenate([s.time for s in streams])
    side_code = np.concatenate([np.full(len(s), k) for k, s in enumerate(streams)])
    pos = np.concatenate([np.arange(len(s)) for s in streams])
    order = np.lexsort((pos, side_code, times))
    cols = [(s.side.value, s.setting.tolist(), s.outcome.tolist(), s.time.tolist(),
             s.bullet_id.tolist()) for s in streams]
    buf = []
    for k in order.tolist():
        sc, i = side_code[k], pos[k]
        name, st, oc, tt, bb = cols[sc]
        buf.append(_record_line(name, st[i], oc[i], tt[i], bb[i]))
        if len(buf) >= 65536:
            fh.write("".join(buf))
            buf.clear()
    fh.write("".join(buf))


@dataclass(frozen=True, eq=False)
class EventFile:
    left: RecordStream
    right: RecordStream
    config: dict[str, Any] | None

    @property
    def has_bullet_ids(self) -> bool:
        return bool((self.left.bullet_id >= 0).any() or (self.right.bullet_id >= 0).any())


_FIELDS = {"side": str, "setting": int, "outcome": int, "t": int, "bullet": int}


def read_events(fh: IO[str]) -> EventFile:
    """Parse an event file. Raises :class:`MalformedEvents` naming the bad line.

    The header line is optional. A missing ``bullet`` field is read as a dark
    count id (-1). Records are stably sorted by time per side.
    """
    config = None
    n_records = 0
    cols: dict[str, list[list[int]]] = {"A": [[], [], [], []], "B": [[], [], [], []]}
    for no, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedEvents(no, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise MalformedEvents(no, "expected a JSON object")
        if "config" in obj and len(obj) == 1:
            if n_records or config is not None:
                raise MalformedEvents(no, "config header must be the first line")
            config = obj["config"]
            continue
        obj.setdefault("bullet", -1)
        for key, typ in _FIELDS.items():
            if key not in obj:
                raise MalformedEvents(no, f"missing field {key!r}")
            if typ is int and (not isinstance(obj[key], int) or isinstance(obj[key], bool)):
                raise MalformedEvents(no, f"field {key!r} must be an integer")
        side = obj["side"]
        if side not in cols:
            raise MalformedEvents(no, f"side must be 'A' or 'B', got {side!r}")
        if obj["setting"] not in (1, 2):
            raise MalformedEvents(no, f"setting must be 1 or 2, got {obj['setting']}")
        if obj["outcome"] not in (0, 1):
            raise MalformedEvents(no, f"outcome must be 0 or 1, got {obj['outcome']}")
        if obj["t"] < 0:
            raise MalformedEvents(no, f"negative time {obj['t']}")
        c = cols[side]
        c[0].append(obj["setting"])
        c[1].append(obj["outcome"])
        c[2].append(obj["t"])
        c[3].append(obj["bullet"])
        n_records += 1

    def stream(name: str) -> RecordStream:
        s = RecordStream(Side(name), *cols[name])
        return s.select(np.argsort(s.time, kind="stable"))

    return EventFile(stream("A"), stream("B"), config)


def _fmt(x: float) -> str:
    return repr(float(x))


def summary_row(basis: str, est: ChshEstimate) -> list[str]:
    return [basis, *(_fmt(est.E[c]) for c in COMBOS), _fmt(est.S), _fmt(est.S_abs),
            _fmt(est.stderr_S), str(est.total_pairs), str(est.n_singles)]


def write_summary(rows: Iterable[tuple[str, ChshEstimate]], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for basis, est in rows:
        w.writerow(summary_row(basis, est))


def write_sweep(rows: Iterable[SweepRow], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.phi_deg), _fmt(r.S_coinc), _fmt(r.S_event), _fmt(r.stderr),
                    _fmt(r.singles_frac), _fmt(r.S_qm)])


def read_sweep(fh: IO[str]) -> list[dict[str, float]]:
    return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_tally(t: ComboTally, fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["combo", "n_same", "n_opposite"])
    for c in COMBOS:
        w.writerow([f"A{c[0]}B{c[1]}", t.n_same[c], t.n_opposite[c]])


def write_match(m: MatchResult, fh: IO[str]) -> None:
    """One ``{"pair": [left, right]}`` line per pair, one ``{"single": rec}`` per single."""
    def rec(r) -> dict[str, Any]:
        return {"side": r.side.value, "setting": r.setting, "outcome": r.outcome,
                "t": r.time, "bullet": r.bullet_id}

    for a, b in m.pairs:
        fh.write(json.dumps({"pair": [rec(a), rec(b)]}) + "\n")
    for s in m.singles:
        fh.write(json.dumps({"single": rec(s)}) + "\n")
