"""Coincidence matching of two record streams and per-combo tallies."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import BellSimError, DetectionRecord, RecordStream, Side
from .engine import RunOutput

COMBOS = ((1, 1), (1, 2), (2, 1), (2, 2))


class UnsortedInput(BellSimError, ValueError):
    pass


class MissingPartner(BellSimError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Pairing of ``left`` and ``right``; ``left_idx[k]`` pairs with ``right_idx[k]``."""

    left: RecordStream
    right: RecordStream
    left_idx: np.ndarray
    right_idx: np.ndarray
    window: int | None

    @property
    def n_pairs(self) -> int:
        return int(self.left_idx.size)

    @property
    def n_singles(self) -> int:
        return len(self.left) + len(self.right) - 2 * self.n_pairs

    @property
    def pairs(self) -> Iterator[tuple[DetectionRecord, DetectionRecord]]:
        for i, j in zip(self.left_idx, self.right_idx):
            yield self.left[int(i)], self.right[int(j)]

    def single_masks(self) -> tuple[np.ndarray, np.ndarray]:
        ml = np.ones(len(self.left), dtype=bool)
        mr = np.ones(len(self.right), dtype=bool)
        ml[self.left_idx] = False
        mr[self.right_idx] = False
        return ml, mr

    @property
    def singles(self) -> list[DetectionRecord]:
        ml, mr = self.single_masks()
        return ([self.left[int(i)] for i in np.flatnonzero(ml)]
                + [self.right[int(j)] for j in np.flatnonzero(mr)])

    def pair_set(self) -> set[tuple[DetectionRecord, DetectionRecord]]:
        """Pairs as ``(A record, B record)`` regardless of argument order."""
        out = set()
        for lr, rr in self.pairs:
            out.add((lr, rr) if lr.side is Side.A else (rr, lr))
        return out


def match(left: RecordStream, right: RecordStream, window: int) -> MatchResult:
    """Greedy nearest-first coincidence matching.

    All cross-side candidates with ``|t_l - t_r| <= window`` are ranked by
    time difference, then earliest arrival, then position in the A stream,
    then position in the B stream (so at equal ticks stored releases pair
    first). Candidates are accepted in that order when both ends are free.
    Growing the window only appends candidates ranked after the existing
    ones, so the pair set can only grow.
    """
    if not left.is_sorted() or not right.is_sorted():
        raise UnsortedInput("record streams must be sorted by time")
    if left.side is Side.B and right.side is Side.A:
        m = match(right, left, window)
        return MatchResult(left, right, m.right_idx, m.left_idx, window)

    tl, tr = left.time, right.time
    lo = np.searchsorted(tr, tl - window, side="left")
    hi = np.searchsorted(tr, tl + window, side="right")
    counts = hi - lo
    total = int(counts.sum())
    cl = np.repeat(np.arange(tl.size), counts)
    starts = np.cumsum(counts) - counts
    cr = np.repeat(lo, counts) + (np.arange(total) - np.repeat(starts, counts))

    deg_l = counts
    deg_r = np.bincount(cr, minlength=tr.size)
    lone = (deg_l[cl] == 1) & (deg_r[cr] == 1)
    pl = [cl[lone]]
    pr = [cr[lone]]

    # contested candidates: resolve in rank order
    xl, xr = cl[~lone], cr[~lone]
    if xl.size:
        dt = np.abs(tl[xl] - tr[xr])
        first = np.minimum(tl[xl], tr[xr])
        order = np.lexsort((xr, xl, first, dt))
        used_l = np.zeros(tl.size, dtype=bool)
        used_r = np.zeros(tr.size, dtype=bool)
        acc_l, acc_r = [], []
        for k in order:
            i, j = xl[k], xr[k]
            if not used_l[i] and not used_r[j]:
                used_l[i] = used_r[j] = True
                acc_l.append(i)
                acc_r.append(j)
        pl.append(np.asarray(acc_l, dtype=np.int64))
        pr.append(np.asarray(acc_r, dtype=np.int64))

    li = np.concatenate(pl).astype(np.int64)
    ri = np.concatenate(pr).astype(np.int64)
    order = np.argsort(li, kind="stable")
    return MatchResult(left, right, li[order], ri[order], window)


@dataclass(frozen=True)
class ComboTally:
    """Same/opposite pair counts per (A setting, B setting) plus singles."""

    n_same: dict[tuple[int, int], int]
    n_opposite: dict[tuple[int, int], int]
    n_singles: int = 0

    @property
    def n_pairs(self) -> int:
        return sum(self.n_same[c] + self.n_opposite[c] for c in COMBOS)

    def pairs_in(self, combo: tuple[int, int]) -> int:
        return self.n_same[combo] + self.n_opposite[combo]

    @property
    def singles_fraction(self) -> float:
        events = self.n_pairs + self.n_singles
        return self.n_singles / events if events else 0.0

    def __add__(self, other: "ComboTally") -> "ComboTally":
        return ComboTally({c: self.n_same[c] + other.n_same[c] for c in COMBOS},
                          {c: self.n_opposite[c] + other.n_opposite[c] for c in COMBOS},
                          self.n_singles + other.n_singles)


def _tally_pairs(a: RecordStream, b: RecordStream, ia: np.ndarray, ib: np.ndarray,
                 n_singles: int) -> ComboTally:
    sa = a.setting[ia].astype(np.int64)
    sb = b.setting[ib].astype(np.int64)
    same = a.outcome[ia] == b.outcome[ib]
    code = (sa - 1) * 2 + (sb - 1)
    ns = np.bincount(code[same], minlength=4)
    no = np.bincount(code[~same], minlength=4)
    return ComboTally({c: int(ns[k]) for k, c in enumerate(COMBOS)},
                      {c: int(no[k]) for k, c in enumerate(COMBOS)}, int(n_singles))


def tally(m: MatchResult) -> ComboTally:
    if m.left.side is Side.A:
        return _tally_pairs(m.left, m.right, m.left_idx, m.right_idx, m.n_singles)
    return _tally_pairs(m.right, m.left, m.right_idx, m.left_idx, m.n_singles)


def pair_by_bullet(left: RecordStream, right: RecordStream,
                   strict: bool = True) -> MatchResult:
    """Pair records that stem from the same bullet, ignoring timestamps.

    Dark counts (negative ids) are never paired. With ``strict`` a bullet
    present on only one side raises :class:`MissingPartner`; otherwise such
    records are left unpaired.
    """
    real_l = np.flatnonzero(left.bullet_id >= 0)
    real_r = np.flatnonzero(right.bullet_id >= 0)
    idl, idr = left.bullet_id[real_l], right.bullet_id[real_r]
    for ids, side in ((idl, left.side), (idr, right.side)):
        if np.unique(ids).size != ids.size:
            raise BellSimError(f"side {side.value} has more than one record for a bullet")
    common, kl, kr = np.intersect1d(idl, idr, assume_unique=True, return_indices=True)
    if strict and (common.size != idl.size or common.size != idr.size):
        lonely = np.setxor1d(idl, idr)
        raise MissingPartner(f"{lonely.size} bullet(s) lack a partner, first id {lonely[0]}")
    li, ri = real_l[kl], real_r[kr]
    order = np.argsort(li, kind="stable")
    return MatchResult(left, right, li[order], ri[order], None)


def event_tally(left: RecordStream, right: RecordStream, strict: bool = True) -> ComboTally:
    """Tally of :func:`pair_by_bullet`; singles are unpaired real records only."""
    t = tally(pair_by_bullet(left, right, strict=strict))
    n_dark = int((left.bullet_id < 0).sum() + (right.bullet_id < 0).sum())
    return ComboTally(t.n_same, t.n_opposite, t.n_singles - n_dark)


def pair_by_ground_truth(runout: RunOutput, strict: bool = True) -> ComboTally:
    """Event-basis tally of a run: records paired by their emitting bullet."""
    return event_tally(runout.left, runout.right, strict=strict)
