"""Closed-form predictions, delay-probability maps and brute-force oracles.

The oracles re-encode the detector rules from scratch and enumerate every
branch with exact weights. They share nothing with the simulation path
beyond the meaning of the rules, which is what makes them useful as
ground truth.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .core import BellSimError, Pmap

Number = Union[float, Fraction]
COMBOS = ((1, 1), (1, 2), (2, 1), (2, 2))
MAX_ORACLE_BRANCHES = 4**8


class EnumerationTooLarge(BellSimError):
    """Raised when an exhaustive enumeration would exceed the branch cap."""


# -- closed forms ------------------------------------------------------------


def qm_S(phi: float) -> float:
    """CHSH value of the quantum reference at relative angle ``phi`` (radians)."""
    return 2.0 * math.cos(2 * phi) + 2.0 * math.sin(2 * phi)


def qm_correlators(phi: float) -> dict[tuple[int, int], float]:
    """Product expectation per setting combination.

    Measurement directions on the Bloch circle are A = (0, 90 deg) and
    B = (2 phi, 2 phi - 90 deg) with E = cos(theta_A - theta_B). The sum
    E11 + E12 + E21 - E22 then equals :func:`qm_S`.
    """
    th_a = {1: 0.0, 2: math.pi / 2}
    th_b = {1: 2 * phi, 2: 2 * phi - math.pi / 2}
    return {(i, j): math.cos(th_a[i] - th_b[j]) for i, j in COMBOS}


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def p_eq3(phi: float) -> float:
    return _clamp01(2 * math.sqrt(2) * math.sin(2 * phi + math.pi / 4) - 2)


def p_eq4(phi: float) -> float:
    # real branch on a positive base; the power is undefined (taken as 0) otherwise
    u = math.sin(2 * phi + math.pi / 4) - math.pi / 4
    if u <= 0:
        return 0.0
    return min(1.0, 2.08 * u ** (2.0 / 3.0))


def p_calibrated(phi: float) -> float:
    """Delay probability for which the apparatus-1 coincidence |S| equals :func:`qm_S`."""
    return _clamp01((qm_S(phi) - 2) / 2)


PMAPS = {Pmap.PAPER_EQ3: p_eq3, Pmap.PAPER_EQ4: p_eq4, Pmap.CALIBRATED: p_calibrated}


def pmap_value(pmap: Pmap, phi: float) -> float | None:
    """Probability given by ``pmap`` at ``phi``; ``None`` for :attr:`Pmap.OFF`."""
    if pmap is Pmap.OFF:
        return None
    return PMAPS[pmap](phi)


def qm_sampler(phi: float, combo: tuple[int, int], rng: np.random.Generator) -> tuple[int, int]:
    """Draw one jointly distributed outcome pair for ``combo``.

    Non-local by construction: B's bit is drawn conditioned on A's. Each
    marginal is a fair bit and P(equal) = (1 + E) / 2.
    """
    e = qm_correlators(phi)[combo]
    a = int(rng.integers(0, 2))
    same = rng.random() < (1 + e) / 2
    return a, a if same else 1 - a


# -- oracle results ---------------------------------------------------------


@dataclass(frozen=True)
class BasisResult:
    """Exact expected pair weights per combo for one analysis basis."""

    same: dict[tuple[int, int], Number]
    opposite: dict[tuple[int, int], Number]

    @property
    def E(self) -> dict[tuple[int, int], Number]:
        out = {}
        for c in COMBOS:
            tot = self.same[c] + self.opposite[c]
            if tot == 0:
                raise BellSimError(f"combo {c} never paired in this basis")
            out[c] = (self.same[c] - self.opposite[c]) / tot
        return out

    @property
    def S(self) -> Number:
        e = self.E
        return e[1, 1] + e[1, 2] + e[2, 1] - e[2, 2]

    @property
    def S_abs(self) -> Number:
        return abs(self.S)

    @property
    def pairs(self) -> Number:
        return sum(self.same[c] + self.opposite[c] for c in COMBOS)


@dataclass(frozen=True)
class OracleResult:
    coincidence: BasisResult
    event: BasisResult
    # expected unmatched records under coincidence matching (same normalisation as pairs)
    singles: Number

    @property
    def singles_fraction(self) -> Number:
        """Singles over monitor events, where one pair counts as one event."""
        return self.singles / (self.singles + self.coincidence.pairs)


def _zero(exact: bool):
    return Fraction(0) if exact else 0.0


# -- apparatus 1 oracle -----------------------------------------------------


def oracle_app1(p: Number, b2_nodelay_not: bool = True) -> OracleResult:
    """Exact apparatus-1 statistics per trial by weighted enumeration.

    Branches: source bit x (1/2 each), A-side branch prompt/delayed (1/2
    each), B2 delayed with probability ``p``, and the four setting combos
    (1/4 each). Coincidence requires the two outputs to share a time slot;
    default timing keeps prompt and delayed slots, and different trials,
    apart. Use ``Fraction`` for ``p`` to get exact rationals.
    """
    exact = isinstance(p, (Fraction, int))
    p = Fraction(p) if exact else float(p)
    half = Fraction(1, 2) if exact else 0.5
    quarter = half * half
    cs = {c: _zero(exact) for c in COMBOS}
    co = dict(cs)
    es = dict(cs)
    eo = dict(cs)
    singles = _zero(exact)

    for x in (0, 1):
        y = 1 - x  # right bullet carries the complement
        for sa, sb in COMBOS:
            for a_prompt, wa in ((True, half), (False, half)):
                # left: (bit, slot) with slot 0 prompt, 1 delayed
                if a_prompt:
                    left = (x, 0)
                elif sa == 1:
                    left = (1 - x, 1)
                else:
                    left = (x, 1)
                if sb == 1:
                    rights = [((y, 0), 1)]
                else:
                    nodelay_bit = 1 - y if b2_nodelay_not else y
                    rights = [((1 - y, 1), p), ((nodelay_bit, 0), 1 - p)]
                for right, wb in rights:
                    w = half * quarter * wa * wb
                    if w == 0:
                        continue
                    same = left[0] == right[0]
                    (es if same else eo)[sa, sb] += w
                    if left[1] == right[1]:
                        (cs if same else co)[sa, sb] += w
                    else:
                        singles += 2 * w

    return OracleResult(BasisResult(cs, co), BasisResult(es, eo), singles)


def oracle_app1_closed_form(p: float) -> dict[str, float]:
    """Closed forms the enumeration reproduces (default B2 no-delay rule)."""
    return {"E11": -1.0, "E12": 1 - 2 * p, "E21": -1.0, "E22": 1.0,
            "S_coinc_abs": 2 + 2 * p, "S_event_abs": 2.0, "singles_fraction": 2 / 3}


# -- apparatus 2 oracle -----------------------------------------------------

# value and release per (set parity, side, setting); "now" = arrival tick,
# "delay" = arrival + slight delay, "next" = arrival of the following bullet
_A2_RULES = {
    (0, "A", 1): (0, "now"), (0, "A", 2): (1, "next"),
    (0, "B", 1): (0, "next"), (0, "B", 2): (1, "now"),
    (1, "A", 1): (1, "now"), (1, "A", 2): (0, "delay"),
    (1, "B", 1): (1, "next"), (1, "B", 2): (0, "delay"),
}


def _app2_slot(n: int, how: str) -> tuple[int, int]:
    # symbolic time: (bullet arrival index, sub-slot); sub-slot 1 = slight delay
    return {"now": (n, 0), "delay": (n, 1), "next": (n + 1, 0)}[how]


def _app2_sequence_tally(a_set, b_set, b_written):
    """Integer tallies for one fully specified run (flush at arrival index L)."""
    L = len(a_set)
    left, right = [], []
    for n in range(L):
        par = n % 2
        v, how = _A2_RULES[par, "A", a_set[n]]
        left.append((_app2_slot(n, how), n, a_set[n], v))
        v, how = _A2_RULES[par, "B", b_set[n]]
        if b_set[n] == 2 and not b_written[n]:
            how = "now"
        right.append((_app2_slot(n, how), n, b_set[n], v))
    # within a slot, records of older bullets come first
    left.sort(key=lambda r: (r[0], r[1]))
    right.sort(key=lambda r: (r[0], r[1]))

    cs = [0] * 4
    co = [0] * 4
    slots: dict = {}
    for r in left:
        slots.setdefault(r[0], ([], []))[0].append(r)
    for r in right:
        slots.setdefault(r[0], ([], []))[1].append(r)
    n_pairs = 0
    for ls, rs in slots.values():
        for lr, rr in zip(ls, rs):
            k = COMBOS.index((lr[2], rr[2]))
            if lr[3] == rr[3]:
                cs[k] += 1
            else:
                co[k] += 1
            n_pairs += 1
    singles = 2 * L - 2 * n_pairs

    es = [0] * 4
    eo = [0] * 4
    by_id_l = {r[1]: r for r in left}
    for rr in right:
        lr = by_id_l[rr[1]]
        k = COMBOS.index((lr[2], rr[2]))
        if lr[3] == rr[3]:
            es[k] += 1
        else:
            eo[k] += 1
    return cs + co + es + eo + [singles]


def _app2_tallies(L: int, p: Number):
    exact = isinstance(p, (Fraction, int))
    p = Fraction(p) if exact else float(p)
    b_opts = [(1, True, 0, 0)]  # (setting, as written, #as-written B2, #immediate B2)
    if p != 0:
        b_opts.append((2, True, 1, 0))
    if p != 1:
        b_opts.append((2, False, 0, 1))
    n_branches = (2 * len(b_opts)) ** L
    if n_branches > MAX_ORACLE_BRANCHES:
        raise EnumerationTooLarge(
            f"{n_branches} branches for L={L} exceeds cap {MAX_ORACLE_BRANCHES}")

    grouped: dict[tuple[int, int], np.ndarray] = {}
    for a_set in itertools.product((1, 2), repeat=L):
        for bs in itertools.product(b_opts, repeat=L):
            key = (sum(b[2] for b in bs), sum(b[3] for b in bs))
            t = _app2_sequence_tally(a_set, [b[0] for b in bs], [b[1] for b in bs])
            acc = grouped.get(key)
            if acc is None:
                grouped[key] = np.array(t, dtype=np.int64)
            else:
                acc += t

    base = Fraction(1, 4**L) if exact else 0.25**L
    total = [_zero(exact)] * 17
    for (kw, kn), counts in grouped.items():
        w = base * p**kw * (1 - p) ** kn
        total = [tot + w * int(c) for tot, c in zip(total, counts)]
    return total


def _app2_result(t) -> OracleResult:
    cs, co, es, eo = (dict(zip(COMBOS, t[i:i + 4])) for i in (0, 4, 8, 12))
    return OracleResult(BasisResult(cs, co), BasisResult(es, eo), t[16])


def oracle_app2(L: int, p: Number = 1) -> OracleResult:
    """Exact apparatus-2 statistics over all joint setting sequences of ``L`` bullets.

    Sets alternate i, ii, ... from bullet 0; a flush arrival after the last
    bullet releases stored bits. ``p`` is the probability B2 follows its rule
    as written (otherwise it fires at arrival). All sequences carry equal
    weight 4**-L; B2 branches are weighted by ``p`` and ``1 - p``.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    return _app2_result(_app2_tallies(L, p))


def oracle_app2_stationary(L: int, p: Number = 1) -> OracleResult:
    """Per-bullet statistics with the run boundaries removed.

    Every expected count is affine in the run length once L >= 2 (each tick
    involves at most two consecutive bullets), so the difference of the
    L- and (L-2)-bullet tallies, which both end on the same instruction set,
    is two bullets' worth of steady-state counts.
    """
    if L < 4:
        raise ValueError("need L >= 4 for a boundary-free difference")
    hi = _app2_tallies(L, p)
    lo = _app2_tallies(L - 2, p)
    return _app2_result([a - b for a, b in zip(hi, lo)])
