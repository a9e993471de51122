"""Correlators, the CHSH sum and its standard error; the phi sweep."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .coincidence import COMBOS, ComboTally, match, pair_by_ground_truth, tally
from .core import BellSimError, SimConfig, validate_config
from .engine import run
from .reference import qm_S


class EmptyCombo(BellSimError, ValueError):
    def __init__(self, combo: tuple[int, int]):
        self.combo = combo
        super().__init__(f"no pairs for setting combination A{combo[0]}B{combo[1]}")


@dataclass(frozen=True)
class ChshEstimate:
    E: dict[tuple[int, int], float]
    stderr_E: dict[tuple[int, int], float]
    S: float
    stderr_S: float
    n_pairs: dict[tuple[int, int], int]
    n_singles: int

    @property
    def S_abs(self) -> float:
        return abs(self.S)

    @property
    def total_pairs(self) -> int:
        return sum(self.n_pairs.values())

    @property
    def singles_fraction(self) -> float:
        return self.n_singles / (self.n_singles + self.total_pairs)


def estimate(t: ComboTally) -> ChshEstimate:
    """E = (same - opposite) / pairs per combo; S = E11 + E12 + E21 - E22.

    The standard error of each E is the binomial one, 2 sqrt(f (1 - f) / n)
    with f the fraction of equal outcomes; combos add in quadrature.
    """
    E, se, npairs = {}, {}, {}
    for c in COMBOS:
        n = t.pairs_in(c)
        if n == 0:
            raise EmptyCombo(c)
        f = t.n_same[c] / n
        E[c] = (t.n_same[c] - t.n_opposite[c]) / n
        se[c] = 2.0 * math.sqrt(f * (1.0 - f) / n)
        npairs[c] = n
    S = E[1, 1] + E[1, 2] + E[2, 1] - E[2, 2]
    return ChshEstimate(E, se, S, math.sqrt(sum(v * v for v in se.values())),
                        npairs, t.n_singles)


@dataclass(frozen=True)
class SweepRow:
    phi: float
    S_coinc: float
    S_event: float
    stderr: float
    singles_frac: float
    S_qm: float

    @property
    def phi_deg(self) -> float:
        return math.degrees(self.phi)


def point_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([int(seed) % 2**64, k]).generate_state(1, np.uint64)[0])


def sweep(cfg: SimConfig, phi_grid: Iterable[float]) -> list[SweepRow]:
    """One full run per angle; coincidence |S| versus event |S| versus the QM curve.

    Each grid point gets its own seed derived from ``cfg.seed`` and its index.
    """
    grid = [float(p) for p in phi_grid]
    if not grid:
        raise ValueError("phi grid is empty")
    rows = []
    for k, phi in enumerate(grid):
        c = validate_config(cfg.with_(phi=phi, seed=point_seed(cfg.seed, k)))
        out = run(c)
        coinc = estimate(tally(match(out.left, out.right, c.timing.window)))
        event = estimate(pair_by_ground_truth(out, strict=c.noise.drop_prob == 0))
        rows.append(SweepRow(phi, coinc.S_abs, event.S_abs, coinc.stderr_S,
                             coinc.singles_fraction, qm_S(phi)))
    return rows


def default_phi_grid(phi_min: float = 0.0, phi_max: float = math.pi / 4,
                     steps: int = 16) -> list[float]:
    return [float(x) for x in np.linspace(phi_min, phi_max, steps)]
