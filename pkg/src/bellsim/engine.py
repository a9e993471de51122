"""Trial driver: settings, bullets, responders, noise, sorted record streams."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import (
    BellSimError,
    RecordStream,
    Side,
    SimConfig,
    Strategy,
    Table,
    substream,
    validate_config,
)
from .reference import pmap_value, qm_correlators
from .strategies import app1_side, app2_side, apply_noise, table_side


class LengthMismatch(BellSimError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RunOutput:
    left: RecordStream
    right: RecordStream
    left_settings: np.ndarray
    right_settings: np.ndarray
    config: SimConfig

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def ground_truth(self) -> dict[int, tuple[int, int]]:
        return {i: (int(a), int(b))
                for i, (a, b) in enumerate(zip(self.left_settings, self.right_settings))}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RunOutput):
            return NotImplemented
        return (self.left == other.left and self.right == other.right
                and np.array_equal(self.left_settings, other.left_settings)
                and np.array_equal(self.right_settings, other.right_settings)
                and self.config == other.config)

    def header(self) -> dict[str, Any]:
        return {"config": self.config.to_dict()}


def delay_probability(cfg: SimConfig) -> float:
    """B2 modulation probability for ``cfg``.

    For apparatus 1 this is the chance B2 delays its output; for apparatus 2
    the chance B2 follows its rule as written. With the pmap off the fixed
    ``p_delay`` is used, defaulting to 0 for apparatus 1 and 1 for apparatus 2.
    """
    p = pmap_value(cfg.pmap, cfg.phi)
    if p is not None:
        return p
    if cfg.p_delay is not None:
        return float(cfg.p_delay)
    return 1.0 if cfg.strategy is Strategy.APP2 else 0.0


def sample_settings(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    n = cfg.n_trials
    left = substream(cfg.seed, "setting", Side.A).integers(1, 3, size=n).astype(np.int8)
    right = substream(cfg.seed, "setting", Side.B).integers(1, 3, size=n).astype(np.int8)
    return left, right


def run(cfg: SimConfig) -> RunOutput:
    """Simulate ``cfg.n_trials`` trials with independently drawn uniform settings."""
    cfg = validate_config(cfg)
    left, right = sample_settings(cfg)
    return _simulate(cfg, left, right)


def replay_settings(cfg: SimConfig, left_settings, right_settings) -> RunOutput:
    """As :func:`run`, but with prescribed setting sequences."""
    cfg = validate_config(cfg)
    ls = np.asarray(left_settings, dtype=np.int8).reshape(-1)
    rs = np.asarray(right_settings, dtype=np.int8).reshape(-1)
    if ls.size != cfg.n_trials or rs.size != cfg.n_trials:
        raise LengthMismatch(
            f"expected {cfg.n_trials} settings per side, got {ls.size} and {rs.size}")
    if not (np.isin(ls, (1, 2)).all() and np.isin(rs, (1, 2)).all()):
        raise ValueError("settings must be 1 or 2")
    return _simulate(cfg, ls, rs)


def _simulate(cfg: SimConfig, sl: np.ndarray, sr: np.ndarray) -> RunOutput:
    n, tm, seed = cfg.n_trials, cfg.timing, cfg.seed
    ids = np.arange(n, dtype=np.int64)

    if cfg.strategy is Strategy.APP1:
        x = substream(seed, "source").integers(0, 2, size=n).astype(np.int8)
        ua = substream(seed, "branch", Side.A).random(n)
        ub = substream(seed, "branch", Side.B).random(n)
        p = delay_probability(cfg)
        ol, tl = app1_side(Side.A, sl, x, ua, p, tm, cfg.b2_nodelay_not)
        orr, tr = app1_side(Side.B, sr, (1 - x).astype(np.int8), ub, p, tm,
                            cfg.b2_nodelay_not)
    elif cfg.strategy is Strategy.APP2:
        p = delay_probability(cfg)
        written = substream(seed, "branch", Side.B).random(n) < p
        ol, tl = app2_side(Side.A, sl, np.ones(n, dtype=bool), tm)
        orr, tr = app2_side(Side.B, sr, written, tm)
    elif cfg.strategy is Strategy.TABLE:
        table = Table.from_index(cfg.table)
        ol, tl = table_side(Side.A, sl, table, tm)
        orr, tr = table_side(Side.B, sr, table, tm)
    else:
        ol, orr = _qm_outcomes(cfg, sl, sr)
        tl = tr = ids * tm.period

    left = RecordStream(Side.A, sl, ol, tl, ids).sorted()
    right = RecordStream(Side.B, sr, orr, tr, ids).sorted()
    if not cfg.noise.is_zero:
        left = apply_noise(left, cfg.noise, substream(seed, "noise", Side.A),
                           n_trials=n, period=tm.period, settings=sl)
        right = apply_noise(right, cfg.noise, substream(seed, "noise", Side.B),
                            n_trials=n, period=tm.period, settings=sr)
    sl = sl.copy()
    sr = sr.copy()
    sl.flags.writeable = False
    sr.flags.writeable = False
    return RunOutput(left, right, sl, sr, cfg)


def _qm_outcomes(cfg: SimConfig, sl: np.ndarray, sr: np.ndarray):
    # joint (non-local) sampling; only a reference for validating the analysis chain
    e = qm_correlators(cfg.phi)
    table = np.zeros((3, 3))
    for (i, j), v in e.items():
        table[i, j] = v
    rng = substream(cfg.seed, "qm")
    n = sl.size
    a = rng.integers(0, 2, size=n).astype(np.int8)
    same = rng.random(n) < (1 + table[sl, sr]) / 2
    b = np.where(same, a, 1 - a).astype(np.int8)
    return a, b
