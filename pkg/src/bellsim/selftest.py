"""Oracle-versus-simulation checks at reduced trial counts.

``NoiseParams`` can be injected into every simulated run; the CHSH-bound
checks must survive that while the oracle-identity checks must not.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coincidence import match, pair_by_ground_truth, tally
from .core import NoiseParams, Pmap, SimConfig, Strategy
from .engine import delay_probability, replay_settings, run
from .estimator import estimate, sweep
from .reference import oracle_app1, oracle_app2, qm_S

N = 100_000


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def _estimates(cfg: SimConfig):
    out = run(cfg)
    coinc = tally(match(out.left, out.right, cfg.timing.window))
    event = pair_by_ground_truth(out, strict=cfg.noise.drop_prob == 0)
    return out, estimate(coinc), estimate(event), coinc


def check_singles(noise: NoiseParams) -> tuple[bool, str]:
    _, c, _, _ = _estimates(SimConfig(n_trials=N, p_delay=1.0, seed=11, noise=noise))
    sf = c.singles_fraction
    return abs(sf - 2 / 3) <= 0.01, f"singles fraction {sf:.4f} (target 0.667 +/- 0.01)"


def check_marginals(noise: NoiseParams) -> tuple[bool, str]:
    out = run(SimConfig(n_trials=N, p_delay=1.0, seed=12, noise=noise))
    worst = 0.0
    for s in (out.left, out.right):
        for k in (1, 2):
            sel = s.setting == k
            worst = max(worst, abs(float(s.outcome[sel].mean()) - 0.5))
    combo_dev = 0.0
    for i in (1, 2):
        for j in (1, 2):
            f = np.mean((out.left_settings == i) & (out.right_settings == j))
            combo_dev = max(combo_dev, abs(float(f) - 0.25))
    ok = worst <= 0.01 and combo_dev <= 0.01
    return ok, f"max |P(1)-0.5| = {worst:.4f}, max |P(combo)-0.25| = {combo_dev:.4f}"


def check_table_bound(noise: NoiseParams) -> tuple[bool, str]:
    worst = -math.inf
    for k in range(16):
        cfg = SimConfig(strategy=Strategy.TABLE, table=k, n_trials=10_000, seed=100 + k,
                        noise=noise)
        _, _, e, _ = _estimates(cfg)
        worst = max(worst, e.S_abs - (2 + 3 * e.stderr_S))
    return worst <= 1e-12, f"max(|S_event| - 2 - 3 se) over 16 tables = {worst:.4g}"


def check_event_bound(noise: NoiseParams) -> tuple[bool, str]:
    parts, ok = [], True
    cfgs = [SimConfig(n_trials=N, p_delay=p, seed=20 + k, noise=noise)
            for k, p in enumerate((0.0, 0.5, 1.0))]
    cfgs.append(SimConfig(strategy=Strategy.APP2, n_trials=N, seed=24, noise=noise))
    for cfg in cfgs:
        _, _, e, _ = _estimates(cfg)
        good = e.S_abs <= 2 + 3 * e.stderr_S + 1e-12
        ok &= good
        parts.append(f"{cfg.label}(p={delay_probability(cfg):g}) {e.S_abs:.4f}")
    return ok, "; ".join(parts)


def check_app1_oracle(noise: NoiseParams) -> tuple[bool, str]:
    parts, ok = [], True
    for k, p in enumerate((0.0, 0.25, 0.5, 0.75, 1.0)):
        _, c, _, _ = _estimates(SimConfig(n_trials=N, p_delay=p, seed=30 + k, noise=noise))
        target = float(oracle_app1(p).coincidence.S_abs)
        good = abs(c.S_abs - target) <= 3 * c.stderr_S + 1e-12
        ok &= good
        parts.append(f"p={p}: {c.S_abs:.4f} vs {target:.4f}")
    return ok, "; ".join(parts)


def check_app2_oracle(noise: NoiseParams) -> tuple[bool, str]:
    orc = oracle_app2(6)
    _, c, e, _ = _estimates(SimConfig(strategy=Strategy.APP2, n_trials=N, seed=40,
                                      noise=noise))
    oc, oe = float(orc.coincidence.S_abs), float(orc.event.S_abs)
    ok = (abs(c.S_abs - oc) <= 3 * c.stderr_S + 1e-12
          and abs(e.S_abs - oe) <= 3 * e.stderr_S + 1e-12)
    return ok, f"coincidence {c.S_abs:.4f} vs {oc:.4f}; event {e.S_abs:.4f} vs {oe:.4f}"


def check_locality(noise: NoiseParams) -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    n = 1000
    bad = 0
    for strat in (Strategy.APP1, Strategy.APP2):
        cfg = SimConfig(strategy=strat, n_trials=n, seed=50,
                        p_delay=0.5 if strat is Strategy.APP1 else None, noise=noise)
        base = run(cfg)
        for _ in range(20):
            perm_r = rng.permutation(base.right_settings)
            perm_l = rng.permutation(base.left_settings)
            a = replay_settings(cfg, base.left_settings, perm_r)
            b = replay_settings(cfg, perm_l, base.right_settings)
            bad += (a.left != base.left) + (b.right != base.right)
    return bad == 0, f"{bad} of 80 permuted replays changed the fixed side"


def check_qm(noise: NoiseParams) -> tuple[bool, str]:
    _, c, _, _ = _estimates(SimConfig(strategy=Strategy.QM, n_trials=N, phi=math.pi / 8,
                                      seed=60, noise=noise))
    target = 2 * math.sqrt(2)
    return (abs(c.S_abs - target) <= 4 * c.stderr_S,
            f"|S| = {c.S_abs:.4f} +/- {c.stderr_S:.4f}, target {target:.4f}")


def check_determinism(noise: NoiseParams) -> tuple[bool, str]:
    cfg = SimConfig(n_trials=10_000, p_delay=0.5, seed=70, noise=noise)
    same = run(cfg) == run(cfg)
    return same, "identical configs give identical runs" if same else "runs differ"


def check_calibrated_sweep(noise: NoiseParams) -> tuple[bool, str]:
    grid = np.linspace(0, math.pi / 4, 5)
    rows = sweep(SimConfig(n_trials=N, pmap=Pmap.CALIBRATED, seed=80, noise=noise), grid)
    dev = max(abs(r.S_coinc - qm_S(r.phi)) for r in rows)
    return dev <= 0.05, f"max |S_coinc - S_qm| = {dev:.4f} over {len(rows)} angles"


CHECKS: dict[str, Callable[[NoiseParams], tuple[bool, str]]] = {
    "app1_singles_fraction": check_singles,
    "app1_marginals_and_combos": check_marginals,
    "table_event_chsh_bound": check_table_bound,
    "event_chsh_bound": check_event_bound,
    "app1_coincidence_matches_oracle": check_app1_oracle,
    "app2_matches_oracle": check_app2_oracle,
    "locality_permutation": check_locality,
    "qm_reference_pipeline": check_qm,
    "determinism": check_determinism,
    "calibrated_sweep_tracks_qm": check_calibrated_sweep,
}

HEADLINE_NOTE = (
    "note: the frequently quoted coincidence value S = 3 is not what these rules give; "
    "exhaustive enumeration yields |S| = 2 + 2p for apparatus 1 (4 at p = 1) and "
    "|S| = 4 for apparatus 2, and those enumerated values are what is checked.")


def run_checks(names=None, noise: NoiseParams = NoiseParams()) -> list[CheckResult]:
    results = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        ok, detail = CHECKS[name](noise)
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results
