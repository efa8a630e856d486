import time

import numpy as np
import pytest

from nlscore.simulation import PRESETS, run_experiment


@pytest.fixture(scope="session")
def desk_known_run():
    """One full desk-known run (reports, elapsed seconds), shared by the
    acceptance and trend tests."""
    t0 = time.perf_counter()
    reports = run_experiment(PRESETS["desk-known"])
    return reports, time.perf_counter() - t0


@pytest.fixture(scope="session")
def desk_unknown_run():
    t0 = time.perf_counter()
    reports = run_experiment(PRESETS["desk-unknown"])
    return reports, time.perf_counter() - t0


def brute_force_eer(target, nontarget) -> float:
    """Naive counting EER oracle: evaluate FAR/FRR at every midpoint between
    adjacent distinct pooled scores (plus sentinels), take the crossing with
    linear interpolation. Mirrors the documented convention arithmetic so the
    production path must match it exactly."""
    tar = [float(v) for v in np.asarray(target).ravel()]
    non = [float(v) for v in np.asarray(nontarget).ravel()]
    distinct = sorted(set(tar + non))
    thresholds = [distinct[0] - 1.0]
    for a, b in zip(distinct[:-1], distinct[1:]):
        thresholds.append(0.5 * (a + b))
    thresholds.append(distinct[-1] + 1.0)
    points = []
    for t in thresholds:
        far = sum(1 for s in non if s >= t) / len(non)
        frr = sum(1 for s in tar if s < t) / len(tar)
        points.append((far, frr))
    prev_far, prev_frr = points[0]
    for far, frr in points:
        diff = far - frr
        if diff <= 0.0:
            if diff == 0.0:
                return far
            prev_diff = prev_far - prev_frr
            lam = prev_diff / (prev_diff - diff)
            return prev_far + lam * (far - prev_far)
        prev_far, prev_frr = far, frr
    raise AssertionError("FAR/FRR never crossed")


@pytest.fixture
def eer_oracle():
    return brute_force_eer


def random_trial_sets(seed, count, max_size):
    """Seeded random trial sets for oracle-equivalence checks, with some
    duplicate-heavy sets so the distinct-score handling is exercised."""
    rng = np.random.default_rng(seed)
    sets = []
    for i in range(count):
        n_tar = int(rng.integers(1, max_size + 1))
        n_non = int(rng.integers(1, max_size + 1))
        if i % 3 == 0:
            tar = rng.integers(0, 8, n_tar).astype(float)
            non = rng.integers(0, 8, n_non).astype(float)
        else:
            tar = rng.normal(0.7, 1.0, n_tar)
            non = rng.normal(0.0, 1.0, n_non)
        sets.append((tar, non))
    return sets


@pytest.fixture
def trial_set_factory():
    return random_trial_sets
