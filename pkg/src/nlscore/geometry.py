"""Empirical high-dimension diagnostics: norm concentration of isotropic
Gaussian samples and the separability of two-level Gaussian data.

These are Monte-Carlo reports, not assertions: the annulus band half-width
is fixed at 3 standard deviations of a single coordinate, which gives a
stable >= 0.95 inside fraction once the dimension reaches a few hundred.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import GaussianStream

__all__ = [
    "ConcentrationReport",
    "annulus_stats",
    "separability_probe",
    "write_geometry_csv",
    "GEOMETRY_CSV_HEADER",
    "PAIR_SAMPLE_CAP",
]

PAIR_SAMPLE_CAP = 100_000  # pairwise stats use at most min(n^2, this) pairs
_PAIR_CHUNK = 20_000  # bound the (pairs, dim) scratch arrays


@dataclass(frozen=True)
class ConcentrationReport:
    dim: int
    n_samples: int
    mean_norm: float
    norm_inside_band_frac: float
    mean_pair_distance: float
    mean_abs_cosine: float

    def __post_init__(self):
        if not 0.0 <= self.norm_inside_band_frac <= 1.0:
            raise ValueError("norm_inside_band_frac must be in [0, 1]")
        for name in ("mean_norm", "mean_pair_distance", "mean_abs_cosine"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def _distinct_pairs(stream: GaussianStream, n: int, n_pairs: int):
    i = stream.integers(n, n_pairs)
    j = stream.integers(n - 1, n_pairs)
    j = j + (j >= i)
    return i, j


def annulus_stats(dim: int, epsilon: float, n_samples: int, seed: int) -> ConcentrationReport:
    """Sample n vectors from an isotropic Gaussian with per-coordinate
    standard deviation epsilon and report how tightly norms concentrate
    around sqrt(dim)*epsilon, plus pairwise distance and |cosine| means."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if n_samples < 100:
        raise ValueError("n_samples must be >= 100")
    root = GaussianStream.from_seed(seed).child("annulus")
    x = epsilon * root.child("samples").normals((n_samples, dim))
    norms = np.linalg.norm(x, axis=1)
    radius = np.sqrt(dim) * epsilon
    inside = np.abs(norms - radius) <= 3.0 * epsilon

    n_pairs = min(n_samples * n_samples, PAIR_SAMPLE_CAP)
    i, j = _distinct_pairs(root.child("pairs"), n_samples, n_pairs)
    dist_sum = 0.0
    abs_cos_sum = 0.0
    for lo in range(0, n_pairs, _PAIR_CHUNK):
        ii = i[lo : lo + _PAIR_CHUNK]
        jj = j[lo : lo + _PAIR_CHUNK]
        dist_sum += float(np.linalg.norm(x[ii] - x[jj], axis=1).sum())
        dots = np.sum(x[ii] * x[jj], axis=1)
        abs_cos_sum += float(np.abs(dots / (norms[ii] * norms[jj])).sum())

    return ConcentrationReport(
        dim=dim,
        n_samples=n_samples,
        mean_norm=float(norms.mean()),
        norm_inside_band_frac=float(inside.mean()),
        mean_pair_distance=dist_sum / n_pairs,
        mean_abs_cosine=abs_cos_sum / n_pairs,
    )


def separability_probe(
    dim: int,
    epsilon: float,
    sigma: float,
    n_classes: int,
    n_per_class: int,
    seed: int,
):
    """Sample the two-level model and compare same-class and cross-class
    pair distances.

    Returns (within_dist_mean, between_dist_mean, overlap_frac) where
    overlap_frac is the fraction of cross-class pairs closer than the median
    same-class pair.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    if n_per_class < 2:
        raise ValueError("n_per_class must be >= 2")
    root = GaussianStream.from_seed(seed).child("separability")
    means = epsilon * root.child("classes").normals((n_classes, dim))
    samples = means[:, None, :] + sigma * root.child("samples").normals(
        (n_classes, n_per_class, dim)
    )

    pair_stream = root.child("pairs")
    n_within = min(n_classes * n_per_class * (n_per_class - 1) // 2, PAIR_SAMPLE_CAP)
    c = pair_stream.integers(n_classes, n_within)
    i, j = _distinct_pairs(pair_stream, n_per_class, n_within)
    within = np.empty(n_within)
    for lo in range(0, n_within, _PAIR_CHUNK):
        sl = slice(lo, lo + _PAIR_CHUNK)
        within[sl] = np.linalg.norm(samples[c[sl], i[sl]] - samples[c[sl], j[sl]], axis=1)

    n_between = min((n_classes * n_per_class) ** 2, PAIR_SAMPLE_CAP)
    c1 = pair_stream.integers(n_classes, n_between)
    c2 = pair_stream.integers(n_classes - 1, n_between)
    c2 = c2 + (c2 >= c1)
    i1 = pair_stream.integers(n_per_class, n_between)
    i2 = pair_stream.integers(n_per_class, n_between)
    between = np.empty(n_between)
    for lo in range(0, n_between, _PAIR_CHUNK):
        sl = slice(lo, lo + _PAIR_CHUNK)
        between[sl] = np.linalg.norm(
            samples[c1[sl], i1[sl]] - samples[c2[sl], i2[sl]], axis=1
        )

    overlap = float(np.mean(between < np.median(within)))
    return float(within.mean()), float(between.mean()), overlap


GEOMETRY_CSV_HEADER = [
    "dim",
    "n_samples",
    "mean_norm",
    "inside_frac",
    "mean_pair_dist",
    "mean_abs_cos",
]


def write_geometry_csv(reports, path) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GEOMETRY_CSV_HEADER)
        for r in reports:
            writer.writerow(
                [
                    r.dim,
                    r.n_samples,
                    f"{r.mean_norm:.9g}",
                    f"{r.norm_inside_band_frac:.9g}",
                    f"{r.mean_pair_distance:.9g}",
                    f"{r.mean_abs_cosine:.9g}",
                ]
            )
