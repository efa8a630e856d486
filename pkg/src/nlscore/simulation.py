"""Monte-Carlo experiment driver: sample classes and observations from the
two-level Gaussian model, score (score type x sigma x dimension) grids over
multiple rounds, and emit per-cell metrics.

Reproducibility contract: every random draw comes from a stream derived
from the single config seed by the labelled splitting rule in `rng` --
cell streams are keyed by the dimension and sigma *values* plus the round
index, so results per cell do not depend on grid order or on execution
schedule. Fresh classes are drawn every round.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import __version__
from .evaluation import MetricsReport, TrialPolicy, build_trials, compute_eer, compute_idr
from .model import CanonicalModel, posterior
from .rng import GaussianStream
from .scoring import (
    SCORES_CSV_HEADER,
    ScoreType,
    score_matrix,
    write_score_records,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESETS",
    "PRNG_ID",
    "EER_CONVENTION",
    "cell_streams",
    "sample_classes",
    "sample_observations",
    "run_experiment",
    "config_to_dict",
    "config_from_dict",
    "apply_overrides",
    "load_config",
    "preset_config",
    "write_meta",
]

PRNG_ID = "splitmix64-boxmuller-v1"
EER_CONVENTION = "pooled-midpoint-sweep-linear-interpolation"

MODES = ("KNOWN_MEAN", "UNKNOWN_MEAN")

# score types that are meaningful per mode; anything else is a config error
MODE_SCORE_TYPES = {
    "KNOWN_MEAN": (ScoreType.NL_KNOWN, ScoreType.COSINE, ScoreType.EUCLIDEAN),
    "UNKNOWN_MEAN": (
        ScoreType.NL_UNKNOWN,
        ScoreType.COSINE,
        ScoreType.EUCLIDEAN,
        ScoreType.EUCLIDEAN_AMENDED,
        ScoreType.PLDA_LR,
    ),
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    n_classes: int
    n_enroll: int
    n_test_per_class: int
    rounds: int
    dims: tuple
    sigmas: tuple
    epsilon: float
    score_types: tuple
    seed: int
    trial_policy: TrialPolicy = TrialPolicy()
    use_true_means: bool = False
    name: str = "custom"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {MODES}, got {self.mode!r}")
        for field in ("n_classes", "n_enroll", "n_test_per_class", "rounds"):
            if int(getattr(self, field)) < 1:
                raise ConfigError(f"{field}: must be a positive integer")
        if self.n_classes < 2:
            raise ConfigError("n_classes: need at least 2 classes for trials")
        if not self.dims or any(int(d) < 1 for d in self.dims):
            raise ConfigError("dims: must be a nonempty list of positive integers")
        if not self.sigmas or any(
            not np.isfinite(s) or s <= 0.0 for s in self.sigmas
        ):
            raise ConfigError("sigmas: must be a nonempty list of positive reals")
        if not np.isfinite(self.epsilon) or self.epsilon <= 0.0:
            raise ConfigError("epsilon: must be a positive real")
        if not self.score_types:
            raise ConfigError("score_types: must be nonempty")
        allowed = MODE_SCORE_TYPES[self.mode]
        for st in self.score_types:
            if st not in allowed:
                raise ConfigError(
                    f"score_types: {st.value} is not valid in {self.mode} mode "
                    f"(allowed: {[t.value for t in allowed]})"
                )
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        object.__setattr__(self, "score_types", tuple(self.score_types))


PRESETS = {
    "paper-known": ExperimentConfig(
        mode="KNOWN_MEAN",
        n_classes=600,
        n_enroll=500,
        n_test_per_class=30,
        rounds=1,
        dims=(10, 20, 40, 80),
        sigmas=(0.1, 0.2, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0),
        epsilon=1.0,
        score_types=(ScoreType.NL_KNOWN, ScoreType.COSINE, ScoreType.EUCLIDEAN),
        seed=1001,
        name="paper-known",
    ),
    "paper-unknown": ExperimentConfig(
        mode="UNKNOWN_MEAN",
        n_classes=600,
        n_enroll=1,
        n_test_per_class=3,
        rounds=500,
        dims=(10, 20, 40, 80),
        sigmas=(0.1, 0.2, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0),
        epsilon=1.0,
        score_types=(
            ScoreType.NL_UNKNOWN,
            ScoreType.COSINE,
            ScoreType.EUCLIDEAN,
            ScoreType.EUCLIDEAN_AMENDED,
        ),
        seed=1002,
        name="paper-unknown",
    ),
    "desk-known": ExperimentConfig(
        mode="KNOWN_MEAN",
        n_classes=200,
        n_enroll=100,
        n_test_per_class=10,
        rounds=50,
        dims=(10, 80),
        sigmas=(0.1, 0.5, 1.0, 2.0, 5.0),
        epsilon=1.0,
        score_types=(ScoreType.NL_KNOWN, ScoreType.COSINE, ScoreType.EUCLIDEAN),
        seed=2001,
        name="desk-known",
    ),
    "desk-unknown": ExperimentConfig(
        mode="UNKNOWN_MEAN",
        n_classes=200,
        n_enroll=1,
        n_test_per_class=3,
        rounds=50,
        dims=(10, 80),
        sigmas=(0.1, 0.5, 1.0, 2.0, 5.0),
        epsilon=1.0,
        score_types=(
            ScoreType.NL_UNKNOWN,
            ScoreType.COSINE,
            ScoreType.EUCLIDEAN,
            ScoreType.EUCLIDEAN_AMENDED,
        ),
        seed=2002,
        name="desk-unknown",
    ),
}


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


class CellStreams(NamedTuple):
    classes: GaussianStream
    enroll: GaussianStream
    test: GaussianStream


def cell_streams(seed: int, dim: int, sigma: float, round_index: int) -> CellStreams:
    """The three named streams of one grid cell. Keyed by the dimension and
    sigma values (not grid positions) so a cell's draws are independent of
    how the grid is listed or executed."""
    cell = (
        GaussianStream.from_seed(seed)
        .child("cell")
        .child(int(dim))
        .child(float(sigma))
        .child(int(round_index))
    )
    return CellStreams(cell.child("classes"), cell.child("enroll"), cell.child("test"))


def sample_classes(dim: int, epsilon: float, n_classes: int, stream: GaussianStream) -> np.ndarray:
    """n_classes class means drawn i.i.d. with per-coordinate std epsilon."""
    if dim < 1 or n_classes < 1:
        raise ValueError("dim and n_classes must be positive")
    return epsilon * stream.normals((n_classes, dim))


def sample_observations(mean, sigma: float, n: int, stream: GaussianStream) -> np.ndarray:
    """n observations scattered isotropically around one class mean."""
    mu = np.asarray(mean, dtype=np.float64)
    if mu.ndim != 1:
        raise ValueError("mean must be a vector")
    if n < 1:
        raise ValueError("n must be positive")
    return mu + sigma * stream.normals((n, mu.shape[0]))


def _sample_grouped(means: np.ndarray, sigma: float, n_per: int, stream: GaussianStream) -> np.ndarray:
    """(K, n_per, dim) observations, one block per class, from one stream."""
    k, dim = means.shape
    return means[:, None, :] + sigma * stream.normals((k, n_per, dim))


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------


def _score_cell(config: ExperimentConfig, dim: int, sigma: float, rnd: int):
    """Score one grid cell; returns (reports, matrices, true_class)."""
    model = CanonicalModel(
        dim=dim,
        between_var=np.full(dim, config.epsilon**2),
        within_var=sigma**2,
    )
    streams = cell_streams(config.seed, dim, sigma, rnd)
    means = sample_classes(dim, config.epsilon, config.n_classes, streams.classes)
    enroll_obs = _sample_grouped(means, sigma, config.n_enroll, streams.enroll)
    test_obs = _sample_grouped(means, sigma, config.n_test_per_class, streams.test)
    tests = test_obs.reshape(-1, dim)
    truth = np.repeat(np.arange(config.n_classes), config.n_test_per_class)

    sample_means = enroll_obs.mean(axis=1)
    if config.mode == "KNOWN_MEAN":
        refs = means if config.use_true_means else sample_means
        per_type = {st: refs for st in config.score_types}
    else:
        enrollments = None
        per_type = {}
        for st in config.score_types:
            if st in (ScoreType.NL_UNKNOWN, ScoreType.EUCLIDEAN_AMENDED):
                if enrollments is None:
                    enrollments = [
                        posterior(model, enroll_obs[k], class_id=str(k))
                        for k in range(config.n_classes)
                    ]
                per_type[st] = enrollments
            elif st is ScoreType.PLDA_LR:
                per_type[st] = list(enroll_obs)
            else:
                per_type[st] = sample_means

    reports = []
    matrices = {}
    for st in config.score_types:
        matrix = score_matrix(model, per_type[st], tests, st)
        matrices[st] = matrix
        idr = compute_idr(matrix, truth)
        trials = build_trials(matrix, truth, config.trial_policy)
        eer = compute_eer(trials)
        reports.append(
            MetricsReport(
                experiment=config.name,
                score_type=st,
                dim=dim,
                sigma=sigma,
                round=rnd,
                eer=eer,
                idr=idr,
                n_target=trials.target_scores.size,
                n_nontarget=trials.nontarget_scores.size,
                n_identification_trials=tests.shape[0],
            )
        )
    return reports, matrices, truth


def _cell_reports(args):
    config, dim, sigma, rnd = args
    try:
        return _score_cell(config, dim, sigma, rnd)[0]
    except Exception as exc:
        raise RuntimeError(
            f"cell dim={dim} sigma={sigma:g} round={rnd} failed: {exc}"
        ) from exc


def _aggregate(reports):
    """Mean-over-rounds rows, tagged round = -1."""
    groups: dict = {}
    for r in reports:
        groups.setdefault((r.experiment, r.score_type, r.dim, r.sigma), []).append(r)
    out = []
    for (experiment, st, dim, sigma), rows in groups.items():
        out.append(
            MetricsReport(
                experiment=experiment,
                score_type=st,
                dim=dim,
                sigma=sigma,
                round=-1,
                eer=float(np.mean([r.eer for r in rows])),
                idr=float(np.mean([r.idr for r in rows])),
                n_target=rows[0].n_target,
                n_nontarget=rows[0].n_nontarget,
                n_identification_trials=rows[0].n_identification_trials,
            )
        )
    return out


def run_experiment(config: ExperimentConfig, workers: int = 1, score_file=None):
    """Run the full grid and return per-round reports plus one aggregated
    (round = -1) row per cell.

    `score_file`, when given, receives every scored trial as CSV (forces
    serial execution). Results are independent of `workers`.
    """
    cells = [
        (config, dim, sigma, rnd)
        for dim in config.dims
        for sigma in config.sigmas
        for rnd in range(config.rounds)
    ]
    reports = []
    if score_file is not None or workers <= 1:
        if score_file is not None:
            score_file.write(SCORES_CSV_HEADER + "\n")
        for args in cells:
            _, dim, sigma, rnd = args
            try:
                cell_reports, matrices, truth = _score_cell(config, dim, sigma, rnd)
            except Exception as exc:
                raise RuntimeError(
                    f"cell dim={dim} sigma={sigma:g} round={rnd} failed: {exc}"
                ) from exc
            reports.extend(cell_reports)
            if score_file is not None:
                prefix = f"d{dim}_s{sigma:g}_r{rnd}_"
                for st in config.score_types:
                    write_score_records(score_file, matrices[st], truth, prefix)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cell_reports in pool.map(_cell_reports, cells):
                reports.extend(cell_reports)
    reports.extend(_aggregate(reports))
    return reports


# ---------------------------------------------------------------------------
# config documents and overrides
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = (
    "mode",
    "n_classes",
    "n_enroll",
    "n_test_per_class",
    "rounds",
    "dims",
    "sigmas",
    "epsilon",
    "score_types",
    "seed",
)
_OPTIONAL_KEYS = ("trial_policy", "use_true_means", "name")
_ALL_KEYS = _REQUIRED_KEYS + _OPTIONAL_KEYS


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "name": config.name,
        "mode": config.mode,
        "n_classes": config.n_classes,
        "n_enroll": config.n_enroll,
        "n_test_per_class": config.n_test_per_class,
        "rounds": config.rounds,
        "dims": list(config.dims),
        "sigmas": list(config.sigmas),
        "epsilon": config.epsilon,
        "score_types": [st.value for st in config.score_types],
        "seed": config.seed,
        "trial_policy": config.trial_policy.format(),
        "use_true_means": config.use_true_means,
    }


def _coerce(doc: dict, key: str, kind, caster):
    value = doc[key]
    try:
        return caster(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: expected {kind}, got {value!r} ({exc})") from None


def config_from_dict(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - set(_ALL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = set(_REQUIRED_KEYS) - set(doc)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")

    def int_list(v):
        return tuple(int(x) for x in v)

    def float_list(v):
        return tuple(float(x) for x in v)

    def types_list(v):
        return tuple(ScoreType(str(x)) for x in v)

    kwargs = {
        "mode": str(doc["mode"]),
        "n_classes": _coerce(doc, "n_classes", "int", int),
        "n_enroll": _coerce(doc, "n_enroll", "int", int),
        "n_test_per_class": _coerce(doc, "n_test_per_class", "int", int),
        "rounds": _coerce(doc, "rounds", "int", int),
        "dims": _coerce(doc, "dims", "list of ints", int_list),
        "sigmas": _coerce(doc, "sigmas", "list of reals", float_list),
        "epsilon": _coerce(doc, "epsilon", "real", float),
        "seed": _coerce(doc, "seed", "int", int),
    }
    try:
        kwargs["score_types"] = types_list(doc["score_types"])
    except ValueError as exc:
        raise ConfigError(f"score_types: {exc}") from None
    if "trial_policy" in doc:
        try:
            kwargs["trial_policy"] = TrialPolicy.parse(doc["trial_policy"])
        except ValueError as exc:
            raise ConfigError(f"trial_policy: {exc}") from None
    if "use_true_means" in doc:
        value = doc["use_true_means"]
        if not isinstance(value, bool):
            raise ConfigError(f"use_true_means: expected a boolean, got {value!r}")
        kwargs["use_true_means"] = value
    if "name" in doc:
        kwargs["name"] = str(doc["name"])
    return ExperimentConfig(**kwargs)


_LIST_KEYS = {"dims", "sigmas", "score_types"}
_INT_KEYS = {"n_classes", "n_enroll", "n_test_per_class", "rounds", "seed"}
_FLOAT_KEYS = {"epsilon"}
_BOOL_KEYS = {"use_true_means"}


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply key=value strings onto a config document. List values are
    comma-separated ('sigmas=0.1,1,5'); unknown keys are errors."""
    out = dict(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"unknown config key in override: {key!r}")
        if key in _LIST_KEYS:
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            if key == "dims":
                out[key] = [_parse_num(key, p, int) for p in parts]
            elif key == "sigmas":
                out[key] = [_parse_num(key, p, float) for p in parts]
            else:
                out[key] = parts
        elif key in _INT_KEYS:
            out[key] = _parse_num(key, raw, int)
        elif key in _FLOAT_KEYS:
            out[key] = _parse_num(key, raw, float)
        elif key in _BOOL_KEYS:
            if raw.lower() not in ("true", "false"):
                raise ConfigError(f"{key}: expected true or false, got {raw!r}")
            out[key] = raw.lower() == "true"
        else:
            out[key] = raw
    return out


def _parse_num(key, text, caster):
    try:
        return caster(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r}") from None


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read a JSON config file, apply overrides, validate."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return config_from_dict(apply_overrides(doc, overrides))


def preset_config(name: str, overrides=()) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        )
    doc = config_to_dict(PRESETS[name])
    return config_from_dict(apply_overrides(doc, overrides))


def write_meta(path, config: ExperimentConfig, preset_name: str | None = None) -> None:
    """Deterministic run metadata next to the metrics CSV."""
    lines = [
        f"artifact_version: {__version__}",
        f"preset: {preset_name or 'custom'}",
        f"seed: {config.seed}",
        f"prng: {PRNG_ID}",
        f"eer_convention: {EER_CONVENTION}",
        f"config: {json.dumps(config_to_dict(config), sort_keys=True)}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def scaled_config(config: ExperimentConfig, **changes) -> ExperimentConfig:
    """Convenience for tests and scripts: a copy with fields replaced."""
    return replace(config, **changes)
