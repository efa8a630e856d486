"""Command-line interface.

Subcommands:
    simulate   run a preset or config-file experiment grid, emit metrics CSV
    score      score class/test vector files with one score type
    eval       recompute metrics from a scores CSV
    geometry   concentration / separability diagnostics as CSV
    presets    list the built-in experiment presets

Exit codes: 0 success, 2 invalid configuration or invocation, 1 runtime
failure. All randomness flows from config seeds; nothing reads entropy from
the environment, so identical invocations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import os
import re
import sys

import numpy as np

from .evaluation import (
    MetricsReport,
    TrialSet,
    compute_eer,
    compute_idr,
    det_points,
    write_metrics_csv,
)
from .geometry import annulus_stats, separability_probe, write_geometry_csv
from .model import CanonicalModel, apply_transform, canonicalize, load_model, posterior
from .scoring import (
    SCORES_CSV_HEADER,
    ScoreType,
    score_matrix,
    write_score_records,
)
from .simulation import (
    ConfigError,
    PRESETS,
    load_config,
    preset_config,
    run_experiment,
    write_meta,
)

_PLOT_TEMPLATE = '''"""Plot metrics.csv produced by `nlscore simulate`.

Generated template; edit freely. Expects matplotlib.
"""

import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "metrics.csv"
rows = list(csv.DictReader(open(path)))
agg = [r for r in rows if int(r["round"]) == -1]

for metric in ("eer", "idr"):
    fig, ax = plt.subplots()
    series = defaultdict(list)
    for r in agg:
        series[(r["score_type"], r["dim"])].append((float(r["sigma"]), float(r[metric])))
    for (score_type, dim), points in sorted(series.items()):
        points.sort()
        ax.plot(*zip(*points), marker="o", label=f"{score_type} d={dim}")
    ax.set_xlabel("sigma")
    ax.set_ylabel(metric.upper())
    ax.legend()
    fig.savefig(f"{metric}.png", dpi=150)
    print(f"wrote {metric}.png")
'''


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    if bool(args.preset) == bool(args.config):
        raise ConfigError("simulate needs exactly one of --preset or --config")
    if args.preset:
        config = preset_config(args.preset, args.set)
        preset_name = args.preset
    else:
        try:
            config = load_config(args.config, args.set)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        preset_name = None
    out = _ensure_outdir(args.output_dir)
    score_file = None
    try:
        if args.dump_scores:
            score_file = open(os.path.join(out, "scores.csv"), "w", encoding="utf-8")
        reports = run_experiment(config, workers=args.workers, score_file=score_file)
    finally:
        if score_file is not None:
            score_file.close()
    write_metrics_csv(reports, os.path.join(out, "metrics.csv"))
    write_meta(os.path.join(out, "meta.txt"), config, preset_name)
    if args.emit_plot_script:
        with open(os.path.join(out, "plot_metrics.py"), "w", encoding="utf-8") as fh:
            fh.write(_PLOT_TEMPLATE)
    print(f"wrote {os.path.join(out, 'metrics.csv')}")
    return 0


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def _read_class_rows(path: str):
    """CSV rows of `class_id,v1,...,vd`; returns ids in first-appearance
    order and the list of row vectors per id."""
    ids: list = []
    groups: dict = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            cid = row[0].strip()
            try:
                vec = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from None
            if not vec:
                raise ValueError(f"{path}:{line_no}: row has no vector components")
            if cid not in groups:
                ids.append(cid)
                groups[cid] = []
            groups[cid].append(vec)
    if not ids:
        raise ValueError(f"{path}: no class rows found")
    return ids, [np.asarray(groups[cid], dtype=np.float64) for cid in ids]


def _read_vectors(path: str) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no vectors found")
    return np.asarray(rows, dtype=np.float64)


def _cmd_score(args) -> int:
    model = load_model(args.model)
    transform = None
    if not isinstance(model, CanonicalModel):
        model, transform = canonicalize(model)
    ids, sample_sets = _read_class_rows(args.classes)
    tests = _read_vectors(args.tests)
    if transform is not None:
        sample_sets = [
            np.stack([apply_transform(transform, v) for v in s]) for s in sample_sets
        ]
        tests = np.stack([apply_transform(transform, v) for v in tests])
    score_type = ScoreType(args.score_type)
    if score_type in (ScoreType.NL_KNOWN, ScoreType.COSINE, ScoreType.EUCLIDEAN):
        classes = np.stack([s.mean(axis=0) for s in sample_sets])
    elif score_type is ScoreType.PLDA_LR:
        classes = sample_sets
    else:
        classes = [
            posterior(model, s, class_id=cid) for cid, s in zip(ids, sample_sets)
        ]
    matrix = score_matrix(model, classes, tests, score_type)

    true_class = None
    if args.true_class:
        with open(args.true_class, "r", encoding="utf-8") as fh:
            labels = [line.strip() for line in fh if line.strip()]
        if len(labels) != tests.shape[0]:
            raise ValueError(
                f"{args.true_class}: has {len(labels)} labels for {tests.shape[0]} tests"
            )
        index = {cid: k for k, cid in enumerate(ids)}
        missing = sorted({l for l in labels if l not in index})
        if missing:
            raise ValueError(f"{args.true_class}: unknown class ids {missing}")
        true_class = np.asarray([index[l] for l in labels], dtype=np.int64)

    out = _ensure_outdir(args.output_dir)
    path = os.path.join(out, "scores.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SCORES_CSV_HEADER + "\n")
        write_score_records(fh, matrix, true_class)
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

_TRIAL_ID_RE = re.compile(r"^(?:(?P<prefix>.*)_)?t(?P<test>\d+)_c(?P<cls>\d+)$")


def _cmd_eval(args) -> int:
    groups: dict = {}
    with open(args.scores, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCORES_CSV_HEADER.split(","):
            raise ValueError(f"{args.scores}: unexpected header {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            trial_id, type_name, target_text, value_text = row
            m = _TRIAL_ID_RE.match(trial_id)
            if m is None:
                raise ValueError(
                    f"{args.scores}:{line_no}: cannot parse trial id {trial_id!r}"
                )
            if target_text == "":
                raise ValueError(
                    f"{args.scores}:{line_no}: row has no target annotation; "
                    "metrics need is_target"
                )
            key = (type_name, m.group("prefix") or "")
            groups.setdefault(key, []).append(
                (
                    int(m.group("test")),
                    int(m.group("cls")),
                    bool(int(target_text)),
                    float(value_text),
                )
            )
    if not groups:
        raise ValueError(f"{args.scores}: no score rows found")

    out = _ensure_outdir(args.output_dir)
    reports = []
    det_rows = []
    for (type_name, prefix), cells in sorted(groups.items()):
        n_tests = max(c[0] for c in cells) + 1
        n_classes = max(c[1] for c in cells) + 1
        values = np.full((n_tests, n_classes), np.nan)
        truth = np.full(n_tests, -1, dtype=np.int64)
        for t, k, is_target, value in cells:
            values[t, k] = value
            if is_target:
                truth[t] = k
        if np.isnan(values).any():
            raise ValueError(
                f"{args.scores}: incomplete score matrix for "
                f"score_type={type_name} group={prefix!r}"
            )
        if (truth < 0).any():
            raise ValueError(
                f"{args.scores}: some tests have no target row for "
                f"score_type={type_name} group={prefix!r}"
            )
        trials = TrialSet(
            values[np.arange(n_tests), truth],
            values[truth[:, None] != np.arange(n_classes)[None, :]],
        )
        experiment = f"eval:{prefix}" if prefix else "eval"
        reports.append(
            MetricsReport(
                experiment=experiment,
                score_type=ScoreType(type_name),
                dim=0,
                sigma=0.0,
                round=0,
                eer=compute_eer(trials),
                idr=compute_idr(values, truth),
                n_target=n_tests,
                n_nontarget=n_tests * (n_classes - 1),
                n_identification_trials=n_tests,
            )
        )
        if args.det:
            for t, far, frr in det_points(trials, args.det):
                det_rows.append((experiment, type_name, t, far, frr))
    write_metrics_csv(reports, os.path.join(out, "metrics.csv"))
    if args.det:
        with open(os.path.join(out, "det.csv"), "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["group", "score_type", "threshold", "far", "frr"])
            for group, type_name, t, far, frr in det_rows:
                writer.writerow(
                    [group, type_name, f"{t:.9g}", f"{far:.9g}", f"{frr:.9g}"]
                )
    print(f"wrote {os.path.join(out, 'metrics.csv')}")
    return 0


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


def _cmd_geometry(args) -> int:
    out = _ensure_outdir(args.output_dir)
    reports = [
        annulus_stats(dim, args.epsilon, args.samples, args.seed) for dim in args.dim
    ]
    write_geometry_csv(reports, os.path.join(out, "geometry.csv"))
    probe_opts = (args.probe_sigma, args.probe_classes, args.probe_per_class)
    if any(v is not None for v in probe_opts):
        if not all(v is not None for v in probe_opts):
            raise ConfigError(
                "--probe-sigma, --probe-classes and --probe-per-class go together"
            )
        path = os.path.join(out, "separability.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                [
                    "dim",
                    "epsilon",
                    "sigma",
                    "n_classes",
                    "n_per_class",
                    "within_mean",
                    "between_mean",
                    "overlap_frac",
                ]
            )
            for dim in args.dim:
                within, between, overlap = separability_probe(
                    dim,
                    args.epsilon,
                    args.probe_sigma,
                    args.probe_classes,
                    args.probe_per_class,
                    args.seed,
                )
                writer.writerow(
                    [
                        dim,
                        f"{args.epsilon:.9g}",
                        f"{args.probe_sigma:.9g}",
                        args.probe_classes,
                        args.probe_per_class,
                        f"{within:.9g}",
                        f"{between:.9g}",
                        f"{overlap:.9g}",
                    ]
                )
    print(f"wrote {os.path.join(out, 'geometry.csv')}")
    return 0


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def _cmd_presets(_args) -> int:
    columns = [
        "preset",
        "mode",
        "classes",
        "enroll",
        "test/class",
        "rounds",
        "dims",
        "sigmas",
        "score_types",
        "seed",
    ]
    rows = []
    for name in sorted(PRESETS):
        c = PRESETS[name]
        rows.append(
            [
                name,
                c.mode,
                str(c.n_classes),
                str(c.n_enroll),
                str(c.n_test_per_class),
                str(c.rounds),
                ",".join(str(d) for d in c.dims),
                ",".join(f"{s:g}" for s in c.sigmas),
                ",".join(st.value for st in c.score_types),
                str(c.seed),
            ]
        )
    widths = [max(len(r[i]) for r in [columns] + rows) for i in range(len(columns))]
    print("  ".join(h.ljust(w) for h, w in zip(columns, widths)))
    for row in rows:
        print("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlscore",
        description="Normalized-likelihood scoring and simulation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment grid")
    sim.add_argument("--preset", help=f"one of: {', '.join(sorted(PRESETS))}")
    sim.add_argument("--config", help="JSON config file")
    sim.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (lists comma-separated, e.g. sigmas=0.1,1,5)",
    )
    sim.add_argument("-o", "--output-dir", required=True)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument(
        "--dump-scores",
        action="store_true",
        help="also write every trial score (large!)",
    )
    sim.add_argument("--emit-plot-script", action="store_true")
    sim.set_defaults(func=_cmd_simulate)

    sco = sub.add_parser("score", help="score vector files")
    sco.add_argument("--model", required=True, help="model JSON file")
    sco.add_argument(
        "--classes",
        required=True,
        help="CSV of class_id,v1,..,vd rows (several rows per class = enrollment samples)",
    )
    sco.add_argument("--tests", required=True, help="CSV of test vectors")
    sco.add_argument(
        "--score-type", required=True, choices=[t.value for t in ScoreType]
    )
    sco.add_argument("--true-class", help="file with one class id per test row")
    sco.add_argument("-o", "--output-dir", required=True)
    sco.set_defaults(func=_cmd_score)

    ev = sub.add_parser("eval", help="metrics from a scores CSV")
    ev.add_argument("--scores", required=True)
    ev.add_argument("--det", type=int, default=0, metavar="N", help="also write N DET points")
    ev.add_argument("-o", "--output-dir", required=True)
    ev.set_defaults(func=_cmd_eval)

    geo = sub.add_parser("geometry", help="high-dimension diagnostics")
    geo.add_argument("--dim", action="append", type=int, required=True)
    geo.add_argument("--epsilon", type=float, default=1.0)
    geo.add_argument("--samples", type=int, default=2000)
    geo.add_argument("--seed", type=int, default=0)
    geo.add_argument("--probe-sigma", type=float)
    geo.add_argument("--probe-classes", type=int)
    geo.add_argument("--probe-per-class", type=int)
    geo.add_argument("-o", "--output-dir", required=True)
    geo.set_defaults(func=_cmd_geometry)

    pre = sub.add_parser("presets", help="list built-in presets")
    pre.set_defaults(func=_cmd_presets)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
