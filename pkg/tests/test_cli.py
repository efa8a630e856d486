import json
import os

import numpy as np
import pytest

from nlscore.cli import main
from nlscore.evaluation import read_metrics_csv
from nlscore.geometry import annulus_stats
from nlscore.model import CanonicalModel, posterior, save_model
from nlscore.scoring import ScoreType, score_matrix
from nlscore.simulation import config_to_dict, preset_config


SHRINK = ["--set", "n_classes=8", "--set", "rounds=2", "--set", "dims=4",
          "--set", "sigmas=0.5,2", "--set", "n_enroll=2", "--set",
          "n_test_per_class=2"]


def test_presets_lists_all_four(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in ("paper-known", "paper-unknown", "desk-known", "desk-unknown"):
        assert name in out
    assert "600" in out and "0.1,0.2,0.5,1,2,3,4,5" in out


def test_simulate_preset_with_overrides(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--preset", "desk-unknown", *SHRINK, "-o", str(out)]) == 0
    reports = read_metrics_csv(out / "metrics.csv")
    assert len(reports) == 4 * 1 * 2 * (2 + 1)  # types * dims * sigmas * (rounds + agg)
    assert all(r.experiment == "desk-unknown" for r in reports)
    meta = (out / "meta.txt").read_text()
    assert "preset: desk-unknown" in meta


def test_simulate_config_file(tmp_path):
    doc = config_to_dict(preset_config("desk-known", [v for v in SHRINK if v != "--set"]))
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(path), "-o", str(out)]) == 0
    assert (out / "metrics.csv").exists()
    meta = (out / "meta.txt").read_text()
    assert "preset: custom" in meta


def test_simulate_rejects_bad_config_values(tmp_path, capsys):
    doc = config_to_dict(preset_config("desk-known"))
    doc["sigmas"] = [0.5, -1.0]
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    assert main(["simulate", "--config", str(path), "-o", str(tmp_path / "o")]) == 2
    assert "sigmas" in capsys.readouterr().err


def test_simulate_rejects_unknown_config_key(tmp_path, capsys):
    doc = config_to_dict(preset_config("desk-known"))
    doc["n_class"] = 10
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    assert main(["simulate", "--config", str(path), "-o", str(tmp_path / "o")]) == 2
    assert "n_class" in capsys.readouterr().err


def test_simulate_rejects_malformed_json_with_position(tmp_path, capsys):
    path = tmp_path / "config.json"
    path.write_text('{"mode": "KNOWN_MEAN",\n  broken\n}')
    assert main(["simulate", "--config", str(path), "-o", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err


def test_simulate_rejects_unknown_override(tmp_path, capsys):
    rc = main(
        ["simulate", "--preset", "desk-known", "--set", "sigma=1", "-o", str(tmp_path)]
    )
    assert rc == 2
    assert "sigma" in capsys.readouterr().err


def test_simulate_needs_exactly_one_source(tmp_path, capsys):
    assert main(["simulate", "-o", str(tmp_path)]) == 2
    assert main(
        ["simulate", "--preset", "desk-known", "--config", "x.json", "-o", str(tmp_path)]
    ) == 2


def test_simulate_missing_config_file_is_config_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "-o", str(tmp_path)]) == 2


def test_simulate_byte_identical_reruns(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert main(["simulate", "--preset", "desk-unknown", *SHRINK, "-o", str(out)]) == 0
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
    assert (out1 / "meta.txt").read_bytes() == (out2 / "meta.txt").read_bytes()


def test_simulate_dump_scores_and_plot_script(tmp_path):
    out = tmp_path / "run"
    rc = main(
        [
            "simulate", "--preset", "desk-unknown", *SHRINK,
            "--set", "rounds=1", "--set", "sigmas=1",
            "--dump-scores", "--emit-plot-script", "-o", str(out),
        ]
    )
    assert rc == 0
    lines = (out / "scores.csv").read_text().strip().splitlines()
    assert lines[0] == "trial_id,score_type,is_target,value"
    assert len(lines) == 1 + 4 * 16 * 8  # types * tests * classes
    assert (out / "plot_metrics.py").exists()


def test_runtime_failure_exits_one(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rc = main(["simulate", "--preset", "desk-unknown", *SHRINK, "-o", str(blocker)])
    assert rc == 1


# ---------------------------------------------------------------------------
# score + eval
# ---------------------------------------------------------------------------


@pytest.fixture
def score_files(tmp_path):
    model = CanonicalModel(3, np.array([1.0, 2.0, 0.5]), 0.8)
    save_model(model, tmp_path / "model.json")
    rng = np.random.default_rng(0)
    enroll = {f"spk{k}": rng.normal(size=(2, 3)) for k in range(4)}
    with open(tmp_path / "classes.csv", "w") as fh:
        for cid, rows in enroll.items():
            for row in rows:
                fh.write(cid + "," + ",".join(f"{float(v)!r}" for v in row) + "\n")
    tests = rng.normal(size=(6, 3))
    np.savetxt(tmp_path / "tests.csv", tests, delimiter=",")
    truth = ["spk1", "spk0", "spk3", "spk2", "spk1", "spk0"]
    (tmp_path / "truth.txt").write_text("\n".join(truth) + "\n")
    return tmp_path, model, enroll, tests, truth


def test_score_subcommand_matches_library(score_files):
    tmp_path, model, enroll, tests, truth = score_files
    out = tmp_path / "out"
    rc = main(
        [
            "score", "--model", str(tmp_path / "model.json"),
            "--classes", str(tmp_path / "classes.csv"),
            "--tests", str(tmp_path / "tests.csv"),
            "--score-type", "NL_UNKNOWN",
            "--true-class", str(tmp_path / "truth.txt"),
            "-o", str(out),
        ]
    )
    assert rc == 0
    enrollments = [
        posterior(model, rows, cid) for cid, rows in enroll.items()
    ]
    want = score_matrix(model, enrollments, tests, ScoreType.NL_UNKNOWN).values
    lines = (out / "scores.csv").read_text().strip().splitlines()[1:]
    assert len(lines) == 24
    for line in lines:
        trial_id, st, target, value = line.split(",")
        assert st == "NL_UNKNOWN"
        i, k = (int(p[1:]) for p in trial_id.split("_"))
        assert float(value) == want[i, k]
        assert target == str(int(truth[i] == f"spk{k}"))


def test_score_accepts_general_model_via_canonicalization(score_files, tmp_path):
    # scoring through a general-covariance model file must agree with the
    # canonical model the fixture used, up to the transform-invariance bound
    tmp_path_src, model, enroll, tests, truth = score_files
    rng = np.random.default_rng(5)
    a = rng.normal(size=(3, 3)) + 2.0 * np.eye(3)
    b = rng.normal(size=3)
    from nlscore.model import GeneralModel

    general = GeneralModel(
        3,
        global_mean=b,
        between_cov=a @ np.diag(model.between_var) @ a.T,
        within_cov=model.within_var * (a @ a.T),
    )
    save_model(general, tmp_path / "general.json")
    with open(tmp_path / "classes.csv", "w") as fh:
        for cid, rows in enroll.items():
            for row in rows:
                mapped = a @ row + b
                fh.write(cid + "," + ",".join(f"{float(v)!r}" for v in mapped) + "\n")
    np.savetxt(tmp_path / "tests.csv", tests @ a.T + b, delimiter=",")
    out = tmp_path / "out"
    rc = main(
        [
            "score", "--model", str(tmp_path / "general.json"),
            "--classes", str(tmp_path / "classes.csv"),
            "--tests", str(tmp_path / "tests.csv"),
            "--score-type", "NL_UNKNOWN",
            "-o", str(out),
        ]
    )
    assert rc == 0
    enrollments = [posterior(model, rows, cid) for cid, rows in enroll.items()]
    want = score_matrix(model, enrollments, tests, ScoreType.NL_UNKNOWN).values
    for line in (out / "scores.csv").read_text().strip().splitlines()[1:]:
        trial_id, _, _, value = line.split(",")
        i, k = (int(p[1:]) for p in trial_id.split("_"))
        assert abs(float(value) - want[i, k]) <= 1e-6


def test_score_rejects_bad_truth_file(score_files):
    tmp_path, *_ = score_files
    (tmp_path / "bad.txt").write_text("spk0\n")
    rc = main(
        [
            "score", "--model", str(tmp_path / "model.json"),
            "--classes", str(tmp_path / "classes.csv"),
            "--tests", str(tmp_path / "tests.csv"),
            "--score-type", "COSINE",
            "--true-class", str(tmp_path / "bad.txt"),
            "-o", str(tmp_path / "out"),
        ]
    )
    assert rc == 1


def test_eval_subcommand_recovers_metrics(score_files):
    tmp_path, model, enroll, tests, truth = score_files
    out = tmp_path / "out"
    main(
        [
            "score", "--model", str(tmp_path / "model.json"),
            "--classes", str(tmp_path / "classes.csv"),
            "--tests", str(tmp_path / "tests.csv"),
            "--score-type", "EUCLIDEAN",
            "--true-class", str(tmp_path / "truth.txt"),
            "-o", str(out),
        ]
    )
    rc = main(["eval", "--scores", str(out / "scores.csv"), "--det", "5", "-o", str(out)])
    assert rc == 0
    reports = read_metrics_csv(out / "metrics.csv")
    assert len(reports) == 1
    r = reports[0]
    assert r.experiment == "eval" and r.score_type is ScoreType.EUCLIDEAN
    means = np.stack([rows.mean(axis=0) for rows in enroll.values()])
    want = score_matrix(model, means, tests, ScoreType.EUCLIDEAN)
    from nlscore.evaluation import build_trials, compute_eer, compute_idr

    idx = {f"spk{k}": k for k in range(4)}
    t = np.array([idx[c] for c in truth])
    # metrics.csv carries 9 significant digits
    assert r.idr == pytest.approx(compute_idr(want, t), rel=1e-8)
    assert r.eer == pytest.approx(compute_eer(build_trials(want, t)), rel=1e-8)
    det = (out / "det.csv").read_text().splitlines()
    assert det[0] == "group,score_type,threshold,far,frr"
    assert len(det) == 6


def test_eval_rejects_rows_without_target_annotation(tmp_path, capsys):
    path = tmp_path / "scores.csv"
    path.write_text("trial_id,score_type,is_target,value\nt0_c0,COSINE,,0.5\n")
    assert main(["eval", "--scores", str(path), "-o", str(tmp_path / "o")]) == 1
    assert "target annotation" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


def test_geometry_subcommand_matches_library(tmp_path):
    out = tmp_path / "geo"
    rc = main(
        [
            "geometry", "--dim", "10", "--dim", "40",
            "--epsilon", "1.5", "--samples", "500", "--seed", "3",
            "--probe-sigma", "1.0", "--probe-classes", "10", "--probe-per-class", "4",
            "-o", str(out),
        ]
    )
    assert rc == 0
    lines = (out / "geometry.csv").read_text().strip().splitlines()
    assert len(lines) == 3
    want = annulus_stats(10, 1.5, 500, 3)
    cells = lines[1].split(",")
    assert float(cells[2]) == pytest.approx(want.mean_norm, rel=1e-8)
    sep = (out / "separability.csv").read_text().strip().splitlines()
    assert len(sep) == 3
    assert sep[0].startswith("dim,epsilon,sigma")


def test_geometry_probe_flags_go_together(tmp_path):
    rc = main(
        ["geometry", "--dim", "10", "--probe-sigma", "1.0", "-o", str(tmp_path / "g")]
    )
    assert rc == 2
