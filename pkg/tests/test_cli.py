import json

import numpy as np
import pytest

from penrt.cli import main
from penrt.dataset import DurationDataset
from penrt.ingest import SubjectRecording, serialize_recording
from penrt.synth import emit_pen_streams


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def ref_csv(tmp_path, capsys):
    path = tmp_path / "ref.csv"
    assert run(capsys, "synth", "--seed", 42, "--out", path)[0] == 0
    return path


@pytest.fixture
def small_csv(tmp_path, reference_cohort):
    rows = [i for i, s in enumerate(reference_cohort.subject_ids) if s.endswith(("-01", "-02"))]
    path = tmp_path / "small.csv"
    path.write_text(reference_cohort.subset(rows).to_csv())
    return path


def test_extract_five_recordings(tmp_path, capsys, reference_cohort):
    recs = emit_pen_streams(reference_cohort.subset(range(5)), seed=0)
    d = tmp_path / "recs"
    d.mkdir()
    for k, r in enumerate(recs):
        (d / f"{k}.csv").write_text(serialize_recording(r))
    code, out, _ = run(capsys, "extract", d, "--mode", 4)
    assert code == 0
    assert len(out.strip().splitlines()) == 6


def test_extract_reports_missing_tasks(tmp_path, capsys, reference_cohort):
    (rec,) = emit_pen_streams(reference_cohort.subset([0]), seed=0)
    rec = SubjectRecording(rec.subject_id, rec.label, {t: v for t, v in rec.tasks.items() if t < 4})
    d = tmp_path / "recs"
    d.mkdir()
    (d / "a.csv").write_text(serialize_recording(rec))
    code, out, err = run(capsys, "extract", d, "--format", "json")
    assert code == 0 and "missing tasks 4,5,6,7" in err
    assert json.loads(out)["missing_tasks"] == {rec.subject_id: [4, 5, 6, 7]}


def test_extract_error_has_file_and_line(tmp_path, capsys):
    d = tmp_path / "recs"
    d.mkdir()
    (d / "bad.csv").write_text("# subject: a\n# label: HC\n1,0,0,0,1,0,0\n1,x,0,0,1,0,0\n")
    code, _, err = run(capsys, "extract", d)
    assert code == 1 and "bad.csv:4" in err


def test_bad_mode_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["extract", str(tmp_path), "--mode", "6"])
    assert info.value.code == 2


def test_synth_extract_round_trip(tmp_path, capsys, ref_csv):
    streams = tmp_path / "streams"
    assert run(capsys, "synth", "--seed", 42, "--streams", streams, "--out", tmp_path / "a.csv")[0] == 0
    assert run(capsys, "extract", streams, "--out", tmp_path / "b.csv")[0] == 0
    assert (tmp_path / "b.csv").read_text() == ref_csv.read_text()
    assert json.loads((tmp_path / "b.csv.json").read_text())["n_subjects"] == 53


def test_synth_deterministic(capsys):
    a = run(capsys, "synth", "--seed", 42)[1]
    b = run(capsys, "synth", "--seed", 42)[1]
    assert a == b and a.count("\n") == 54


def test_default_grid_size(capsys, small_csv):
    code, out, _ = run(capsys, "gridsearch", small_csv, "--c", "1", "--gamma", "1")
    rep = json.loads(out)
    assert code == 0 and rep["n_configurations"] == 127
    assert rep["run"]["grid"]["c"] == [1.0]


@pytest.mark.slow
def test_full_default_grid_reports_12700(capsys, small_csv):
    rep = json.loads(run(capsys, "gridsearch", small_csv)[1])
    assert rep["n_configurations"] == 12_700


def test_single_config_ncv_equals_loocv(capsys, ref_csv):
    flags = ["--tasks", "2,4,7", "--c", "0.5", "--gamma", "10"]
    g = json.loads(run(capsys, "gridsearch", ref_csv, *flags)[1])["loocv"]
    n = json.loads(run(capsys, "ncv", ref_csv, *flags)[1])["ncv"]
    for key in ("errors", "accuracy", "sensitivity", "specificity", "confusion", "best_config"):
        assert g[key] == n[key]


@pytest.mark.parametrize(
    "argv",
    [
        ["gridsearch", "--tasks", "2,4,7", "--c", "1,10", "--gamma", "1,2"],
        ["ncv", "--tasks", "2,4,7", "--c", "1,10", "--gamma", "1,2"],
        ["kfold", "--tasks", "2,4,7", "--c", "1", "--gamma", "2", "--seed", "3", "--repetitions", "20"],
        ["gm-fit"],
        ["gm-eval"],
        ["adhoc-train"],
        ["adhoc-eval"],
    ],
    ids=lambda a: a[0],
)
def test_json_byte_identical_across_runs_and_threads(capsys, ref_csv, argv):
    outs = [run(capsys, argv[0], ref_csv, *argv[1:], "--threads", t)[1] for t in (1, 8, 1)]
    assert outs[0] == outs[1] == outs[2]
    assert "threads" not in outs[0]
    json.loads(outs[0])


def test_gm_fit_table(capsys, ref_csv, tmp_path):
    code, out, _ = run(capsys, "gm-fit", ref_csv, "--format", "md", "--model-out", tmp_path / "m.json")
    rows = [ln for ln in out.splitlines() if ln.startswith("| ") and ln[2].isdigit()]
    assert code == 0 and len(rows) == 8
    assert "| HC | t2 |" in out and "| ES-AD | t2 |" in out
    code, out, _ = run(capsys, "gm-eval", ref_csv, "--model", tmp_path / "m.json")
    assert code == 0 and json.loads(out)["rows"][0]["evaluation"] == "given model"


def test_gm_fit_unusable_cell_shows_dash(capsys, tmp_path, reference_cohort):
    rows = [i for i, s in enumerate(reference_cohort.subject_ids) if s != "R4-HC-02"]
    path = tmp_path / "d.csv"
    path.write_text(reference_cohort.subset(rows).to_csv())
    out = run(capsys, "gm-fit", path, "--format", "md")[1]
    (line,) = [ln for ln in out.splitlines() if ln.startswith("| 4 | HC")]
    assert "−" in line


def test_adhoc_eval_rows(capsys, ref_csv, tmp_path):
    rep = json.loads(run(capsys, "adhoc-eval", ref_csv)[1])
    assert [r["evaluation"] for r in rep["rows"]] == ["train-as-test", "LOOCV"]
    code, out, _ = run(capsys, "adhoc-train", ref_csv, "--format", "md", "--model-out", tmp_path / "t.json")
    assert code == 0 and "optimal interval" in out
    rep = json.loads(run(capsys, "adhoc-eval", ref_csv, "--model", tmp_path / "t.json")[1])
    assert rep["rows"][0]["errors"] == json.loads((tmp_path / "t.json").read_text())["errors"]


def test_kfold_csv_histogram(capsys, ref_csv):
    code, out, _ = run(capsys, "kfold", ref_csv, "--tasks", "2,4,7", "--c", "1", "--gamma", "2",
                       "--seed", "1", "--repetitions", "10", "--k", "27", "--format", "csv")
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "error_count,frequency"
    assert sum(int(ln.split(",")[1]) for ln in lines[1:]) == 10


def test_md_out_writes_json_sibling(capsys, ref_csv, tmp_path):
    out = tmp_path / "r.md"
    assert run(capsys, "adhoc-eval", ref_csv, "--format", "md", "--out", out)[0] == 0
    assert out.read_text().startswith("# ")
    json.loads((tmp_path / "r.md.json").read_text())


def test_errors_give_nonzero_exit(capsys, tmp_path):
    code, _, err = run(capsys, "gm-fit", tmp_path / "missing.csv")
    assert code == 1 and "error" in err
    p = tmp_path / "one.csv"
    p.write_text(DurationDataset(("a",), ("HC",), np.ones((1, 7))).to_csv())
    assert run(capsys, "gridsearch", p, "--tasks", "1", "--c", "1", "--gamma", "1")[0] == 1
    assert run(capsys, "gm-fit", p, "--format", "csv")[0] != 0
