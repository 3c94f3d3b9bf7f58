import json

import pytest

from qmm3dqa.cli import main
from qmm3dqa.corpus import make_corpus
from qmm3dqa.model_io import write_ply

from conftest import make_point_cloud


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("clicorpus")
    manifest = make_corpus(out, contents=2, levels=5, points=900, seed=21)
    return manifest, out


@pytest.fixture()
def model_file(tmp_path):
    path = tmp_path / "cloud.ply"
    write_ply(make_point_cloud(900, seed=61), path)
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_render_writes_twelve_pngs(model_file, tmp_path):
    out = tmp_path / "views"
    assert run("render", "--model", model_file, "--out", out,
               "--resolution", "128") == 0
    files = sorted(p.name for p in out.glob("*.png"))
    assert len(files) == 12


def test_missing_model_exits_2(tmp_path, capsys):
    code = run("render", "--model", tmp_path / "nope.ply", "--out", tmp_path)
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_config_mismatch_exits_3(model_file, tmp_path):
    # 7 x 32 = 224 > 128 triggers the sampler guard at runtime.
    code = run("qmm", "--model", model_file, "--out", tmp_path / "q.png",
               "--resolution", "128", "--seed", "1")
    assert code == 3


def test_qmm_deterministic_and_provenance(model_file, tmp_path):
    out1 = tmp_path / "a.png"
    out2 = tmp_path / "b.png"
    for out in (out1, out2):
        assert run("qmm", "--model", model_file, "--out", out,
                   "--resolution", "256", "--splat", "2.0",
                   "--seed", "5") == 0
    assert out1.read_bytes() == out2.read_bytes()
    prov1 = json.loads(out1.with_suffix(".provenance.json").read_text())
    prov2 = json.loads(out2.with_suffix(".provenance.json").read_text())
    assert prov1 == prov2
    assert len(prov1["slots"]) == 49


def test_qmm_single_view_provenance(model_file, tmp_path):
    out = tmp_path / "v1.png"
    assert run("qmm", "--model", model_file, "--out", out,
               "--resolution", "256", "--splat", "2.0", "--views", "1",
               "--seed", "2") == 0
    prov = json.loads(out.with_suffix(".provenance.json").read_text())
    views = {s.get("view") for s in prov["slots"] if "view" in s}
    assert views == {1}


def test_train_evaluate_roundtrip(cli_corpus, tmp_path):
    manifest, base = cli_corpus
    state = tmp_path / "state.bin"
    report = tmp_path / "train.json"
    assert run(
        "train", "--manifest", manifest, "--out", state, "--report", report,
        "--resolution", "256", "--splat", "2.0", "--epochs", "4",
        "--lr", "0.02", "--batch", "8", "--seed", "3",
    ) == 0
    data = json.loads(report.read_text())
    assert len(data["epochs"]) == 4
    out = tmp_path / "eval.json"
    assert run(
        "evaluate", "--manifest", manifest, "--state", state, "--out", out,
        "--resolution", "256", "--splat", "2.0", "--seed", "3",
    ) == 0
    rep = json.loads(out.read_text())
    assert set(rep) == {"srcc", "plcc", "krcc", "rmse", "beta", "n"}
    assert rep["n"] == 10


def test_evaluate_oracle_unity(cli_corpus, tmp_path):
    manifest, _ = cli_corpus
    out = tmp_path / "oracle.json"
    assert run("evaluate", "--manifest", manifest, "--oracle",
               "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["srcc"] == 1.0


def test_evaluate_needs_state_or_oracle(cli_corpus, tmp_path):
    manifest, _ = cli_corpus
    assert run("evaluate", "--manifest", manifest,
               "--out", tmp_path / "x.json") == 2


def test_crossval_oracle_smoke(cli_corpus, tmp_path):
    manifest, _ = cli_corpus
    out = tmp_path / "cv.json"
    assert run("crossval", "--manifest", manifest, "--k", "2", "--oracle",
               "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["mean"]["srcc"] == 1.0
    assert len(rep["folds"]) == 2


def test_crossval_five_folds(tmp_path):
    corpus = tmp_path / "c5"
    assert run("synth", "--out", corpus, "--contents", "5", "--levels", "5",
               "--points", "200", "--seed", "2") == 0
    out = tmp_path / "cv5.json"
    assert run("crossval", "--manifest", corpus / "manifest.json", "--k", "5",
               "--oracle", "--out", out) == 0
    rep = json.loads(out.read_text())
    assert len(rep["folds"]) == 5
    assert rep["mean"]["srcc"] == 1.0


def test_crossdb_oracle_smoke(cli_corpus, tmp_path):
    manifest, _ = cli_corpus
    out = tmp_path / "cdb.json"
    assert run("crossdb", "--train-manifest", manifest,
               "--test-manifest", manifest, "--k-test", "2", "--oracle",
               "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["mean"]["srcc"] == 1.0


def test_bench_reports(cli_corpus, tmp_path):
    manifest, _ = cli_corpus
    out = tmp_path / "bench.json"
    timings = tmp_path / "timings.json"
    assert run(
        "bench", "--manifest", manifest, "--mode", "III", "--trials", "3",
        "--out", out, "--timings-out", timings,
        "--resolution", "256", "--splat", "2.0",
    ) == 0
    rep = json.loads(out.read_text())
    assert rep["extractor_invocations"] == 10  # one per corpus entry
    assert "stage_seconds" not in rep
    assert "stage_seconds" in json.loads(timings.read_text())


def test_sweep_oracle(cli_corpus, tmp_path):
    manifest, _ = cli_corpus
    out = tmp_path / "sweep.json"
    csv = tmp_path / "sweep.csv"
    assert run(
        "sweep", "--manifest", manifest, "--views-list", "1,6", "--k", "2",
        "--oracle", "--out", out, "--csv", csv,
    ) == 0
    rep = json.loads(out.read_text())
    assert [p["num_views"] for p in rep["points"]] == [1, 6]
    assert csv.read_text().startswith("num_views,quota")


def test_synth_command(tmp_path):
    out = tmp_path / "corpus"
    assert run("synth", "--out", out, "--contents", "2", "--levels", "3",
               "--points", "200", "--seed", "1") == 0
    assert (out / "manifest.json").exists()
    assert len(list(out.glob("*.ply"))) == 6


def test_config_file_defaults(model_file, tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('resolution = 256\nsplat = 2.0\nseed = 5\n')
    out = tmp_path / "cfg.png"
    assert run("qmm", "--model", model_file, "--out", out,
               "--config", cfg) == 0
    # Flag overrides config: resolution 128 now fails the grid guard.
    assert run("qmm", "--model", model_file, "--out", out,
               "--config", cfg, "--resolution", "128") == 3


def test_cli_rerun_byte_identical(cli_corpus, tmp_path):
    manifest, _ = cli_corpus
    state = tmp_path / "state.bin"
    report = tmp_path / "report.json"

    def train_once():
        assert run(
            "train", "--manifest", manifest, "--out", state,
            "--report", report, "--resolution", "256", "--splat", "2.0",
            "--epochs", "2", "--lr", "0.02", "--batch", "8", "--seed", "9",
        ) == 0
        return state.read_bytes(), report.read_bytes()

    s1, r1 = train_once()
    s2, r2 = train_once()
    assert s1 == s2 and r1 == r2
