"""Integration acceptance: the host pipeline's cross validation runs to
completion against this bridge on the synthetic corpus with held-out
SRCC >= 0.6.  Drives everything through the host CLI, which is the
bridge's only consumer surface."""

import json
import os
import shutil
import subprocess
import sys

import pytest

HOST_CLI = shutil.which("qmm3dqa")
BRIDGE_CMD = f"{sys.executable} -m qmm_bridge"


@pytest.mark.skipif(HOST_CLI is None, reason="host CLI not installed")
def test_crossval_against_real_bridge(tmp_path):
    corpus = tmp_path / "corpus"
    run = [
        HOST_CLI, "synth", "--out", str(corpus),
        "--contents", "4", "--levels", "6", "--points", "3000", "--seed", "0",
    ]
    subprocess.run(run, check=True, capture_output=True, text=True)

    out = tmp_path / "cv.json"
    env = dict(os.environ, QMM3DQA_BRIDGE=BRIDGE_CMD)
    result = subprocess.run(
        [
            HOST_CLI, "crossval",
            "--manifest", str(corpus / "manifest.json"),
            "--k", "2", "--out", str(out),
            "--extractor", "bridge",
            "--resolution", "256", "--splat", "2.0",
            "--epochs", "25", "--lr", "0.01", "--batch", "32",
            "--seed", "0",
        ],
        env=env,
        capture_output=True,
        text=True,
        timeout=1800,
    )
    assert result.returncode == 0, result.stderr
    report = json.loads(out.read_text())
    assert len(report["folds"]) == 2
    srcc = report["mean"]["srcc"]
    print(f"bridge crossval mean SRCC = {srcc:.3f}")
    assert srcc >= 0.6, f"mean held-out SRCC {srcc:.3f} < 0.6"
