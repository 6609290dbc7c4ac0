"""Trained-model trend check, driven end to end through the attack toolkit's
CLI and CSV interfaces so the two packages stay decoupled.

The perturbation budget for the bounded methods is a desk-scale choice: the
upstream default (0.02) is tuned for ~270k-pixel inputs, while these digits
have 64 pixels, so PGD runs with epsilon 0.2 here. C&W carries no budget and
FGSM keeps its default.
"""

import csv
import subprocess
import sys
from collections import defaultdict
from pathlib import Path

import pytest

GAMMAS = (1.0, 0.75, 0.5, 0.25)


def run_cli(args):
    proc = subprocess.run(
        [sys.executable, "-m", "locnoise.cli", "attack", *args],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    return proc


def read_cells(out_dir: Path):
    rows = {}
    with open(out_dir / "report.csv", newline="") as f:
        for rec in csv.DictReader(f):
            rows[(rec["method"], float(rec["gamma"]))] = rec
    mpv = defaultdict(list)
    with open(out_dir / "detail.csv", newline="") as f:
        for rec in csv.DictReader(f):
            mpv[(rec["method"], float(rec["gamma"]))].append(float(rec["mpv"]))
    mpv_avg = {cell: sum(v) / len(v) for cell, v in mpv.items()}
    return rows, mpv_avg


@pytest.fixture(scope="module")
def campaign(bundle, tmp_path_factory):
    _, _, paths = bundle
    base = [
        "--model", str(paths["weights"]),
        "--images", str(paths["images"]),
        "--gammas", ",".join(str(g) for g in GAMMAS),
    ]
    pgd_out = tmp_path_factory.mktemp("pgd_out")
    run_cli(base + ["--methods", "pgd", "--epsilon", "0.2", "--out", str(pgd_out)])
    rest_out = tmp_path_factory.mktemp("rest_out")
    run_cli(base + ["--methods", "fgsm,cw", "--out", str(rest_out)])
    pgd_rows, pgd_mpv = read_cells(pgd_out)
    rest_rows, rest_mpv = read_cells(rest_out)
    return {**pgd_rows, **rest_rows}, {**pgd_mpv, **rest_mpv}


def test_pgd_full_mask_asr(campaign):
    rows, _ = campaign
    asr = float(rows[("pgd", 1.0)]["asr"])
    print(f"pgd gamma=1.0 asr = {asr}")
    assert asr >= 0.9


def test_cw_quarter_mask_asr(campaign):
    rows, _ = campaign
    asr = float(rows[("cw", 0.25)]["asr"])
    print(f"cw gamma=0.25 asr = {asr}")
    assert asr >= 0.5


@pytest.mark.parametrize("method", ["fgsm", "pgd", "cw"])
def test_mpv_decreases_with_gamma(campaign, method):
    _, mpv = campaign
    values = [mpv[(method, g)] for g in GAMMAS]
    assert all(a > b for a, b in zip(values, values[1:])), (method, values)


@pytest.mark.parametrize("method", ["pgd", "cw"])
def test_iterations_increase_at_quarter_mask(campaign, method):
    rows, _ = campaign
    full = float(rows[(method, 1.0)]["avg_iters"])
    quarter = float(rows[(method, 0.25)]["avg_iters"])
    assert quarter > full, (method, full, quarter)
