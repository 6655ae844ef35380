import hashlib
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from tailbond import _rng, cli, curve, predict, synthlab

ACCEPTANCE_LINES = []

PIPELINE_CONFIG = """\
sample_start = 2000-01-31
sample_end = 2012-12-31
oos_split = 2006-07-31
bootstrap_reps = 100
seed = 7
"""

PIPELINE = (
    ["synth", "--noise-sd", "0.01"],
    ["tail-estimate"],
    ["returns"],
    ["predict-is"],
    ["predict-oos"],
    ["portfolio"],
    ["atsm", "--wald-reps", "99"],
    ["three-pass", "--max-p", "5"],
    ["report"],
)


def record(criterion, ok, detail):
    line = f"{criterion}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def run_pipeline(out_dir: Path, threads: int):
    out_dir.mkdir(parents=True, exist_ok=True)
    config = out_dir / "run.cfg"
    config.write_text(PIPELINE_CONFIG)
    codes = {}
    for step in PIPELINE:
        argv = [step[0], "--config", str(config), "--out-dir", str(out_dir), "--threads", str(threads), *step[1:]]
        codes[step[0]] = cli.main(argv)
    return codes


def csv_digests(out_dir: Path):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(out_dir.glob("*.csv"))}


@pytest.fixture(scope="session")
def pipeline_runs(tmp_path_factory):
    """The full synthetic pipeline run once with 1 thread and once with 8."""
    root = tmp_path_factory.mktemp("pipeline")
    runs = {}
    for threads in (1, 8):
        out = root / f"threads{threads}"
        runs[threads] = (out, run_pipeline(out, threads))
    return runs


def ar1(g, T, rho=0.9):
    x = np.empty(T)
    x[0] = g.standard_normal() / np.sqrt(1.0 - rho**2)
    for t in range(1, T):
        x[t] = rho * x[t - 1] + g.standard_normal()
    return x


def _bh_null_pvalue(seed, T=276):
    spec = synthlab.default_atsm_spec(K=3, N=20, T=T, seed=seed, sigma2=0.0)
    _, _, y = synthlab.gen_atsm_panel(spec)
    g = _rng.stream(seed, 7)
    y = y + 5e-5 * g.standard_normal(y.shape)
    tr = pd.Series(ar1(g, T + 1), index=y.index)
    res = predict.bh_bootstrap([60], curve.YieldPanel(y), tr, spec="univ", stat="coef_t", B=499, seed=1000 + seed)
    return res.pvalues[60]


@pytest.fixture(scope="session")
def bh_null_pvalues():
    """Bootstrap p-values of the tail coefficient on 200 samples where yields carry all the information."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return np.array([_bh_null_pvalue(s) for s in range(200)])
