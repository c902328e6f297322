import json
import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

DATA = TESTS / "data"
CONFIGS = TESTS / "fixtures" / "configs"


@pytest.fixture(scope="session")
def ml_oracle():
    return json.loads((DATA / "ml_oracle.json").read_text())


@pytest.fixture(scope="session")
def golden_configs():
    return sorted(CONFIGS.glob("*.toml"))


def run_golden_suite(outdir, threads):
    """Run every golden config through the CLI; returns {config name: exit code}."""
    from ncmd.cli import main

    codes = {}
    for cfg in sorted(CONFIGS.glob("*.toml")):
        codes[cfg.name] = main(["run", str(cfg), "--out", str(outdir), "--threads", str(threads)])
    return codes


@pytest.fixture(scope="session")
def golden_runs(tmp_path_factory):
    """Two full runs of the golden suite with different thread counts."""
    runs = []
    for threads in (1, 3):
        out = tmp_path_factory.mktemp(f"golden_t{threads}")
        runs.append((out, run_golden_suite(out, threads)))
    return runs
