import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from zsrec import synthetic  # noqa: E402
from zsrec.dataset import DatasetConfig, parse_items, parse_ratings, prepare  # noqa: E402
from zsrec.scorer import fit_ngram  # noqa: E402


@pytest.fixture(scope="session")
def synth_paths(tmp_path_factory):
    return synthetic.write_dataset(tmp_path_factory.mktemp("synth"), n_users=120, seed=0)


@pytest.fixture(scope="session")
def synth_data(synth_paths):
    ratings = parse_ratings(synth_paths["ratings"].read_bytes())
    items = parse_items(synth_paths["movies"].read_bytes())
    return prepare(ratings, items, DatasetConfig(seed=0))


@pytest.fixture(scope="session")
def synth_ngram(synth_paths):
    return fit_ngram(synth_paths["corpus"].read_text().splitlines())


def ml1m_dir():
    """Directory holding MovieLens 1M ratings.dat/movies.dat, if one is available."""
    candidates = [os.environ.get("ZSREC_ML1M_DIR"), Path(__file__).parent.parent / "data" / "ml-1m"]
    for c in candidates:
        if c and (Path(c) / "ratings.dat").exists() and (Path(c) / "movies.dat").exists():
            return Path(c)
    return None


# -- acceptance summary --------------------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = report.outcome.upper()
        if report.skipped:
            outcome = "SKIPPED"
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
            outcome += f" ({reason})"
        _ACCEPTANCE[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{name}: {_ACCEPTANCE[name]}")
