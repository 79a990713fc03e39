import string
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from pagehtr.ctc import Alphabet, EmissionGrid

DATA = Path(__file__).parent / "data"
FIXTURES = Path(str(resources.files("pagehtr") / "data" / "fixtures"))


def random_grid(rng: np.random.Generator, n: int, m: int, alpha: float = 1.0) -> EmissionGrid:
    """Rows drawn from a symmetric Dirichlet; symbols are blank + 'a', 'b', ..."""
    symbols = string.ascii_lowercase + string.digits + string.ascii_uppercase + string.punctuation
    alphabet = Alphabet.from_chars(symbols[: m - 1])
    probs = rng.dirichlet(np.full(m, alpha), size=n)
    return EmissionGrid(alphabet, probs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def corpus_lines():
    return (DATA / "corpus.txt").read_text(encoding="utf-8").splitlines()


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _ACCEPTANCE[f"{number:02d}"] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        status, title = _ACCEPTANCE[key]
        terminalreporter.write_line(f"[{status}] criterion {int(key):>2}: {title}")
