import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cadence.corpus import Recording  # noqa: E402


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 12-subject synthetic corpus shared by the slower integration tests."""
    from cadence.synth import generate_synthetic_corpus

    out = tmp_path_factory.mktemp("corpus12")
    generate_synthetic_corpus(12, 11, out, n_background=2)
    return out / "manifest.json"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tone(freq, duration=1.0, sr=16000, amp=0.5):
    t = np.arange(int(duration * sr)) / sr
    return Recording(amp * np.sin(2 * np.pi * freq * t), sr)


# One verdict line per acceptance criterion, printed at the end of the run.
ACCEPTANCE: dict = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'} - {detail}")
