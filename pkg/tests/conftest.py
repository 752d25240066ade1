import numpy as np
import pytest
from hypothesis import settings

from sparsehar.pipeline import SynthClass, SynthSpec, default_fixture, synth_generate

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_streams():
    """Three short users of the default fixture: 2 segments of 10 s per class."""
    return synth_generate(default_fixture(segments_per_class=2, segment_seconds=10.0), seed=3)


@pytest.fixture(scope="session")
def walk_still_spec():
    return SynthSpec(
        classes=[SynthClass("walk", "periodic", frequency=2.0, amplitude=2.0, noise=0.05),
                 SynthClass("still", "noise", noise=0.05)],
        users=1, segments_per_class=2, segment_seconds=10.0,
    )
