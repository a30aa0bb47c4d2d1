import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def tone(freq, n, rate=32000, amp=0.5, phase=0.0):
    t = np.arange(n) / rate
    return amp * np.sin(2 * np.pi * freq * t + phase)


def averaged_spectrum(x, n_fft=1024):
    """Mean power over non-overlapping Hann frames (a plain periodogram average)."""
    n = len(x) // n_fft
    frames = x[: n * n_fft].reshape(n, n_fft) * np.hanning(n_fft)
    return (np.abs(np.fft.rfft(frames, axis=1)) ** 2).mean(axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, filled in by test_acceptance.py.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
