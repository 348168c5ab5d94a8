import numpy as np
import pytest

from plmdecode import ctc
from plmdecode.alphabet import build_alphabet

# name -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s[1:])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")


def random_posteriorgram(rng, T, phonemes=("a", "b", "c"), boundary=True, scale=1.5):
    labels = [ctc.BLANK, *phonemes] + ([ctc.BOUNDARY] if boundary else [])
    logits = rng.normal(0.0, scale, size=(T, len(labels)))
    frames = logits - np.logaddexp.reduce(logits, axis=1, keepdims=True)
    return ctc.Posteriorgram(frames, labels, 0)


@pytest.fixture
def abc():
    return build_alphabet({"x": {"a", "b", "c"}})


@pytest.fixture
def two_lang():
    return build_alphabet({"L1": {"a", "b"}, "L2": {"b", "c"}})
