import pytest

from wormhole_lab.harmonic import shoot_harmonic


_CACHE = {}


def harmonic_map(n):
    if n not in _CACHE:
        _CACHE[n] = shoot_harmonic(n)
    return _CACHE[n]


@pytest.fixture(scope="session")
def hm1():
    return harmonic_map(1)


@pytest.fixture(scope="session")
def hm2():
    return harmonic_map(2)


@pytest.fixture(scope="session")
def hm3():
    return harmonic_map(3)


_VERDICTS = {}


@pytest.fixture(scope="session")
def acceptance_verdicts():
    return _VERDICTS


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_VERDICTS):
        verdict, text = _VERDICTS[k]
        terminalreporter.write_line(f"{'PASS' if verdict else 'FAIL'}  {text}")
