import pytest

from pairspec import density, dispersion


@pytest.fixture(scope="session")
def canon():
    return density.canon()


@pytest.fixture(scope="session")
def canon_cc(canon):
    return dispersion.critical_couplings(canon)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(label: str, ok: bool, detail: str, elapsed: float):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail} ({elapsed:.2f} s)"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
