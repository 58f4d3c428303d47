import pytest

from mirrortrap.config import load_config
from mirrortrap.session import Session


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("basis-cache")


@pytest.fixture(scope="session")
def config(cache_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    text = f"output_dir: {out}\nsolver:\n  cache_dir: {cache_dir}\n"
    return load_config(text=text)


@pytest.fixture(scope="session")
def session(config):
    """Reference-resolution session shared by every test; the basis is solved once."""
    return Session(config)


@pytest.fixture(scope="session")
def basis(session):
    return session.basis


@pytest.fixture(scope="session")
def layout(session):
    return session.layout


@pytest.fixture(scope="session")
def drive(session):
    return session.drive


@pytest.fixture(scope="session")
def ion(session):
    return session.ion


_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture(scope="session")
def acceptance_log(request):
    """criterion -> (status, detail lines); printed after the run."""
    return request.config.stash[_ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(log):
        status, lines = log[crit]
        terminalreporter.write_line(f"criterion {crit:>2}: {status}")
        for ln in lines:
            terminalreporter.write_line(f"    {ln}")
