import pytest

from empachat import tensor as T


@pytest.fixture(autouse=True)
def _finite_checks():
    # every forward op asserts finite outputs while tests run
    T.set_debug_checks(True)
    yield
    T.set_debug_checks(False)


@pytest.fixture(scope="session")
def fixture_csv():
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "data" / "fixture_dialogues.csv"
    assert path.exists(), f"fixture corpus missing: {path} (run scripts/make_fixture.py)"
    return path
