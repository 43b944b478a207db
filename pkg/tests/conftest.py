import numpy as np
import pytest

from genfeat.nn import tensor as T


@pytest.fixture(autouse=True)
def float64_default():
    """Every test starts and ends in 64-bit mode."""
    previous = T.default_dtype()
    T.set_default_dtype(np.float64)
    yield
    T.set_default_dtype(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class Criterion:
    """Outcome of one acceptance criterion; any exception inside the block fails it."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.passed, self.details = True, []

    def check(self, ok, detail: str) -> None:
        self.passed &= bool(ok)
        self.details.append(("ok  " if ok else "BAD ") + detail)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number}: {status}  {self.title}"


ACCEPTANCE_RESULTS: list = []


@pytest.fixture
def criterion():
    """Context-manager factory: ``with criterion(n, title) as c: c.check(...)``."""
    import contextlib
    import time

    @contextlib.contextmanager
    def open_criterion(number, title, max_seconds=None):
        c = Criterion(number, title)
        start = time.perf_counter()
        try:
            yield c
        except BaseException as exc:
            c.check(False, f"raised {type(exc).__name__}: {exc}")
            raise
        finally:
            if max_seconds is not None:
                elapsed = time.perf_counter() - start
                c.check(elapsed < max_seconds, f"runtime {elapsed:.2f}s < {max_seconds}s")
            ACCEPTANCE_RESULTS.append(c)
            print(c.line())
            for d in c.details:
                print("    " + d)
        assert c.passed, "\n".join(c.details)

    return open_criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE_RESULTS, key=lambda c: c.number):
        terminalreporter.write_line(c.line())
