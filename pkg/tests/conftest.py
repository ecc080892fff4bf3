import time

import pytest

_RESULTS: list[tuple[int, str, bool, str, float]] = []


class CriterionRecorder:
    """Collects named sub-checks for one acceptance criterion."""

    def __init__(self, number: int, title: str, budget_s: float):
        self.number, self.title, self.budget_s = number, title, budget_s
        self.checks: list[tuple[str, bool, str]] = []
        self.t0 = time.perf_counter()

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        self.checks.append((name, bool(ok), detail))
        return bool(ok)

    def finish(self, shared_s: float = 0.0) -> None:
        """``shared_s`` adds the cost of fixtures computed once for several criteria."""
        elapsed = time.perf_counter() - self.t0 + shared_s
        self.check("runtime", elapsed < self.budget_s, f"{elapsed:.1f}s < {self.budget_s:.0f}s")
        passed = all(ok for _, ok, _ in self.checks)
        detail = "; ".join(f"{'ok' if ok else 'FAILED'} {n} ({d})" if d else f"{'ok' if ok else 'FAILED'} {n}"
                           for n, ok, d in self.checks)
        _RESULTS.append((self.number, self.title, passed, detail, elapsed))
        print(f"\nCRITERION {self.number} {'PASS' if passed else 'FAIL'}: {self.title} | {detail}")
        failed = [f"{n}: {d}" for n, ok, d in self.checks if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def criterion():
    def make(number: int, title: str, budget_s: float) -> CriterionRecorder:
        return CriterionRecorder(number, title, budget_s)
    return make


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail, elapsed in sorted(_RESULTS):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {number}: {title} [{elapsed:.1f}s]")
        terminalreporter.write_line(f"    {detail}")
