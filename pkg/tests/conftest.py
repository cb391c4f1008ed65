import numpy as np
import pytest

from smoothmpf.panel import DesignSet

_acceptance: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        props = dict(report.user_properties)
        label = props.get("criterion", report.nodeid.split("::")[-1])
        _acceptance.append((report.outcome.upper(), label, str(props.get("detail", ""))))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for outcome, label, detail in _acceptance:
        line = f"{'PASS' if outcome == 'PASSED' else 'FAIL'}  {label}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_design(X, Y, W=None, aheads=None, times=None):
    """DesignSet straight from arrays, one location per row unless times given."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n, q = Y.shape
    W = np.ones_like(Y) if W is None else np.asarray(W, dtype=float)
    aheads = tuple(range(q)) if aheads is None else tuple(aheads)
    if times is None:
        rows = tuple((f"g{i:03d}", 0) for i in range(n))
    else:
        rows = tuple((f"g{i:03d}", int(t)) for i, t in enumerate(times))
    return DesignSet(
        X=X,
        Y=Y * W,
        W=W,
        row_index=rows,
        column_index=tuple((f"x{k}", 0) for k in range(X.shape[1])),
        aheads=aheads,
    )
