import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    verdicts = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) != "call":
                continue
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" not in props:
                continue
            ok, details = verdicts.setdefault(props["criterion"], (True, []))
            verdicts[props["criterion"]] = (ok and rep.passed, details + [props.get("detail", "")])
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(verdicts, key=int):
        ok, details = verdicts[crit]
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}  "
                                    + "; ".join(d for d in details if d))
