import numpy as np
import pytest

ACCEPTANCE_LINES = []


def acceptance(number, ok, text, tag=None):
    """Record one acceptance-criterion outcome; printed in the terminal summary.

    ``tag`` overrides PASS/FAIL for non-gating lines (REPORT, INFO, SKIP).
    """
    ACCEPTANCE_LINES.append((number, tag or ("PASS" if ok else "FAIL"), text))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, tag, text in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {tag}  {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


N_AUDIT_SEEDS = 20


@pytest.fixture(scope="session")
def planted_audits():
    from semgaudit.synth.recovery import planted_spec, run_synthetic_audit

    return [run_synthetic_audit(planted_spec(seed)) for seed in range(N_AUDIT_SEEDS)]


@pytest.fixture(scope="session")
def null_audits():
    from semgaudit.synth.recovery import null_spec, run_synthetic_audit

    return [run_synthetic_audit(null_spec(1000 + seed)) for seed in range(N_AUDIT_SEEDS)]


@pytest.fixture(scope="session")
def smoke_runs(tmp_path_factory):
    """Two fresh smoke runs in separate directories plus a cached rerun of the first."""
    import time

    from semgaudit.cli import main

    base = tmp_path_factory.mktemp("smoke")
    out = {}
    for name in ("a", "b"):
        t0 = time.perf_counter()
        code = main(["run", "--config", "smoke", "--out", str(base / name)])
        out[name] = {"dir": base / name, "code": code, "seconds": time.perf_counter() - t0}
    return out
