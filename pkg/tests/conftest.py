import pytest

import senet.solver as solver
from helpers import ACCEPTANCE, FIT_LOG, kkt_violations
from senet.diagnostics import kkt_residual

_original_result = solver._result


def _recording_result(data, fam, lam, cfg, *args, **kwargs):
    res = _original_result(data, fam, lam, cfg, *args, **kwargs)
    if res.converged:
        FIT_LOG.append((fam.name, kkt_residual(res, data, fam, lam, cfg)))
    return res


solver._result = _recording_result


def pytest_sessionfinish(session, exitstatus):
    if kkt_violations() and session.exitstatus == 0:
        session.exitstatus = pytest.ExitCode.TESTS_FAILED


def pytest_terminal_summary(terminalreporter):
    tr = terminalreporter
    bad = kkt_violations()
    worst = {}
    for fam, v in FIT_LOG:
        worst[fam] = max(worst.get(fam, 0.0), v)
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        tr.write_line(ACCEPTANCE[k])
    detail = ", ".join(f"{f} max {v:.2e}" for f, v in sorted(worst.items()))
    tr.write_line(
        f"criterion 2 (suite-wide): {'FAIL' if bad else 'PASS'} | "
        f"{len(FIT_LOG)} converged fits rechecked, {len(bad)} violations; {detail}"
    )
