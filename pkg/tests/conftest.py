"""Shared test plumbing.

Redirects the null-table cache into a per-session temp directory so tests
never touch the user cache, and prints one PASS/FAIL line per acceptance
criterion in the terminal summary.
"""

import os
import tempfile

import pytest

_cache_tmp = tempfile.mkdtemp(prefix="otrank-test-cache-")
os.environ["OTRANK_CACHE"] = _cache_tmp

# criterion id -> one-line detail recorded by the acceptance tests
ACCEPTANCE_LOG: dict[int, str] = {}

_CRITERIA = {
    1: "assignment solver matches brute force exactly",
    2: "d=1 ranks are classical ranks/N; Wilcoxon identity",
    3: "asymptotic null size in [0.03, 0.07] (d=2,3)",
    4: "null law identical across data distributions (KS)",
    5: "efficiency constants 3/pi, 108/125, large-d limit 0.648",
    6: "kappa closed form vs quadrature; d=1 convention reported",
    7: "sample-size matching: uniform-vs-Hotelling gap, Gaussian dominance",
    8: "rank-map convergence in N",
    9: "independence suite size/power",
    10: "property suites",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reports = terminalreporter.stats.get("passed", []) + \
        terminalreporter.stats.get("failed", []) + \
        terminalreporter.stats.get("error", [])
    outcomes = {}
    for rep in reports:
        if "test_acceptance.py::test_criterion_" in rep.nodeid:
            num = int(rep.nodeid.split("test_criterion_")[1].split("_")[0])
            outcomes[num] = rep.outcome
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        if num not in outcomes:
            continue
        status = "PASS" if outcomes[num] == "passed" else "FAIL"
        detail = ACCEPTANCE_LOG.get(num, _CRITERIA[num])
        terminalreporter.write_line(f"criterion {num:2d}: {status} - {detail}")
