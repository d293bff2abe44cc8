import re
from collections import OrderedDict

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_results: "OrderedDict[int, list[tuple[str, str, str]]]" = OrderedDict()


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        name = report.nodeid.split("::")[-1]
        _results.setdefault(int(m.group(1)), []).append((name, report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_results):
        rows = _results[num]
        ok = all(outcome == "passed" for _, outcome, _ in rows)
        tr.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}")
        for name, outcome, detail in rows:
            tr.write_line(f"    {outcome.upper():7s} {name}  {detail}")
