"""Prints one pass/fail line per acceptance criterion after the run."""

_RESULTS = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _RESULTS[props["criterion"]] = (props.get("order", 0), report.passed,
                                        props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: _RESULTS[k][0]):
        _, ok, detail = _RESULTS[key]
        line = f"{'PASS' if ok else 'FAIL'}  {key}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
