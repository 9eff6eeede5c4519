ACCEPTANCE_FILE = "test_acceptance.py"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    results: dict[str, str] = {}
    for status, outcome in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = str(getattr(rep, "nodeid", ""))
            if ACCEPTANCE_FILE not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            if outcome == "FAIL" or name not in results:
                results[name] = outcome
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name in sorted(results):
            terminalreporter.write_line(f"{name}: {results[name]}")
