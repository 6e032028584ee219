from collections import defaultdict

ACCEPTANCE = defaultdict(list)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[crit]
        bad = [c for c in checks if not c.passed]
        status = "FAIL" if bad else "PASS"
        extra = f" ({len(bad)} of {len(checks)} sub-checks failed: {', '.join(c.name for c in bad)})" if bad else ""
        tr.write_line(f"criterion {crit:>2}: {status}{extra}")
    tr.section("acceptance sub-checks")
    for crit in sorted(ACCEPTANCE):
        for c in ACCEPTANCE[crit]:
            tr.write_line(c.line())
