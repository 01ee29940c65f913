def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.REPORT:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.REPORT):
            terminalreporter.write_line(test_acceptance.REPORT[n])
