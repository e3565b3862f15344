import testutil


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if testutil.ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in testutil.ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
