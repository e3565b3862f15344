import server_testutil


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if server_testutil.ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in server_testutil.ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
