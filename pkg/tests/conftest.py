def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        import acceptance_report
    except ImportError:
        return
    if acceptance_report.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_report.RESULTS:
            terminalreporter.write_line(line)
