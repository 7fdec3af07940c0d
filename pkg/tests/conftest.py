import sys


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance checks (slow)")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance summary")
        for line in lines:
            terminalreporter.write_line(line)
