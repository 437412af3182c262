"""Collects outcomes of tests marked ``acceptance`` and prints one verdict per criterion."""

from collections import defaultdict

_TITLES: dict[int, str] = {}
_OUTCOMES: dict[int, list[tuple[str, bool]]] = defaultdict(list)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            _TITLES[mark.args[0]] = mark.args[1]


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        _OUTCOMES[mark.args[0]].append((item.name, call.excinfo is None))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_TITLES):
        runs = _OUTCOMES.get(n, [])
        if not runs:
            continue
        ok = all(passed for _, passed in runs)
        failed = [name for name, passed in runs if not passed]
        suffix = "" if ok else f"  (failing: {', '.join(failed)})"
        terminalreporter.write_line(f"ACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}: {_TITLES[n]}{suffix}")
