from collections import OrderedDict

import pytest

# criterion number -> list of (part label, passed, detail)
_CRITERIA: "OrderedDict[int, list]" = OrderedDict()
_TITLES: dict[int, str] = {}


class CriterionRecorder:
    def check(self, number, title, part, passed, detail=""):
        """Record one sub-check of an acceptance criterion, then assert it."""
        _TITLES[number] = title
        _CRITERIA.setdefault(number, []).append((part, bool(passed), detail))
        assert passed, f"criterion {number} [{part}]: {detail}"

    def note(self, number, title, part, detail):
        """Informational line that never fails the criterion."""
        _TITLES[number] = title
        _CRITERIA.setdefault(number, []).append((part, None, detail))


@pytest.fixture(scope="session")
def criterion():
    return CriterionRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        ok = all(p is not False for _, p, _ in parts)
        tr.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {_TITLES[number]}")
        for label, passed, detail in parts:
            tag = "note" if passed is None else ("ok" if passed else "FAILED")
            tr.write_line(f"      {tag:<6} {label}: {detail}")
