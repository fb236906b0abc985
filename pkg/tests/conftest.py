"""Shared test plumbing: the acceptance-criteria summary block.

Each acceptance test registers its verdict with `record_criterion`; the
terminal summary then prints one PASS/FAIL line per criterion so the
outcome is visible even when per-test output is captured.
"""

_CRITERIA = [
    ("A1", "gradient suite"),
    ("A2", "zero-init identity"),
    ("A3", "freeze invariance"),
    ("A4", "padding isolation"),
    ("A5", "guidance identities"),
    ("A6", "decode schedule"),
    ("A7", "tokenizer/oracle exactness"),
    ("A9", "decode determinism"),
    ("A8", "controllability experiment"),
]

_results: dict[str, tuple[bool, str]] = {}


def record_criterion(tag: str, ok: bool, detail: str = "") -> None:
    _results[tag] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for tag, title in _CRITERIA:
        if tag in _results:
            ok, detail = _results[tag]
            verdict = "PASS" if ok else "FAIL"
            suffix = f"  [{detail}]" if detail else ""
        else:
            verdict, suffix = "NOT RUN", ""
        terminalreporter.write_line(f"{tag} {title}: {verdict}{suffix}")
