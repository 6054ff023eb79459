import os
import sys
from pathlib import Path


sys.path.insert(0, str(Path(__file__).parent))

# criterion name -> (status, detail); filled by test_acceptance
CRITERIA: dict[str, tuple[str, str]] = {}


def record(name: str, ok: bool, detail: str = "") -> None:
    CRITERIA[name] = ("PASS" if ok else "FAIL", detail)


def record_skip(name: str, detail: str) -> None:
    CRITERIA[name] = ("SKIPPED", detail)


def lena_path() -> Path | None:
    env = os.environ.get("STABLESEG_LENA")
    for cand in ([Path(env)] if env else []) + [Path(__file__).parent / "data" / "lena256.pgm"]:
        if cand.is_file():
            return cand
    return None


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(CRITERIA, key=lambda s: int(s.split()[0])):
        status, detail = CRITERIA[name]
        line = f"{status:7s} {name}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
