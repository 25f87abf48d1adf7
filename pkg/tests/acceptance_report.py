"""Collects one PASS/FAIL line per acceptance criterion for the session summary."""

LINES: dict[int, str] = {}


def record(num: int, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {detail}"
    LINES[num] = line
    print(line)
    return ok
