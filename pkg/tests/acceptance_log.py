"""Shared record of acceptance outcomes, printed in the pytest terminal summary."""

LINES: list[tuple[int, bool, str]] = []


def record(n: int, ok: bool, detail: str) -> None:
    LINES.append((n, ok, detail))
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail
