"""Shared registry of acceptance gate outcomes, printed by the conftest summary hook."""

REPORT: dict[int, list[tuple[str, bool, str]]] = {}


def gate(criterion: int, name: str, ok: bool, detail: str) -> bool:
    ok = bool(ok)
    REPORT.setdefault(criterion, []).append((name, ok, detail))
    print(f"{'PASS' if ok else 'FAIL'} criterion {criterion} [{name}]: {detail}")
    return ok
