"""Shared record of acceptance outcomes, printed in the pytest summary."""

LINES = []


def report(number, title, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] AC{number:02d} {title}" + (f": {detail}" if detail else "")
    LINES.append((number, line))
    print(line, flush=True)
    return passed
