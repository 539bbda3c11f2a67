"""Per-criterion pass/fail lines collected by the acceptance suite."""

RESULTS: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str, seconds: float) -> str:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} ({seconds:.1f} s)"
    RESULTS[number] = line
    print(line)
    return line
