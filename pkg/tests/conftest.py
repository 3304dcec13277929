VERDICTS = {}


def record_verdict(number, title, ok, detail=""):
    VERDICTS[number] = (title, ok, detail)
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}  {detail}"
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        title, ok, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}  {detail}")
