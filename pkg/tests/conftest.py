def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, after the usual summary."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", None) != "call" and outcome != "error":
                continue
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props:
                rows.append((int(props["criterion"]), "PASS" if outcome == "passed" else "FAIL",
                             props.get("title", ""), props.get("detail", "")))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, verdict, title, detail in sorted(rows):
        terminalreporter.write_line(f"criterion {num:2d} {verdict}  {title}: {detail}")
