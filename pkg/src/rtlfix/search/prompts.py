"""Prompt text for the patch-generation agent."""
from __future__ import annotations

from typing import Optional, Sequence

SYSTEM = """You are repairing a buggy Verilog design. The design fails its testbenches: \
its output waveforms differ from a golden reference. There is no design document; \
you only see the source code, compiler and lint messages, and waveform comparisons.

Only the design source files may be changed. Testbenches and golden waveforms are read-only.

Tools:
- query_code: show lines around a line number, or search identifiers and comments.
- query_waveform: show actual against golden values around a clock cycle.
- compile / run_tests: re-check the current code.
- apply_patch: replace one exact, unique block of text in a source file. Copy the search \
text character for character from the source, without line-number prefixes.
- report_fixed: claim the bug is fixed (this is verified by simulation).

After a patch is applied the design is compiled and simulated automatically. \
Make small, targeted edits."""

DECISION = ("Decide the next step: investigate with query_code or query_waveform, "
            "or propose a fix with apply_patch.")
FIX_COMPILE = "The patched design does not compile. Fix the compile errors with apply_patch."
INVESTIGATION_CLOSED = "You have investigated enough for this step. Propose a fix with apply_patch now."


def initial_prompt(files: Sequence[str], top: str, compile_text: str, failure_text: str,
                   candidates_text: str = "") -> str:
    parts = [f"Design top module: {top}", "Source files: " + ", ".join(files), "",
             "Compiler and lint report:", compile_text.strip(), "",
             "Simulation result:", failure_text.strip()]
    if candidates_text:
        parts += ["", candidates_text.strip()]
    parts += ["", DECISION]
    return "\n".join(parts)


def decision_prompt(tb_passed: int, tb_total: int, compile_errors: int, note: Optional[str] = None) -> str:
    status = f"Current status: {tb_passed}/{tb_total} testbenches pass"
    if compile_errors:
        status += f", {compile_errors} unresolved compile error site(s)"
    text = status + ".\n" + DECISION
    return (note + "\n" + text) if note else text
