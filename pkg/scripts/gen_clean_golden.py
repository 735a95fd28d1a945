#!/usr/bin/env python3
"""One-off generator for the text-cleaning golden fixture.

Applies the documented cleaning rules with a character-scanning
implementation written independently of sentirisk.text.clean_text (which is
regex-based), so the committed golden file is a genuine cross-check rather
than a snapshot of the code under test.

Usage: python scripts/gen_clean_golden.py
Reads  tests/fixtures/clean_inputs.jsonl  (one JSON string per line)
Writes tests/fixtures/clean_golden.jsonl  (one JSON string per line)
"""

from __future__ import annotations

import json
from pathlib import Path

SCHEME_CHARS = set("abcdefghijklmnopqrstuvwxyz0123456789+.-")
KEEP = set("abcdefghijklmnopqrstuvwxyz0123456789$")


def _strip_urls(s: str) -> str:
    """Remove scheme:// and www.-prefixed runs through the next whitespace."""
    out: list[str] = []
    i, n = 0, len(s)
    while i < n:
        ch = s[i]
        if "a" <= ch <= "z":
            j = i
            while j < n and s[j] in SCHEME_CHARS:
                j += 1
            if s[j : j + 3] == "://" and j + 3 < n and not s[j + 3].isspace():
                k = j + 3
                while k < n and not s[k].isspace():
                    k += 1
                out.append(" ")
                i = k
                continue
        at_boundary = i == 0 or not (s[i - 1].isalnum() or s[i - 1] == "_")
        if (s.startswith("www.", i) and at_boundary
                and i + 4 < n and not s[i + 4].isspace()):
            k = i + 4
            while k < n and not s[k].isspace():
                k += 1
            out.append(" ")
            i = k
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def reference_clean(raw: str) -> str:
    s = raw.lower()
    s = _strip_urls(s)
    s = "".join(ch for ch in s if ch in KEEP or ch.isspace())
    s = s.replace("$", "")
    return " ".join(s.split())


def main() -> None:
    fixtures = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    inputs = [
        json.loads(line)
        for line in (fixtures / "clean_inputs.jsonl").read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    with (fixtures / "clean_golden.jsonl").open("w", encoding="utf-8") as fh:
        for raw in inputs:
            fh.write(json.dumps(reference_clean(raw), ensure_ascii=False) + "\n")
    print(f"wrote {len(inputs)} golden lines")


if __name__ == "__main__":
    main()
