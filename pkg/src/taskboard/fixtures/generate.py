"""Regenerate the checked-in trace files from the subject table.

Usage: python -m taskboard.fixtures.generate [--check]

--check verifies the files on disk without rewriting them (exit 1 on drift).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from taskboard.fixtures import SUBJECTS, trace_text


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--check", action="store_true", help="verify, do not write")
    args = parser.parse_args(argv)

    package_dir = Path(__file__).parent
    drifted = []
    for subject in SUBJECTS:
        path = package_dir / f"{subject.endpoint_id}.trace"
        want = trace_text(subject)
        if args.check:
            if not path.exists() or path.read_text(encoding="utf-8") != want:
                drifted.append(path.name)
            continue
        path.write_text(want, encoding="utf-8")
        print(f"wrote {path}", file=sys.stderr)
    if drifted:
        print("stale trace files: " + ", ".join(drifted), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
