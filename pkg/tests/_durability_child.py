"""Child process for the crash-durability check.

Appends records as fast as it can and prints "ACK <seq>" only after
append() has returned, i.e. after the record is fsynced. The parent
SIGKILLs this process at a random moment and then verifies that every
acknowledged seq survives recovery. Run: python3 _durability_child.py DIR
"""

import sys
from pathlib import Path

from studyhall.clock import WallClock
from studyhall.eventlog import DurableLog


def main() -> None:
    directory = Path(sys.argv[1])
    log = DurableLog(directory, WallClock())
    out = sys.stdout
    i = 0
    while True:
        # vary the payload a little so torn tails land mid-record too
        body = {"i": i, "pad": "x" * (i % 97)}
        rec = log.append("Telemetry", "child", body)
        out.write(f"ACK {rec.seq}\n")
        out.flush()
        i += 1


if __name__ == "__main__":
    main()
