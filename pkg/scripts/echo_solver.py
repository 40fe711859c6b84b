#!/usr/bin/env python3
"""Identity harness for the external-solver bridge: reads the flow config
under the given workdir and reports each flow rate back as a sensor value,
so a round trip should reproduce the sent vector exactly."""

import sys
from pathlib import Path


def main() -> int:
    workdir = Path(sys.argv[1])
    records = []
    for line in (workdir / "flow_config.txt").read_text().splitlines():
        if not line.strip():
            continue
        server_id, alpha = (part.strip() for part in line.split(","))
        records.append((server_id, alpha))
    out = [f"sensor-{i + 1}, {alpha}" for i, (_, alpha) in enumerate(records)]
    (workdir / "sensor_output.txt").write_text("\n".join(out) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
