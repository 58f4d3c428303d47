"""Run directories, CSV tables and manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import platform
import re
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__

FLOAT_FORMAT = "{:.10g}"


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return FLOAT_FORMAT.format(float(x) + 0.0)  # no "-0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "" if x is None else str(x)


def csv_text(header, rows) -> str:
    """CSV with ``\\n`` line endings and fixed float formatting."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(x) for x in r])
    return buf.getvalue()


def aligned_table(header, rows) -> str:
    cells = [list(header)] + [[_cell(x) for x in r] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


class RunDirectory:
    """One output directory per subcommand invocation, named ``<command>-NNN``."""

    def __init__(self, root, command: str, config=None, argv=None):
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        pat = re.compile(rf"^{re.escape(command)}-(\d+)$")
        taken = [int(m.group(1)) for p in root.iterdir() if (m := pat.match(p.name))]
        self.path = root / f"{command}-{max(taken, default=0) + 1:03d}"
        self.path.mkdir()
        self.command = command
        self.config = config
        self.argv = list(argv or [])
        self.files = []
        self.extra = {}

    def write_csv(self, name: str, header, rows) -> Path:
        return self.write_text(name, csv_text(header, rows))

    def write_text(self, name: str, text: str) -> Path:
        p = self.path / name
        p.write_text(text)
        self.files.append(name)
        return p

    def finish(self, status: int) -> Path:
        files = {
            name: hashlib.sha256((self.path / name).read_bytes()).hexdigest() for name in self.files
        }
        manifest = {
            "tool": "mirrortrap",
            "version": __version__,
            "command": self.command,
            "argv": self.argv,
            "exit_status": int(status),
            "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "python": sys.version.split()[0],
            "platform": platform.platform(),
            "files": files,
        }
        if self.config is not None:
            manifest["config_source"] = self.config.source
            manifest["config_sha256"] = self.config.digest()
        manifest.update(self.extra)
        p = self.path / "manifest.yaml"
        p.write_text(yaml.safe_dump(manifest, sort_keys=False))
        return p
