"""Report emission helpers.

Every report is CSV with `#`-prefixed header lines carrying canonical JSON
metadata (tool version, master seed, effective command config), so each
output file is self-describing and byte-reproducible for a fixed seed and
inputs. Readers can skip the metadata with comment='#'.
"""

from __future__ import annotations

import json
import os
import tempfile


def fmt(value) -> str:
    """Deterministic cell formatting; floats use up to 8 significant digits."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".8g")
    return str(value)


def meta_block(meta: dict) -> str:
    return "# " + json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n"


def write_csv(path, meta: dict, header: list[str], rows) -> None:
    """Write metadata comment, header and rows atomically."""
    lines = [meta_block(meta), ",".join(header) + "\n"]
    lines.extend(",".join(fmt(v) for v in row) + "\n" for row in rows)
    data = "".join(lines).encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".report-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def survival_histogram(survivals, bin_width: int = 10, max_steps: int = 200):
    """(bin_lo, bin_hi, count, fraction) rows over (0, max_steps]."""
    import numpy as np

    survivals = np.asarray(survivals, dtype=float)
    edges = np.arange(0, max_steps + bin_width, bin_width)
    counts, _ = np.histogram(survivals, bins=edges)
    total = max(1, len(survivals))
    return [(int(edges[i]), int(edges[i + 1]), int(counts[i]), counts[i] / total)
            for i in range(len(counts))]
