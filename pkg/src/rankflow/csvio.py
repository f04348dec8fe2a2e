"""CSV and manifest emission.

Floats are written with 17 significant digits so every double round-trips
exactly; reruns with the same config and seed produce byte-identical
files.
"""

from __future__ import annotations

import json
from pathlib import Path

__all__ = ["format_value", "write_csv", "write_manifest", "write_path_csv", "write_cdf_csv"]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, (int,)):
        return str(v)
    try:
        import numpy as np

        if isinstance(v, np.floating):
            return f"{float(v):.17g}"
        if isinstance(v, np.integer):
            return str(int(v))
    except ImportError:  # pragma: no cover
        pass
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_path_csv(path, brownian_path):
    return write_csv(path, ("t", "w"), zip(brownian_path.t_grid, brownian_path.values))


def write_cdf_csv(path, xs, fs):
    return write_csv(path, ("x", "F"), zip(xs, fs))


def write_manifest(path, *, command: str, config_sha256: str, seed: int,
                   threads: int, outputs: list, extra: dict | None = None):
    payload = {
        "command": command,
        "config_sha256": config_sha256,
        "seed": seed,
        "threads": threads,
        "outputs": sorted(str(o) for o in outputs),
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
