"""Run artifacts: CSV emission, minimal SVG plots, and run manifests.

Numeric CSV fields carry 17 significant digits so 64-bit values round-trip
exactly; manifests record the config hash and seed that reproduce a run.
"""

from __future__ import annotations

import json
import subprocess
import time
from pathlib import Path

import numpy as np

__all__ = ["fmt17", "write_csv", "write_svg_curve", "write_manifest"]


def fmt17(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v)
            else:
                cells.append(fmt17(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_svg_curve(path, xs, ys, title: str, ref_y: float | None = None,
                    width: int = 640, height: int = 420) -> Path:
    """A single-polyline plot with axes and an optional reference level."""
    path = Path(path)
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    pad = 60
    x_lo, x_hi = min(xs), max(xs)
    y_vals = ys + ([ref_y] if ref_y is not None else [])
    y_lo, y_hi = min(y_vals), max(y_vals)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    span_y = y_hi - y_lo
    y_lo -= 0.08 * span_y
    y_hi += 0.08 * span_y

    def sx(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width // 2}" y="24" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(
            f'<text x="{sx(xv):.1f}" y="{height - pad + 18}" text-anchor="middle" '
            f'font-size="11">{xv:.4g}</text>'
        )
        parts.append(
            f'<text x="{pad - 8}" y="{sy(yv):.1f}" text-anchor="end" '
            f'font-size="11">{yv:.6g}</text>'
        )
    if ref_y is not None:
        parts.append(
            f'<line x1="{pad}" y1="{sy(ref_y):.2f}" x2="{width - pad}" '
            f'y2="{sy(ref_y):.2f}" stroke="gray" stroke-dasharray="6,4"/>'
        )
    parts.append(
        f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.6"/>'
    )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    return path


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except Exception:
        pass
    return "unknown"


def write_manifest(out_path, config_hash: str, seed: int, outputs,
                   started_at: float, command: str) -> Path:
    out_path = Path(out_path)
    manifest = {
        "command": command,
        "config_hash": config_hash,
        "seed": int(seed),
        "git_describe": _git_describe(),
        "started_at": time.strftime(
            "%Y-%m-%dT%H:%M:%SZ", time.gmtime(started_at)
        ),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": [str(p) for p in outputs],
    }
    out_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return out_path
