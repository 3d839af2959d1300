"""CSV, JSON and SVG output with fixed number formatting."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .orbifold_core import Atlas, fixed_subspace


def fmt(value) -> str:
    """17 significant digits for floats; everything else via str."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence], comments: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (comments or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path: Path, header, rows, comments: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows, comments))
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json_text(obj))
    return path


def trace_rows(geo, atlas: Atlas):
    d = atlas.dim
    header = (["t", "chart_id"] + [f"x_{i + 1}" for i in range(d)] + [f"v_{i + 1}" for i in range(d)]
              + [f"canonical_x_{i + 1}" for i in range(d)] + ["transition_flag"])
    rows = [[t, cid, *x, *v, *c, flag] for t, cid, x, v, c, flag in geo.rows(atlas)]
    return header, rows


def trace_svg(geo, atlas: Atlas, size: int = 480) -> str:
    """Quotient arc (canonical points) per chart, with fixed lines of the chart groups."""
    if atlas.dim != 2:
        raise ValueError("SVG output is available for d = 2 only")
    lo = np.min([atlas.chart(c).domain.bounding_box()[0] for c in atlas.chart_ids], axis=0)
    hi = np.max([atlas.chart(c).domain.bounding_box()[1] for c in atlas.chart_ids], axis=0)
    span = float(np.max(hi - lo))

    def px(p):
        q = (np.asarray(p) - lo) / span * (size - 20) + 10
        return q[0], size - q[1]

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">', '<rect width="100%" height="100%" fill="white"/>']
    for cid in atlas.chart_ids:
        ch = atlas.chart(cid)
        c = px(ch.domain.center)
        if ch.domain.kind == "ball":
            r = ch.domain.radius / span * (size - 20)
            parts.append(f'<circle cx="{c[0]:.3f}" cy="{c[1]:.3f}" r="{r:.3f}" fill="none" stroke="#bbb"/>')
        for g in list(ch.group)[1:]:
            basis = fixed_subspace([g])
            if basis.shape[1] == 1:
                a = ch.domain.center - ch.domain.scale * basis[:, 0]
                b = ch.domain.center + ch.domain.scale * basis[:, 0]
                pa, pb = px(a), px(b)
                parts.append(f'<line x1="{pa[0]:.3f}" y1="{pa[1]:.3f}" x2="{pb[0]:.3f}" y2="{pb[1]:.3f}" '
                             'stroke="#d33" stroke-dasharray="4 3"/>')
            elif basis.shape[1] == 0:
                parts.append(f'<circle cx="{c[0]:.3f}" cy="{c[1]:.3f}" r="3" fill="#d33"/>')
    for seg in geo.segments:
        can = atlas.chart(seg.chart).canonical(seg.x)
        pts = " ".join(f"{p[0]:.3f},{p[1]:.3f}" for p in map(px, can))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#236" stroke-width="1.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def field_rows(sigma, n: int, regions: dict | None = None):
    """Grid samples of every chart lift (on ``regions[cid]`` when given): chart, x..., value..."""
    d = sigma.atlas.dim
    header = ["chart_id"] + [f"x_{i + 1}" for i in range(d)] + [f"f_{i + 1}" for i in range(d)]
    rows = []
    for cid in sigma.atlas.chart_ids:
        region = regions[cid] if regions else sigma.atlas.chart(cid).domain
        pts = region.grid(n)
        vals = sigma[cid](pts)
        rows.extend([cid, *p, *v] for p, v in zip(pts, vals))
    return header, rows
