"""Text exporters: legacy VTK meshes, SVG zero-level contours and CSV tables.

Every writer produces byte-stable output: reals are printed with ``.17g`` and
rows follow mesh or iteration order.
"""

import csv
import re

import numpy as np

from .mesh import mesh_stats


def _g(x):
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# VTK

def write_vtk(path, mesh, phi=None):
    """Legacy ASCII unstructured grid (triangles, cell type 5) with optional point data ``phi``."""
    lines = ["# vtk DataFile Version 3.0", "segflow mesh", "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{_g(x)} {_g(y)} 0" for x, y in mesh.vertices]
    m = mesh.n_elements
    lines.append(f"CELLS {m} {4 * m}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {m}")
    lines += ["5"] * m
    if phi is not None:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (mesh.n_vertices,):
            raise ValueError("phi must hold one value per vertex")
        lines += [f"POINT_DATA {mesh.n_vertices}", "SCALARS phi double 1", "LOOKUP_TABLE default"]
        lines += [_g(v) for v in phi]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# zero level set

def zero_level_segments(mesh, phi):
    """Segments of the zero level set of a P1 field, one per crossed element.

    Returns
    -------
    points : (P, 2) array
        Crossing points; a point on an edge interpolates the endpoint values
        linearly, a vertex with ``phi == 0`` is its own point.
    segments : (S, 2) int array
        Pairs of point indices. Points shared by neighbouring elements are
        stored once.
    """
    phi = np.asarray(phi, dtype=float)
    keys = {}
    points = []

    def point(key):
        if key not in keys:
            keys[key] = len(points)
            if key[0] == "v":
                points.append(mesh.vertices[key[1]])
            else:
                a, b = key[1], key[2]
                t = phi[a] / (phi[a] - phi[b])
                points.append(mesh.vertices[a] + t * (mesh.vertices[b] - mesh.vertices[a]))
        return keys[key]

    segments = []
    for tri in mesh.triangles.tolist():
        found = []
        for v in tri:
            if phi[v] == 0.0:
                found.append(("v", v))
        for i in range(3):
            a, b = sorted((tri[i], tri[(i + 1) % 3]))
            if phi[a] * phi[b] < 0.0:
                found.append(("e", a, b))
        if len(found) == 2:
            segments.append((point(found[0]), point(found[1])))
    pts = np.array(points, dtype=float).reshape(-1, 2)
    return pts, np.array(sorted(set(segments)), dtype=np.int64).reshape(-1, 2)


def chain_segments(segments):
    """Join segments into polylines (lists of point indices); closed loops repeat their start."""
    adj = {}
    for a, b in segments.tolist():
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    for v in adj:
        adj[v].sort()
    used = set()
    lines = []

    def walk(start):
        line = [start]
        cur = start
        while True:
            nxt = None
            for u in adj[cur]:
                e = (min(cur, u), max(cur, u))
                if e not in used:
                    nxt = u
                    used.add(e)
                    break
            if nxt is None:
                return line
            line.append(nxt)
            cur = nxt
            if cur == start:
                return line

    # open chains start at odd-degree points, loops at their smallest point
    for v in sorted(adj, key=lambda v: (len(adj[v]) % 2 == 0, v)):
        while any((min(v, u), max(v, u)) not in used for u in adj[v]):
            lines.append(walk(v))
    return lines


def write_svg(path, mesh, phi, stroke_width=0.25):
    """Zero-level contour as SVG polylines in pixel coordinates (y down)."""
    pts, segs = zero_level_segments(mesh, phi)
    w, h = _g(mesh.width), _g(mesh.height)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">']
    for line in chain_segments(segs):
        coords = " ".join(f"{_g(pts[i, 0])},{_g(pts[i, 1])}" for i in line)
        out.append(f'  <polyline points="{coords}" fill="none" stroke="black" '
                   f'stroke-width="{_g(stroke_width)}"/>')
    out.append("</svg>")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def read_svg_points(path):
    """All polyline vertices of a file written by :func:`write_svg`."""
    with open(path, encoding="ascii") as fh:
        text = fh.read()
    pts = []
    for attr in re.findall(r'points="([^"]*)"', text):
        for pair in attr.split():
            x, y = pair.split(",")
            pts.append((float(x), float(y)))
    return np.array(pts, dtype=float).reshape(-1, 2)


# --------------------------------------------------------------------------
# CSV tables

LOG_COLUMNS = ("k", "residual", "energy", "n_el")
REPORT_COLUMNS = ("method", "n_opt", "n_adapt", "t_opt_mean", "t_adapt_mean",
                  "n_el", "h_min", "h_max", "s_K")


def _write_rows(path, header, rows):
    with open(path, "w", encoding="ascii", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def write_log_csv(path, history):
    """Per-iteration ``k, residual, energy, n_el`` (no timings, so reruns match byte for byte)."""
    _write_rows(path, LOG_COLUMNS,
                ([r.k, _g(r.residual), _g(r.energy), r.n_el] for r in history))


def write_pdf_csv(path, pdf_i, pdf_e):
    """Raw densities per grey level: ``kappa, p_I, p_E``."""
    _write_rows(path, ("kappa", "p_I", "p_E"),
                ([k, _g(pdf_i.density[k]), _g(pdf_e.density[k])] for k in range(len(pdf_i.density))))


def write_metric_csv(path, metric):
    """Packed per-element metric ``a, b, c`` of ``[[a, b], [b, c]]``."""
    metric = np.asarray(metric, dtype=float)
    _write_rows(path, ("element", "a", "b", "c"),
                ([i, _g(m[0]), _g(m[1]), _g(m[2])] for i, m in enumerate(metric)))


def timing_summary(state):
    """``(n_opt, n_adapt, t_opt_mean, t_adapt_mean)`` in seconds.

    Optimisation time of an iteration excludes the adaptation it triggered.
    """
    adapt = list(state.adapt_seconds)
    total = sum(r.seconds for r in state.history)
    n_opt = len(state.history)
    t_opt = (total - sum(adapt)) / n_opt if n_opt else 0.0
    t_adapt = sum(adapt) / len(adapt) if adapt else 0.0
    return n_opt, len(adapt), t_opt, t_adapt


def report_row(method, state, dice=None):
    """One row of the comparison table for a finished run."""
    n_opt, n_adapt, t_opt, t_adapt = timing_summary(state)
    st = mesh_stats(state.mesh)
    row = {"method": method, "n_opt": n_opt, "n_adapt": n_adapt, "t_opt_mean": t_opt,
           "t_adapt_mean": t_adapt, "n_el": st.n_el, "h_min": st.h_min, "h_max": st.h_max,
           "s_K": st.max_stretching}
    if dice is not None:
        row["dice"] = dice
    return row


def write_report_csv(path, rows):
    """Comparison table; a ``dice`` column is added when every row carries one."""
    header = list(REPORT_COLUMNS)
    if rows and all("dice" in r for r in rows):
        header.append("dice")

    def fmt(v):
        return _g(v) if isinstance(v, float) else v

    _write_rows(path, header, ([fmt(r[c]) for c in header] for r in rows))
