"""Metric-conforming local remeshing of a triangulated rectangle.

The target metric is a vertex field (packed ``(a, b, c)``) on a background
mesh; a mesh conforms when every edge has metric length in
``[1/sqrt(2), sqrt(2)]``. The remesher alternates edge splits, edge
collapses, edge flips and metric-weighted vertex smoothing. The domain
boundary is preserved exactly: boundary vertices only merge along their own
side and the four corners never move.
"""

from dataclasses import dataclass
import math

import numpy as np

from ..mesh import TriMesh, check_mesh, _REF_EDGES_INV
from .metric import MetricInterpolator

L_MAX = math.sqrt(2.0)
L_MIN = 1.0 / math.sqrt(2.0)
_Q_NORM = 4.0 * math.sqrt(3.0)
_I00, _I01 = _REF_EDGES_INV[0]
_I10, _I11 = _REF_EDGES_INV[1]


@dataclass(frozen=True)
class RemeshResult:
    mesh: TriMesh
    passes: int
    operations: dict
    warning: str | None = None


@dataclass(frozen=True)
class RemeshOptions:
    max_passes: int = 10
    cap: float = 1000.0
    quality_floor: float = 0.3
    flip_gain: float = 1.02
    smooth_relax: float = 0.5
    settle_fraction: float = 0.01


def _side_bits(x, y, w, h, tol):
    return ((abs(x) <= tol) * 1 | (abs(x - w) <= tol) * 2
            | (abs(y) <= tol) * 4 | (abs(y - h) <= tol) * 8)


def _corner_arrays(xy, met, tri):
    return xy[tri], met[tri]


def _batch_quality(P, Mv):
    """Vectorised :meth:`_Workspace.quality` for corner coordinates ``(K, 3, 2)`` and metrics ``(K, 3, 3)``."""
    m = Mv.mean(axis=1)
    e = np.roll(P, -1, axis=1) - P
    s = (m[:, None, 0] * e[..., 0] ** 2 + 2 * m[:, None, 1] * e[..., 0] * e[..., 1]
         + m[:, None, 2] * e[..., 1] ** 2).sum(axis=1)
    det = m[:, 0] * m[:, 2] - m[:, 1] ** 2
    ok = (s > 0) & (det > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = _Q_NORM * 0.5 * _batch_area2(P) * np.sqrt(np.maximum(det, 0.0)) / s
    return np.where(ok, q, 0.0)


def _batch_area2(P):
    e1 = P[:, 1] - P[:, 0]
    e2 = P[:, 2] - P[:, 0]
    return e1[:, 0] * e2[:, 1] - e2[:, 0] * e1[:, 1]


def _batch_valid(P, area_tol, cap):
    e1 = P[:, 1] - P[:, 0]
    e2 = P[:, 2] - P[:, 0]
    j00 = e1[:, 0] * _I00 + e2[:, 0] * _I10
    j01 = e1[:, 0] * _I01 + e2[:, 0] * _I11
    j10 = e1[:, 1] * _I00 + e2[:, 1] * _I10
    j11 = e1[:, 1] * _I01 + e2[:, 1] * _I11
    det = np.abs(j00 * j11 - j01 * j10)
    pp = j00 * j00 + j01 * j01
    r = j10 * j10 + j11 * j11
    q = j00 * j10 + j01 * j11
    mu1 = 0.5 * (pp + r) + np.hypot(0.5 * (pp - r), q)
    return (_batch_area2(P) > area_tol) & (mu1 <= cap * det)


class _Workspace:
    """Mutable triangulation with vertex-to-triangle incidence."""

    def __init__(self, mesh, metric, interp, opts):
        self.w, self.h = mesh.width, mesh.height
        self.opts = opts
        self.interp = interp
        self.X = mesh.vertices[:, 0].tolist()
        self.Y = mesh.vertices[:, 1].tolist()
        self.M = [tuple(m) for m in np.asarray(metric, dtype=float)]
        tol = 1e-12 * max(self.w, self.h)
        self.side = [_side_bits(x, y, self.w, self.h, tol) for x, y in zip(self.X, self.Y)]
        self.alive_v = [True] * len(self.X)
        self.tris = [tuple(t) for t in mesh.triangles.tolist()]
        self.vt = [set() for _ in self.X]
        for i, t in enumerate(self.tris):
            for v in t:
                self.vt[v].add(i)
        self.area_tol = 1e-13 * self.w * self.h
        # keyed by live triangles; smoothing refreshes the entries it moves
        self.qcache = {}

    # -- geometry --------------------------------------------------------

    def area2(self, a, b, c):
        X, Y = self.X, self.Y
        return (X[b] - X[a]) * (Y[c] - Y[a]) - (X[c] - X[a]) * (Y[b] - Y[a])

    def length(self, a, b):
        ex = self.X[b] - self.X[a]
        ey = self.Y[b] - self.Y[a]
        ma, mb = self.M[a], self.M[b]
        qa = ma[0] * ex * ex + 2 * ma[1] * ex * ey + ma[2] * ey * ey
        qb = mb[0] * ex * ex + 2 * mb[1] * ex * ey + mb[2] * ey * ey
        return 0.5 * (math.sqrt(max(qa, 0.0)) + math.sqrt(max(qb, 0.0)))

    def stretching(self, a, b, c):
        X, Y = self.X, self.Y
        e1x, e1y = X[b] - X[a], Y[b] - Y[a]
        e2x, e2y = X[c] - X[a], Y[c] - Y[a]
        j00 = e1x * _I00 + e2x * _I10
        j01 = e1x * _I01 + e2x * _I11
        j10 = e1y * _I00 + e2y * _I10
        j11 = e1y * _I01 + e2y * _I11
        det = abs(j00 * j11 - j01 * j10)
        if det == 0.0:
            return math.inf
        p = j00 * j00 + j01 * j01
        r = j10 * j10 + j11 * j11
        q = j00 * j10 + j01 * j11
        mu1 = 0.5 * (p + r) + math.hypot(0.5 * (p - r), q)
        return mu1 / det

    def quality(self, a, b, c):
        """Metric shape quality in ``(0, 1]``; 1 for a metric-equilateral triangle."""
        key = (a, b, c)
        q = self.qcache.get(key)
        if q is None:
            q = self.qcache[key] = self._quality(a, b, c)
        return q

    def _quality(self, a, b, c):
        ma, mb, mc = self.M[a], self.M[b], self.M[c]
        m0 = (ma[0] + mb[0] + mc[0]) / 3.0
        m1 = (ma[1] + mb[1] + mc[1]) / 3.0
        m2 = (ma[2] + mb[2] + mc[2]) / 3.0
        X, Y = self.X, self.Y
        s = 0.0
        for u, v in ((a, b), (b, c), (c, a)):
            ex, ey = X[v] - X[u], Y[v] - Y[u]
            s += m0 * ex * ex + 2 * m1 * ex * ey + m2 * ey * ey
        det = m0 * m2 - m1 * m1
        if s <= 0 or det <= 0:
            return 0.0
        return _Q_NORM * 0.5 * self.area2(a, b, c) * math.sqrt(det) / s

    def valid(self, a, b, c):
        return (self.area2(a, b, c) > self.area_tol
                and self.stretching(a, b, c) <= self.opts.cap)

    # -- topology --------------------------------------------------------

    def neighbours(self, v):
        out = set()
        for t in self.vt[v]:
            out.update(self.tris[t])
        out.discard(v)
        return out

    def add_tri(self, t):
        self.tris.append(t)
        i = len(self.tris) - 1
        for v in t:
            self.vt[v].add(i)
        return i

    def kill_tri(self, i):
        self.qcache.pop(self.tris[i], None)
        for v in self.tris[i]:
            self.vt[v].discard(i)
        self.tris[i] = None

    def add_vertex(self, x, y, m, side):
        self.X.append(x)
        self.Y.append(y)
        self.M.append(tuple(m))
        self.side.append(side)
        self.alive_v.append(True)
        self.vt.append(set())
        return len(self.X) - 1

    def edge_arrays(self):
        t = np.array([tri for tri in self.tris if tri is not None], dtype=np.int64)
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        e = np.unique(e, axis=0)
        xy = np.column_stack([self.X, self.Y])
        met = np.array(self.M)
        d = xy[e[:, 1]] - xy[e[:, 0]]

        def q(m):
            return np.sqrt(np.maximum(m[:, 0] * d[:, 0] ** 2 + 2 * m[:, 1] * d[:, 0] * d[:, 1]
                                      + m[:, 2] * d[:, 1] ** 2, 0.0))

        return e, 0.5 * (q(met[e[:, 0]]) + q(met[e[:, 1]]))

    # -- operations ------------------------------------------------------

    def split_sweep(self):
        edges, lengths = self.edge_arrays()
        cand = np.flatnonzero(lengths > L_MAX)
        if len(cand) == 0:
            return 0
        cand = cand[np.lexsort((cand, -lengths[cand]))]
        touched = set()
        chosen = []
        for i in cand:
            a, b = int(edges[i, 0]), int(edges[i, 1])
            shared = self.vt[a] & self.vt[b]
            if shared & touched:
                continue
            touched |= shared
            chosen.append((a, b, shared))
        mids = np.array([[0.5 * (self.X[a] + self.X[b]), 0.5 * (self.Y[a] + self.Y[b])]
                         for a, b, _ in chosen])
        mets = self.interp(mids)
        done = 0
        for (a, b, shared), (mx, my), m in zip(chosen, mids, mets):
            children = []
            for t in shared:
                x, y, z = self.tris[t]
                # rotate so that the split edge is (x, y)
                while {x, y} != {a, b}:
                    x, y, z = y, z, x
                children.append((t, x, y, z))
            side = self.side[a] & self.side[b]
            if len(shared) == 1 and side == 0:
                continue
            mv = self.add_vertex(float(mx), float(my), m, side)
            ok = all(self.valid(x, mv, z) and self.valid(mv, y, z) for _, x, y, z in children)
            if not ok:
                self._drop_last_vertex()
                continue
            for t, x, y, z in children:
                self.kill_tri(t)
                self.add_tri((x, mv, z))
                self.add_tri((mv, y, z))
            done += 1
        return done

    def _drop_last_vertex(self):
        for lst in (self.X, self.Y, self.M, self.side, self.alive_v, self.vt):
            lst.pop()

    def _try_collapse(self, v, w):
        """Remove vertex ``v`` by merging it into ``w``; returns success."""
        sv, sw = self.side[v], self.side[w]
        if sv:
            if sv & (sv - 1):
                return False
            if sv & sw != sv:
                return False
        shared = self.vt[v] & self.vt[w]
        if len(shared) not in (1, 2):
            return False
        if len(shared) == 1 and not sv:
            return False
        opposite = set()
        for t in shared:
            opposite.update(self.tris[t])
        opposite -= {v, w}
        if self.neighbours(v) & self.neighbours(w) != opposite:
            return False
        old_q = min(self.quality(*self.tris[t]) for t in self.vt[v])
        new = []
        for t in self.vt[v] - shared:
            tri = tuple(w if u == v else u for u in self.tris[t])
            if not self.valid(*tri):
                return False
            new.append((t, tri))
        new_q = min((self.quality(*tri) for _, tri in new), default=1.0)
        if new_q < min(old_q, self.opts.quality_floor):
            return False
        for u in self.neighbours(v) - {w}:
            if self.length(w, u) > L_MAX:
                return False
        for t in list(shared):
            self.kill_tri(t)
        for t, tri in new:
            self.kill_tri(t)
            self.tris[t] = tri
            for u in tri:
                self.vt[u].add(t)
        self.alive_v[v] = False
        return True

    def collapse_sweep(self):
        edges, lengths = self.edge_arrays()
        cand = np.flatnonzero(lengths < L_MIN)
        cand = cand[np.lexsort((cand, lengths[cand]))]
        done = 0
        for i in cand:
            a, b = int(edges[i, 0]), int(edges[i, 1])
            if not (self.alive_v[a] and self.alive_v[b]):
                continue
            if not (self.vt[a] & self.vt[b]):
                continue
            if self.length(a, b) >= L_MIN:
                continue
            if self._try_collapse(a, b) or self._try_collapse(b, a):
                done += 1
        return done

    def live(self):
        ids = np.array([i for i, t in enumerate(self.tris) if t is not None], dtype=np.int64)
        tri = np.array([self.tris[i] for i in ids], dtype=np.int64).reshape(-1, 3)
        return ids, tri, np.column_stack([self.X, self.Y]), np.array(self.M)

    def flip_sweep(self):
        """Flip interior edges whose two triangles gain quality; flips touch disjoint triangles."""
        ids, tri, xy, met = self.live()
        n = len(xy)
        src = tri.ravel()
        dst = tri[:, [1, 2, 0]].ravel()
        opp = tri[:, [2, 0, 1]].ravel()
        owner = np.repeat(np.arange(len(tri)), 3)
        key = np.minimum(src, dst) * n + np.maximum(src, dst)
        order = np.lexsort((owner, key))
        k = key[order]
        first = np.flatnonzero(k[:-1] == k[1:])
        h1, h2 = order[first], order[first + 1]
        # t1 = (p, q, c) with directed edge p -> q; d is opposite in t2
        p, q, c, d = src[h1], dst[h1], opp[h1], opp[h2]
        existing = np.unique(key)
        cd = np.minimum(c, d) * n + np.maximum(c, d)
        n1 = np.column_stack([p, d, c])
        n2 = np.column_stack([d, q, c])
        P1, M1 = _corner_arrays(xy, met, n1)
        P2, M2 = _corner_arrays(xy, met, n2)
        qt = _batch_quality(xy[tri], met[tri])
        old_q = np.minimum(qt[owner[h1]], qt[owner[h2]])
        new_q = np.minimum(_batch_quality(P1, M1), _batch_quality(P2, M2))
        ok = (~np.isin(cd, existing) & (new_q > self.opts.flip_gain * old_q)
              & _batch_valid(P1, self.area_tol, self.opts.cap)
              & _batch_valid(P2, self.area_tol, self.opts.cap))
        cand = np.flatnonzero(ok)
        with np.errstate(divide="ignore"):
            ratio = new_q[cand] / old_q[cand]
        cand = cand[np.lexsort((cand, -ratio))]
        used = set()
        done = 0
        for i in cand.tolist():
            t1, t2 = int(ids[owner[h1[i]]]), int(ids[owner[h2[i]]])
            if t1 in used or t2 in used:
                continue
            ci, di = int(c[i]), int(d[i])
            if di in self.neighbours(ci):
                continue
            used.update((t1, t2))
            self.kill_tri(t1)
            self.kill_tri(t2)
            for t, new in ((t1, tuple(n1[i].tolist())), (t2, tuple(n2[i].tolist()))):
                self.tris[t] = new
                for u in new:
                    self.vt[u].add(t)
            done += 1
        return done

    def smooth_sweep(self):
        """Move interior vertices towards the metric-weighted neighbour average.

        Proposals are evaluated together; a move is kept when its star stays
        valid without losing quality, and accepted moves form an independent
        set so that each evaluation stays exact.
        """
        ids, tri, xy, met = self.live()
        n = len(xy)
        edges, lengths = self.edge_arrays()
        a, b = edges[:, 0], edges[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            toward_b = xy[b] + (xy[a] - xy[b]) / lengths[:, None]
            toward_a = xy[a] + (xy[b] - xy[a]) / lengths[:, None]
        deg = np.bincount(edges.ravel(), minlength=n)
        acc = np.zeros((n, 2))
        for j in range(2):
            acc[:, j] = (np.bincount(a, toward_b[:, j], minlength=n)
                         + np.bincount(b, toward_a[:, j], minlength=n))
        side = np.array(self.side)
        alive = np.array(self.alive_v)
        cand = alive & (side == 0) & (deg > 0) & np.all(np.isfinite(acc), axis=1)
        verts = np.flatnonzero(cand)
        if len(verts) == 0:
            return 0
        relax = self.opts.smooth_relax
        prop = xy[verts] + relax * (acc[verts] / deg[verts, None] - xy[verts])
        # a non-convex star can push the proposal outside the domain
        prop = np.clip(prop, 0.0, [self.w, self.h])
        new_xy = xy.copy()
        new_met = met.copy()
        new_xy[verts] = prop
        new_met[verts] = self.interp(prop)
        q_old = _batch_quality(xy[tri], met[tri])
        old_min = np.full(n, np.inf)
        for j in range(3):
            np.minimum.at(old_min, tri[:, j], q_old)
        new_min = np.full(n, np.inf)
        bad = np.zeros(n, dtype=bool)
        for j in range(3):
            rows = np.flatnonzero(cand[tri[:, j]])
            v = tri[rows, j]
            P = xy[tri[rows]].copy()
            Mv = met[tri[rows]].copy()
            P[:, j] = new_xy[v]
            Mv[:, j] = new_met[v]
            np.minimum.at(new_min, v, _batch_quality(P, Mv))
            np.logical_or.at(bad, v, ~_batch_valid(P, self.area_tol, self.opts.cap))
        accept = verts[~bad[verts] & (new_min[verts] >= old_min[verts])]
        moved = np.zeros(n, dtype=bool)
        done = 0
        for v in accept.tolist():
            nb = self.neighbours(v)
            if any(moved[u] for u in nb):
                continue
            moved[v] = True
            self.X[v], self.Y[v] = float(new_xy[v, 0]), float(new_xy[v, 1])
            self.M[v] = tuple(new_met[v].tolist())
            for t in self.vt[v]:
                self.qcache.pop(self.tris[t], None)
            done += 1
        return done

    def to_mesh(self):
        alive = [t for t in self.tris if t is not None]
        t = np.array(alive, dtype=np.int64)
        used = np.unique(t)
        remap = np.full(len(self.X), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        xy = np.column_stack([self.X, self.Y])[used]
        return TriMesh(xy, remap[t], self.w, self.h), np.array(self.M)[used]


def remesh(mesh, metric, background=None, options=None):
    """Adapt ``mesh`` to a vertex metric.

    Parameters
    ----------
    mesh : TriMesh
        Starting triangulation.
    metric : (N, 3) array
        Packed SPD metric per vertex of ``background`` (default ``mesh``);
        unit metric length is the target edge length.
    background : TriMesh, optional
        Mesh on which ``metric`` is defined; new vertices interpolate it.
    options : RemeshOptions, optional

    Returns
    -------
    RemeshResult
        ``warning`` is set when a pass produced an invalid mesh and the
        last valid one was returned.
    """
    opts = options or RemeshOptions()
    background = mesh if background is None else background
    metric = np.asarray(metric, dtype=float)
    if metric.shape != (background.n_vertices, 3):
        raise ValueError("metric must hold one packed tensor per background vertex")
    det = metric[:, 0] * metric[:, 2] - metric[:, 1] ** 2
    if np.any(metric[:, 0] <= 0) or np.any(det <= 0) or not np.all(np.isfinite(metric)):
        raise ValueError("metric must be symmetric positive definite at every vertex")
    interp = MetricInterpolator(background, metric)
    start_metric = metric if background is mesh else interp(mesh.vertices)
    ws = _Workspace(mesh, start_metric, interp, opts)
    last_valid = mesh
    ops = {"split": 0, "collapse": 0, "flip": 0, "smooth": 0}
    warning = None
    passes = 0
    for passes in range(1, opts.max_passes + 1):
        n_split = ws.split_sweep()
        n_coll = ws.collapse_sweep()
        n_flip = ws.flip_sweep()
        n_smooth = ws.smooth_sweep()
        ops["split"] += n_split
        ops["collapse"] += n_coll
        ops["flip"] += n_flip
        ops["smooth"] += n_smooth
        try:
            candidate, _ = ws.to_mesh()
            problems = check_mesh(candidate)
        except ValueError as exc:
            problems = [str(exc)]
        if problems:
            warning = f"pass {passes} produced an invalid mesh ({problems[0]}); kept the last valid mesh"
            break
        last_valid = candidate
        _, lengths = ws.edge_arrays()
        in_band = np.all((lengths >= L_MIN) & (lengths <= L_MAX))
        # splits and collapses trade a few edges back and forth near the band
        # limits; stop once they touch only a small fraction of the mesh
        if in_band or n_split + n_coll <= opts.settle_fraction * candidate.n_elements:
            break
    return RemeshResult(last_valid, passes, ops, warning)
