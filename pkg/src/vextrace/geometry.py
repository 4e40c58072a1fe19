"""Planar computational domains: boundary arcs, triangulation, quadrature.

Domains are bounded by a closed loop of segments and circular arcs.  Meshes
are plain P1 triangulations built from a boundary ring plus a hexagonal
interior lattice, Delaunay-connected and filtered to the polygon.  The mesh
is honestly polygonal: boundary vertices sit on the exact arcs, edges are
chords, and uniform refinement bisects edges without re-snapping so that
coarse P1 functions stay exactly representable on refined meshes.

A FermiChart at a boundary point provides the boundary-adapted coordinates
(tangential offset y, inward normal distance t) with the exact graph
function, jacobian, and signed curvature of the underlying arc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .luxemburg import WeightedSamples, fixed_order_sum

__all__ = [
    "Segment",
    "CircularArc",
    "BoundaryLoop",
    "PlanarDomain",
    "FermiChart",
    "GeometryError",
    "CornerError",
    "ChartRangeError",
    "mesh_domain",
    "measures",
    "fermi_chart",
    "pullback",
    "pullback_boundary",
    "unit_disk_loop",
    "polygon_loop",
]


class GeometryError(ValueError):
    """Invalid boundary description or failed boundary recovery."""


class CornerError(ValueError):
    """Chart requested at a junction of boundary pieces."""


class ChartRangeError(ValueError):
    """Requested scale exceeds the chart validity radius."""


# ---------------------------------------------------------------------------
# Boundary arcs


@dataclass(frozen=True)
class Segment:
    start: tuple
    end: tuple

    @property
    def length(self):
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    def point(self, s):
        """Point at arclength s from the start."""
        a = np.asarray(self.start, float)
        b = np.asarray(self.end, float)
        return a + (np.asarray(s) / self.length)[..., None] * (b - a)

    def tangent(self, s):
        a = np.asarray(self.start, float)
        b = np.asarray(self.end, float)
        t = (b - a) / self.length
        return np.broadcast_to(t, np.shape(s) + (2,)).copy() if np.ndim(s) else t

    def curvature(self):
        return 0.0

    def project(self, x):
        """(arclength, distance) of the closest point to x."""
        a = np.asarray(self.start, float)
        b = np.asarray(self.end, float)
        t = float(np.clip((np.asarray(x, float) - a) @ (b - a) / self.length**2, 0.0, 1.0))
        p = a + t * (b - a)
        return t * self.length, float(np.linalg.norm(np.asarray(x, float) - p))

    def scaled(self, c):
        return Segment(tuple(c * np.asarray(self.start)), tuple(c * np.asarray(self.end)))


@dataclass(frozen=True)
class CircularArc:
    center: tuple
    radius: float
    angle_start: float
    angle_end: float  # traversed from angle_start to angle_end (can exceed 2 pi)

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("arc radius must be positive")
        if self.angle_end == self.angle_start:
            raise GeometryError("empty arc")

    @property
    def length(self):
        return abs(self.angle_end - self.angle_start) * self.radius

    def _angle(self, s):
        sign = 1.0 if self.angle_end > self.angle_start else -1.0
        return self.angle_start + sign * np.asarray(s) / self.radius

    def point(self, s):
        a = self._angle(s)
        c = np.asarray(self.center, float)
        return c + self.radius * np.stack([np.cos(a), np.sin(a)], axis=-1)

    def tangent(self, s):
        a = self._angle(s)
        sign = 1.0 if self.angle_end > self.angle_start else -1.0
        return sign * np.stack([-np.sin(a), np.cos(a)], axis=-1)

    def curvature(self):
        # curvature magnitude; the domain-relative sign is set by the loop
        return 1.0 / self.radius

    @property
    def is_full_circle(self):
        return abs(abs(self.angle_end - self.angle_start) - 2.0 * math.pi) < 1e-12

    def project(self, x):
        """(arclength, distance) of the closest point to x."""
        c = np.asarray(self.center, float)
        v = np.asarray(x, float) - c
        theta = math.atan2(v[1], v[0])
        sign = 1.0 if self.angle_end > self.angle_start else -1.0
        span = abs(self.angle_end - self.angle_start)
        # angle offset from the start, in the traversal direction, mod 2 pi
        off = (sign * (theta - self.angle_start)) % (2.0 * math.pi)
        if off <= span:
            s = off * self.radius
        else:
            s = 0.0 if (2.0 * math.pi - off) < (off - span) else span * self.radius
        p = self.point(s)
        return float(s), float(np.linalg.norm(np.asarray(x, float) - p))

    def scaled(self, c):
        return CircularArc(tuple(c * np.asarray(self.center)), c * self.radius,
                           self.angle_start, self.angle_end)


@dataclass(frozen=True)
class BoundaryLoop:
    """Closed, counterclockwise-oriented chain of arcs."""

    arcs: tuple

    def __post_init__(self):
        arcs = tuple(self.arcs)
        if not arcs:
            raise GeometryError("empty boundary")
        for a, b in zip(arcs, arcs[1:] + arcs[:1]):
            pa = a.point(a.length)
            pb = b.point(0.0)
            if np.linalg.norm(pa - pb) > 1e-9 * max(1.0, a.length):
                raise GeometryError(f"boundary not closed between {a} and {b}")
        object.__setattr__(self, "arcs", arcs)

    def polyline(self, spacing):
        """Vertices on the exact arcs with spacing <= spacing, plus arc ids."""
        pts, arc_ids = [], []
        for idx, arc in enumerate(self.arcs):
            n = max(1, int(math.ceil(arc.length / spacing)))
            s = np.linspace(0.0, arc.length, n + 1)[:-1]
            pts.append(arc.point(s))
            arc_ids.extend([idx] * n)
        return np.concatenate(pts, axis=0), np.asarray(arc_ids)

    def signed_area(self, spacing=None):
        spacing = spacing or min(a.length for a in self.arcs) / 8.0
        ring, _ = self.polyline(spacing)
        x, y = ring[:, 0], ring[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def scaled(self, c):
        return BoundaryLoop(tuple(a.scaled(c) for a in self.arcs))


def unit_disk_loop(radius=1.0, center=(0.0, 0.0)):
    return BoundaryLoop((CircularArc(center, radius, 0.0, 2.0 * math.pi),))


def polygon_loop(vertices):
    vs = [tuple(map(float, v)) for v in vertices]
    return BoundaryLoop(tuple(Segment(a, b) for a, b in zip(vs, vs[1:] + vs[:1])))


# ---------------------------------------------------------------------------
# point-in-polygon and distances (numpy, even-odd rule)


def points_in_polygon(points, ring):
    pts = np.atleast_2d(points)
    x, y = pts[:, 0], pts[:, 1]
    x0, y0 = ring[:, 0], ring[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    inside = np.zeros(len(pts), dtype=bool)
    for a0, b0, a1, b1 in zip(x0, y0, x1, y1):
        cross = (b0 > y) != (b1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = a0 + (y - b0) * (a1 - a0) / (b1 - b0)
        hit = cross & (x < xi)
        inside ^= hit
    return inside


def distance_to_ring(points, ring):
    pts = np.atleast_2d(points)
    a = ring
    b = np.roll(ring, -1, axis=0)
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    d2 = np.full(len(pts), np.inf)
    for i in range(len(a)):
        ap = pts - a[i]
        t = np.clip(ap @ ab[i] / max(denom[i], 1e-300), 0.0, 1.0)
        proj = a[i] + t[:, None] * ab[i]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", pts - proj, pts - proj))
    return np.sqrt(d2)


# ---------------------------------------------------------------------------
# Mesh


@dataclass(frozen=True)
class PlanarDomain:
    """Conforming P1 triangulation of a loop-bounded planar region."""

    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3) int
    boundary_edges: np.ndarray  # (ne, 2) int, consecutive along the loop
    edge_arc: np.ndarray  # (ne,) arc index of each boundary edge
    gamma_edges: np.ndarray  # (ne,) bool
    loop: BoundaryLoop | None = None
    target_h: float = 0.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for name in ("vertices", "triangles", "boundary_edges", "edge_arc", "gamma_edges"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.all(self.gamma_edges) and len(self.gamma_edges):
            raise GeometryError("gamma must not be the whole boundary")

    # -- basic quantities ---------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def tri_areas(self):
        if "areas" not in self._cache:
            v = self.vertices
            t = self.triangles
            d1 = v[t[:, 1]] - v[t[:, 0]]
            d2 = v[t[:, 2]] - v[t[:, 0]]
            self._cache["areas"] = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    def edge_lengths(self):
        e = self.boundary_edges
        d = self.vertices[e[:, 1]] - self.vertices[e[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def volume(self):
        return fixed_order_sum(self.tri_areas())

    def boundary_length(self):
        return fixed_order_sum(self.edge_lengths())

    def mesh_size(self):
        v = self.vertices
        t = self.triangles
        lens = [np.linalg.norm(v[t[:, i]] - v[t[:, j]], axis=1)
                for i, j in ((0, 1), (1, 2), (2, 0))]
        return float(np.max(lens))

    def basis_gradients(self):
        """P1 basis gradients per triangle, shape (nt, 3, 2)."""
        if "bgrad" not in self._cache:
            v = self.vertices
            t = self.triangles
            a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
            det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
            g = np.empty((len(t), 3, 2))
            g[:, 0, 0] = b[:, 1] - c[:, 1]
            g[:, 0, 1] = c[:, 0] - b[:, 0]
            g[:, 1, 0] = c[:, 1] - a[:, 1]
            g[:, 1, 1] = a[:, 0] - c[:, 0]
            g[:, 2, 0] = a[:, 1] - b[:, 1]
            g[:, 2, 1] = b[:, 0] - a[:, 0]
            g /= det[:, None, None]
            self._cache["bgrad"] = g
        return self._cache["bgrad"]

    # -- quadrature -----------------------------------------------------------

    def interior_quadrature(self):
        """Midpoint rule (degree-2): points (3nt,2), weights, tri index, bary."""
        if "iq" not in self._cache:
            v = self.vertices
            t = self.triangles
            areas = self.tri_areas()
            bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
            pts = np.einsum("qb,tbx->tqx", bary, v[t])
            w = np.repeat(areas / 3.0, 3)
            tri_idx = np.repeat(np.arange(len(t)), 3)
            self._cache["iq"] = (
                pts.reshape(-1, 2),
                w,
                tri_idx,
                np.tile(bary, (len(t), 1)),
            )
        return self._cache["iq"]

    def boundary_quadrature(self):
        """2-point Gauss per boundary edge: points, weights, edge idx, params."""
        if "bq" not in self._cache:
            e = self.boundary_edges
            a = self.vertices[e[:, 0]]
            b = self.vertices[e[:, 1]]
            lens = self.edge_lengths()
            s = 0.5 / math.sqrt(3.0)
            params = np.array([0.5 - s, 0.5 + s])
            pts = a[:, None, :] + params[None, :, None] * (b - a)[:, None, :]
            w = np.repeat(lens / 2.0, 2)
            edge_idx = np.repeat(np.arange(len(e)), 2)
            self._cache["bq"] = (
                pts.reshape(-1, 2),
                w,
                edge_idx,
                np.tile(params, len(e)),
            )
        return self._cache["bq"]

    # -- topology helpers -----------------------------------------------------

    def gamma_nodes(self):
        """Vertices on gamma-marked edges (closure under shared endpoints)."""
        if not np.any(self.gamma_edges):
            return np.zeros(0, dtype=int)
        e = self.boundary_edges[self.gamma_edges]
        return np.unique(e)

    def boundary_nodes(self):
        return np.unique(self.boundary_edges)

    # -- refinement -------------------------------------------------------------

    def refine(self):
        """Uniform bisection into 4 children; nested (no boundary re-snap).

        Returns (fine domain, prolongation) where prolongation maps coarse
        nodal vectors to fine ones exactly (P1 interpolation).
        """
        v = self.vertices
        t = self.triangles
        edge_mid = {}
        new_pts = [v]
        next_id = len(v)

        def midpoint(i, j):
            nonlocal next_id
            key = (min(i, j), max(i, j))
            if key not in edge_mid:
                edge_mid[key] = next_id
                new_pts.append(0.5 * (v[key[0]] + v[key[1]])[None, :])
                next_id += 1
            return edge_mid[key]

        fine_tris = []
        for (i, j, k) in t:
            a, b, c = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            fine_tris.extend([(i, a, c), (a, j, b), (c, b, k), (a, b, c)])
        fine_v = np.concatenate(new_pts, axis=0)

        fine_edges, fine_arc, fine_gamma = [], [], []
        for idx, (i, j) in enumerate(self.boundary_edges):
            m = midpoint(i, j)
            fine_edges.extend([(i, m), (m, j)])
            fine_arc.extend([self.edge_arc[idx]] * 2)
            fine_gamma.extend([self.gamma_edges[idx]] * 2)

        rows, cols, vals = [], [], []
        for i in range(len(v)):
            rows.append(i), cols.append(i), vals.append(1.0)
        for (i, j), m in edge_mid.items():
            rows.extend([m, m])
            cols.extend([i, j])
            vals.extend([0.5, 0.5])
        from scipy.sparse import csr_matrix

        prol = csr_matrix((vals, (rows, cols)), shape=(len(fine_v), len(v)))
        dom = PlanarDomain(
            fine_v,
            np.asarray(fine_tris, dtype=int),
            np.asarray(fine_edges, dtype=int),
            np.asarray(fine_arc, dtype=int),
            np.asarray(fine_gamma, dtype=bool),
            loop=self.loop,
            target_h=self.target_h / 2.0,
        )
        return dom, prol

    # -- submesh ---------------------------------------------------------------

    def submesh(self, center, radius):
        """Restriction to triangles fully inside the ball; cut edges marked gamma.

        Returns (subdomain, node_map) with node_map[new] = old index.  The
        artificial boundary created by the cut is gamma-marked, so extending
        a subdomain function by zero is admissible on the parent mesh.
        """
        center = np.asarray(center, float)
        d = np.linalg.norm(self.vertices - center, axis=1)
        keep = np.all(d[self.triangles] <= radius, axis=1)
        if not np.any(keep):
            raise GeometryError("empty submesh")
        tris = self.triangles[keep]
        used = np.unique(tris)
        remap = -np.ones(self.n_vertices, dtype=int)
        remap[used] = np.arange(len(used))
        sub_tris = remap[tris]
        sub_v = self.vertices[used]

        # boundary of the submesh = edges with exactly one adjacent triangle
        edges = {}
        for tri in sub_tris:
            for i, j in ((0, 1), (1, 2), (2, 0)):
                key = (min(tri[i], tri[j]), max(tri[i], tri[j]))
                edges[key] = edges.get(key, 0) + 1
        sub_boundary = {k for k, cnt in edges.items() if cnt == 1}

        # keep inherited boundary edges in their global order and orientation
        # (a cap covering the whole mesh reproduces the domain bit for bit),
        # then the artificial cut edges in sorted order
        b_edges, b_arc, b_gamma = [], [], []
        inherited = set()
        for idx, (gi, gj) in enumerate(map(tuple, self.boundary_edges)):
            if remap[gi] < 0 or remap[gj] < 0:
                continue
            i, j = remap[gi], remap[gj]
            key = (min(i, j), max(i, j))
            if key in sub_boundary:
                b_edges.append((i, j))
                b_arc.append(self.edge_arc[idx])
                b_gamma.append(bool(self.gamma_edges[idx]))
                inherited.add(key)
        for (i, j) in sorted(sub_boundary - inherited):
            b_edges.append((i, j))
            b_arc.append(-1)  # artificial cut
            b_gamma.append(True)
        dom = PlanarDomain(
            sub_v,
            sub_tris,
            np.asarray(b_edges, dtype=int),
            np.asarray(b_arc, dtype=int),
            np.asarray(b_gamma, dtype=bool),
            loop=self.loop,
            target_h=self.target_h,
        )
        return dom, used

    def scaled(self, c):
        return PlanarDomain(
            c * self.vertices,
            self.triangles,
            self.boundary_edges,
            self.edge_arc,
            self.gamma_edges,
            loop=self.loop.scaled(c) if self.loop else None,
            target_h=c * self.target_h,
        )

    # -- io ----------------------------------------------------------------------

    def export_text(self, path):
        """ASCII mesh: vertex coordinates, triangle connectivity, marked edges."""
        with open(path, "w") as fh:
            fh.write(f"vertices {self.n_vertices}\n")
            for x, y in self.vertices:
                fh.write(f"{x!r} {y!r}\n")
            fh.write(f"triangles {len(self.triangles)}\n")
            for i, j, k in self.triangles:
                fh.write(f"{i} {j} {k}\n")
            fh.write(f"boundary_edges {len(self.boundary_edges)}\n")
            for idx, (i, j) in enumerate(self.boundary_edges):
                fh.write(
                    f"{i} {j} {int(self.edge_arc[idx])} {int(self.gamma_edges[idx])}\n"
                )


def measures(domain):
    """(area, boundary length) of the meshed polygon."""
    return domain.volume(), domain.boundary_length()


def mesh_domain(loop, target_h, gamma_arcs=()):
    """Triangulate the loop with max edge length <= target_h.

    gamma_arcs lists arc indices whose boundary edges are gamma-marked.
    """
    if target_h <= 0:
        raise ValueError("target_h must be positive")
    if not isinstance(loop, BoundaryLoop):
        loop = BoundaryLoop(tuple(loop))
    if loop.signed_area() < 0:
        raise GeometryError("boundary loop must be counterclockwise")
    gamma_arcs = set(int(i) for i in gamma_arcs)
    for i in gamma_arcs:
        if i < 0 or i >= len(loop.arcs):
            raise GeometryError(f"gamma arc index {i} out of range")
    if gamma_arcs == set(range(len(loop.arcs))):
        raise GeometryError("gamma must not be the whole boundary")

    spacing = 0.62 * target_h
    for _ in range(4):
        try:
            dom = _mesh_once(loop, spacing, gamma_arcs, target_h)
        except GeometryError:
            spacing *= 0.8
            continue
        if dom.mesh_size() <= target_h:
            return dom
        spacing *= 0.8
    raise GeometryError("could not reach the requested mesh size")


def _mesh_once(loop, spacing, gamma_arcs, target_h):
    ring, arc_ids = loop.polyline(spacing)
    n_ring = len(ring)
    if n_ring < 3:
        raise GeometryError("boundary too coarse")

    lo = ring.min(axis=0)
    hi = ring.max(axis=0)
    dy = spacing * math.sqrt(3.0) / 2.0
    ys = np.arange(lo[1] + 0.5 * dy, hi[1], dy)
    pts = []
    for row, y in enumerate(ys):
        off = 0.5 * spacing if row % 2 else 0.0
        xs = np.arange(lo[0] + 0.4 * spacing + off, hi[0], spacing)
        pts.append(np.stack([xs, np.full_like(xs, y)], axis=1))
    interior = np.concatenate(pts, axis=0) if pts else np.zeros((0, 2))
    if len(interior):
        inside = points_in_polygon(interior, ring)
        far = distance_to_ring(interior, ring) >= 0.55 * spacing
        interior = interior[inside & far]

    allpts = np.concatenate([ring, interior], axis=0)
    tri = Delaunay(allpts)
    cells = tri.simplices
    cent = allpts[cells].mean(axis=1)
    keep = points_in_polygon(cent, ring)
    v = allpts[cells[keep, 0]]
    a = allpts[cells[keep, 1]] - v
    b = allpts[cells[keep, 2]] - v
    area2 = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    scale = float(np.max(hi - lo))
    nondeg = np.abs(area2) > 1e-12 * scale**2
    cells = cells[keep][nondeg]
    # orient all triangles counterclockwise
    flip = area2[nondeg] < 0
    cells[flip] = cells[flip][:, ::-1]

    # boundary recovery: edges adjacent to exactly one triangle must be the
    # consecutive ring pairs
    counts = {}
    for t in cells:
        for i, j in ((0, 1), (1, 2), (2, 0)):
            key = (min(t[i], t[j]), max(t[i], t[j]))
            counts[key] = counts.get(key, 0) + 1
    mesh_boundary = {k for k, c in counts.items() if c == 1}
    expected, e_arc = [], []
    for i in range(n_ring):
        j = (i + 1) % n_ring
        expected.append((min(i, j), max(i, j)))
        e_arc.append(arc_ids[i])
    if mesh_boundary != set(expected):
        raise GeometryError("boundary recovery failed; refine or simplify the loop")

    edges = np.array([(i, (i + 1) % n_ring) for i in range(n_ring)], dtype=int)
    e_arc = np.asarray(e_arc)
    gamma = np.array([int(a_) in gamma_arcs for a_ in e_arc], dtype=bool)
    return PlanarDomain(
        allpts, cells, edges, e_arc, gamma, loop=loop, target_h=target_h
    )


# ---------------------------------------------------------------------------
# Fermi chart


@dataclass(frozen=True)
class FermiChart:
    """Boundary-adapted chart Phi(y, t) = (y, psi(y)) + t nu(y) at x0.

    Frame coordinates: y along the tangent tau, heights along the inward
    normal nu; nu(y) is the unit inward normal of the boundary graph
    n = psi(y), with psi(0) = 0, psi'(0) = 0 and psi''(0) = H (signed
    curvature, positive when the domain is convex at the base point).
    All geometric quantities are closed-form for segment and arc pieces.
    """

    x0: np.ndarray
    tau: np.ndarray
    nu: np.ndarray
    curvature: float  # H; also the mean-curvature surrogate hbar in 2-D
    center_offset: float  # signed distance to the arc center along nu (0 => line)
    validity_radius: float

    @property
    def H(self):
        return self.curvature

    @property
    def hbar(self):
        return self.curvature

    def psi(self, y):
        y = np.asarray(y, float)
        d = self.center_offset
        if d == 0.0:
            return np.zeros_like(y)
        r = abs(d)
        return d - math.copysign(1.0, d) * np.sqrt(r * r - y * y)

    def dpsi(self, y):
        y = np.asarray(y, float)
        d = self.center_offset
        if d == 0.0:
            return np.zeros_like(y)
        r = abs(d)
        return math.copysign(1.0, d) * y / np.sqrt(r * r - y * y)

    def ddpsi(self, y):
        y = np.asarray(y, float)
        d = self.center_offset
        if d == 0.0:
            return np.zeros_like(y)
        r = abs(d)
        return math.copysign(1.0, d) * r * r / np.power(r * r - y * y, 1.5)

    def normal(self, y):
        """Unit inward normal nu(y) in world coordinates."""
        dp = self.dpsi(y)
        w = np.sqrt(1.0 + dp * dp)
        fy = -dp / w
        fn = 1.0 / w
        return fy[..., None] * self.tau + fn[..., None] * self.nu

    def map(self, y, t):
        """World coordinates of Phi(y, t)."""
        y = np.asarray(y, float)
        t = np.asarray(t, float)
        base = self.x0 + y[..., None] * self.tau + self.psi(y)[..., None] * self.nu
        return base + t[..., None] * self.normal(y)

    def jacobian(self, y, t):
        """det d Phi = sqrt(1 + psi'^2) * (1 - t * kappa(y)); exact."""
        y = np.asarray(y, float)
        t = np.asarray(t, float)
        dp = self.dpsi(y)
        w2 = 1.0 + dp * dp
        w = np.sqrt(w2)
        kappa = self.ddpsi(y) / (w2 * w)
        return w * (1.0 - t * kappa)

    def dmap_frame(self, y, t):
        """Frame-coordinate differential of Phi, shape (..., 2, 2)."""
        y = np.asarray(y, float)
        t = np.asarray(t, float)
        dp = self.dpsi(y)
        w2 = 1.0 + dp * dp
        w = np.sqrt(w2)
        kappa = self.ddpsi(y) / (w2 * w)
        out = np.empty(np.broadcast(y, t).shape + (2, 2))
        out[..., 0, 0] = 1.0 - t * kappa
        out[..., 0, 1] = -dp / w
        out[..., 1, 0] = dp * (1.0 - t * kappa)
        out[..., 1, 1] = 1.0 / w
        return out

    def frame_to_world(self, vec):
        """Convert frame vectors (components along tau, nu) to world vectors."""
        return vec[..., 0:1] * self.tau + vec[..., 1:2] * self.nu

    def world_to_frame(self, vec):
        return np.stack([vec @ self.tau, vec @ self.nu], axis=-1)

    def boundary_jacobian(self, y):
        dp = self.dpsi(y)
        return np.sqrt(1.0 + dp * dp)


def fermi_chart(domain, x0, junction_tol=1e-9):
    """Chart at a boundary point x0 lying in the interior of one arc."""
    loop = domain.loop
    if loop is None:
        raise GeometryError("domain has no exact boundary description")
    x0 = np.asarray(x0, float)
    best = None
    for arc in loop.arcs:
        s, d = arc.project(x0)
        if best is None or d < best[0]:
            best = (d, arc, s)
    dist, arc, s = best
    if dist > 1e-6 * max(1.0, arc.length):
        raise GeometryError("x0 does not lie on the boundary")
    periodic = (
        len(loop.arcs) == 1
        and isinstance(arc, CircularArc)
        and arc.is_full_circle
    )
    at_junction = (
        s < junction_tol * arc.length or s > (1.0 - junction_tol) * arc.length
    )
    if at_junction and not periodic:
        raise CornerError("chart base point sits at a junction of boundary arcs")

    tau = np.asarray(arc.tangent(s), float)
    nu = np.array([-tau[1], tau[0]])  # left normal; inward for a ccw loop
    base = np.asarray(arc.point(s), float)
    if isinstance(arc, CircularArc):
        to_center = np.asarray(arc.center, float) - base
        d = float(to_center @ nu)  # signed center offset along nu
        H = 1.0 / d
        if periodic:
            half_extent = arc.length / 2.0
        else:
            half_extent = min(s, arc.length - s)
        validity = 0.45 * min(abs(d), half_extent if half_extent > 0 else abs(d))
    else:
        d = 0.0
        H = 0.0
        validity = 0.45 * min(s, arc.length - s)
    return FermiChart(
        x0=base, tau=tau, nu=nu, curvature=H, center_offset=d,
        validity_radius=validity,
    )


# ---------------------------------------------------------------------------
# Pullback to the reference half-ball


def _half_disk_reference(n_r=24, n_t=24):
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    xt, wt = np.polynomial.legendre.leggauss(n_t)
    rho = 0.5 * (xr + 1.0)
    wrho = 0.5 * wr
    theta = 0.5 * math.pi * (xt + 1.0)
    wth = 0.5 * math.pi * wt
    R, T = np.meshgrid(rho, theta, indexing="ij")
    WR, WT = np.meshgrid(wrho, wth, indexing="ij")
    y = (R * np.cos(T)).ravel()
    t = (R * np.sin(T)).ravel()
    w = (R * WR * WT).ravel()
    return y, t, w


def pullback(u, chart, eps, n_r=24, n_t=24, grad=None):
    """Samples of the rescaled pullback on the reference upper half-disk.

    u (and optionally grad) are callables on world points.  Weights carry
    the chart jacobian, so sum w |value|^p equals eps^{-N} times the
    integral of |u|^p over the chart image of the eps half-ball.
    """
    if eps > chart.validity_radius:
        raise ChartRangeError(
            f"eps = {eps} exceeds chart validity {chart.validity_radius}"
        )
    y, t, w = _half_disk_reference(n_r, n_t)
    world = chart.map(eps * y, eps * t)
    vals = np.asarray(u(world), float)
    weights = w * chart.jacobian(eps * y, eps * t)
    gv = None
    if grad is not None:
        g_world = np.asarray(grad(world), float)  # (n, 2)
        g_frame = chart.world_to_frame(g_world)
        dphi = chart.dmap_frame(eps * y, eps * t)
        gv = eps * np.einsum("nij,ni->nj", dphi, g_frame)
    pts = np.stack([y, t], axis=1)
    return WeightedSamples(pts, weights, vals, gv)


def pullback_boundary(u, chart, eps, n=64):
    """Boundary samples of the rescaled pullback on the segment [-1, 1]."""
    if eps > chart.validity_radius:
        raise ChartRangeError(
            f"eps = {eps} exceeds chart validity {chart.validity_radius}"
        )
    xg, wg = np.polynomial.legendre.leggauss(n)
    world = chart.map(eps * xg, np.zeros_like(xg))
    vals = np.asarray(u(world), float)
    weights = wg * chart.boundary_jacobian(eps * xg)
    pts = np.stack([xg, np.zeros_like(xg)], axis=1)
    return WeightedSamples(pts, weights, vals)
