"""Triangulated planar domains with a conformal metric factor.

A `Surface` is a conforming triangulation of one of three template domains
(rectangle, right half-disk, disk sector) together with a nodal conformal
factor f, representing the metric e^{2f}(dx₁² + dx₂²).  The module builds
template meshes at a requested resolution, refines them uniformly or locally
(longest-edge bisection with conformity closure), validates mesh invariants,
and (de)serializes meshes to a canonical dictionary form.

Conventions
-----------
* Triangles are counter-clockwise; boundary edges are oriented so the
  domain lies on their left (CCW traversal of the boundary).
* ``rectangle(a, b)`` is [0, a] × [0, b].
* ``half_disk(R)`` is the *right* half-disk {x₁ ≥ 0, |x| ≤ R}; its straight
  side lies on the x₂-axis, so (R, 0) is a smooth boundary point.
* ``disk_sector(R, angle)`` spans polar angles [0, angle], angle ∈ (0, 2π).
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import PreconditionError, UsageError

_SNAP = 1e-14  # coordinates smaller than this in magnitude are snapped to 0


# ---------------------------------------------------------------------------
# Domain specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSpec:
    """Template domain identity plus conformal-factor expression.

    Parameters
    ----------
    kind : str
        One of ``"rectangle"``, ``"half_disk"``, ``"disk_sector"``.
    params : tuple of float
        ``rectangle``: (a, b) side lengths; ``half_disk``: (R,);
        ``disk_sector``: (R, angle).
    f_expr : str or None
        Expression for the conformal factor f(x1, x2) in the variables
        ``x1``, ``x2``; ``None`` means f ≡ 0 (flat metric).
    """

    kind: str
    params: tuple
    f_expr: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.kind == "rectangle":
            if len(self.params) != 2 or min(self.params) <= 0:
                raise UsageError("rectangle requires two positive side lengths")
        elif self.kind == "half_disk":
            if len(self.params) != 1 or self.params[0] <= 0:
                raise UsageError("half_disk requires one positive radius")
        elif self.kind == "disk_sector":
            if (
                len(self.params) != 2
                or self.params[0] <= 0
                or not (0 < self.params[1] < 2 * math.pi)
            ):
                raise UsageError(
                    "disk_sector requires a positive radius and an angle in (0, 2*pi)"
                )
        else:
            raise UsageError(f"unknown domain kind: {self.kind!r}")

    # -- conformal factor ---------------------------------------------------

    def f_callable(self) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        """Return a vectorized callable for f(x1, x2)."""
        if self.f_expr is None:
            return lambda x1, x2: np.zeros_like(np.asarray(x1, dtype=float))
        return _parse_f_expr(self.f_expr)

    def corners(self) -> np.ndarray:
        """Exact coordinates of the domain's boundary corners."""
        if self.kind == "rectangle":
            a, b = self.params
            return np.array([[0.0, 0.0], [a, 0.0], [a, b], [0.0, b]])
        if self.kind == "half_disk":
            (r,) = self.params
            return np.array([[0.0, r], [0.0, -r]])
        r, ang = self.params
        return np.array(
            [[0.0, 0.0], [r, 0.0], [r * math.cos(ang), r * math.sin(ang)]]
        )

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "f_expr": self.f_expr}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        try:
            return cls(d["kind"], tuple(d["params"]), d.get("f_expr"))
        except (KeyError, TypeError) as exc:
            raise UsageError(f"malformed domain spec: {exc}") from exc


def _parse_f_expr(expr: str) -> Callable:
    """Parse a conformal-factor expression in x1, x2 into a numpy callable."""
    import sympy

    x1, x2 = sympy.symbols("x1 x2")
    try:
        tree = sympy.sympify(expr, locals={"x1": x1, "x2": x2})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise UsageError(f"cannot parse conformal factor {expr!r}: {exc}") from exc
    extra = tree.free_symbols - {x1, x2}
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise UsageError(f"conformal factor uses unknown symbols: {names}")
    fn = sympy.lambdify((x1, x2), tree, modules="numpy")

    def call(a, b):
        out = fn(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(a)).copy()

    return call


# ---------------------------------------------------------------------------
# Surface
# ---------------------------------------------------------------------------


@dataclass
class Surface:
    """A conforming triangulation carrying a nodal conformal factor.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counter-clockwise
    boundary_edges : (ne, 2) int array, domain on the left
    f_nodal : (nv,) float array, conformal factor at vertices
    spec : DomainSpec
    cache : dict
        Scratch space for assembled operators; dropped on serialization.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    f_nodal: np.ndarray
    spec: DomainSpec
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64)
        self.f_nodal = np.ascontiguousarray(self.f_nodal, dtype=float)

    # -- basic quantities ---------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def tri_coords(self) -> np.ndarray:
        """(nt, 3, 2) vertex coordinates of each triangle."""
        return self.vertices[self.triangles]

    def euclidean_tri_areas(self) -> np.ndarray:
        """Flat (metric-free) triangle areas, all positive for a valid mesh."""
        c = self.tri_coords()
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        """(nt, 3) lengths of edges opposite each local vertex."""
        c = self.tri_coords()
        out = np.empty((self.num_triangles, 3))
        for k in range(3):
            d = c[:, (k + 1) % 3] - c[:, (k + 2) % 3]
            out[:, k] = np.hypot(d[:, 0], d[:, 1])
        return out

    def mesh_size(self) -> float:
        """Longest edge in the mesh (flat metric)."""
        return float(self.edge_lengths().max())

    def boundary_vertex_indices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def is_boundary_vertex(self) -> np.ndarray:
        mask = np.zeros(self.num_vertices, dtype=bool)
        mask[self.boundary_vertex_indices()] = True
        return mask

    def corner_vertex_indices(self) -> np.ndarray:
        """Indices of mesh vertices sitting at the domain's corners."""
        corners = self.spec.corners()
        idx = []
        for c in corners:
            d = np.hypot(self.vertices[:, 0] - c[0], self.vertices[:, 1] - c[1])
            j = int(np.argmin(d))
            if d[j] < 1e-9 * (1.0 + np.abs(c).max()):
                idx.append(j)
        return np.array(sorted(set(idx)), dtype=np.int64)

    # -- validation ----------------------------------------------------------

    def validate(self) -> None:
        """Raise PreconditionError if any mesh invariant fails."""
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise PreconditionError("vertices must be an (nv, 2) array")
        if not np.all(np.isfinite(self.vertices)):
            raise PreconditionError("non-finite vertex coordinates")
        if not np.all(np.isfinite(self.f_nodal)) or self.f_nodal.shape != (
            self.num_vertices,
        ):
            raise PreconditionError("conformal factor must be finite, one per vertex")
        if self.triangles.min(initial=0) < 0 or self.triangles.max(
            initial=-1
        ) >= self.num_vertices:
            raise PreconditionError("triangle indices out of range")
        areas = self.euclidean_tri_areas()
        if np.any(areas <= 0):
            raise PreconditionError("degenerate or mis-oriented triangle present")

        # Edge incidence: interior edges in exactly 2 triangles, boundary in 1.
        edges = {}
        for tri in self.triangles:
            for k in range(3):
                u, v = int(tri[k]), int(tri[(k + 1) % 3])
                key = (min(u, v), max(u, v))
                edges[key] = edges.get(key, 0) + 1
        if any(c > 2 for c in edges.values()):
            raise PreconditionError("non-manifold edge (shared by >2 triangles)")
        topo_boundary = {k for k, c in edges.items() if c == 1}
        declared = {
            (min(int(u), int(v)), max(int(u), int(v)))
            for u, v in self.boundary_edges
        }
        if topo_boundary != declared:
            raise PreconditionError("boundary_edges do not match topological boundary")

        # Disk topology: V - E + F = 1.
        euler = self.num_vertices - len(edges) + self.num_triangles
        if euler != 1:
            raise PreconditionError(f"unexpected Euler characteristic {euler}")

        # Referenced vertices only.
        used = np.zeros(self.num_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise PreconditionError("unreferenced vertices present")

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "domain": self.spec.to_dict(),
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "triangles": [[int(a), int(b), int(c)] for a, b, c in self.triangles],
            "boundary_edges": [[int(u), int(v)] for u, v in self.boundary_edges],
            "f_nodal": [float(v) for v in self.f_nodal],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Surface":
        try:
            if int(d.get("format_version", 0)) != 1:
                raise UsageError("unsupported mesh format_version")
            surf = cls(
                vertices=np.asarray(d["vertices"], dtype=float),
                triangles=np.asarray(d["triangles"], dtype=np.int64),
                boundary_edges=np.asarray(d["boundary_edges"], dtype=np.int64),
                f_nodal=np.asarray(d["f_nodal"], dtype=float),
                spec=DomainSpec.from_dict(d["domain"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise UsageError(f"malformed mesh dictionary: {exc}") from exc
        return surf

    def content_hash(self) -> str:
        """Stable sha256 over the canonical serialized form."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Template meshes
# ---------------------------------------------------------------------------


def build_domain(spec: DomainSpec, h: float) -> Surface:
    """Triangulate a template domain at target edge length ``h``.

    The returned mesh has edges no longer than roughly ``h`` (structured
    grid for rectangles; ring template for circular pieces).
    """
    if not (h > 0) or not math.isfinite(h):
        raise UsageError("mesh size h must be positive and finite")
    if spec.kind == "rectangle":
        verts, tris = _mesh_rectangle(spec.params[0], spec.params[1], h)
    elif spec.kind == "half_disk":
        verts, tris = _mesh_sector(spec.params[0], -math.pi / 2, math.pi / 2, h)
    else:
        verts, tris = _mesh_sector(spec.params[0], 0.0, spec.params[1], h)
    verts[np.abs(verts) < _SNAP] = 0.0
    bedges = _extract_boundary(tris)
    f = spec.f_callable()(verts[:, 0], verts[:, 1])
    surf = Surface(verts, tris, bedges, f, spec)
    return surf


def _mesh_rectangle(a: float, b: float, h: float):
    nx = max(1, int(math.ceil(a / h - 1e-9)))
    ny = max(1, int(math.ceil(b / h - 1e-9)))
    xs = np.linspace(0.0, a, nx + 1)
    ys = np.linspace(0.0, b, ny + 1)
    xv, yv = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return verts, np.asarray(tris, dtype=np.int64)


def _mesh_sector(radius: float, t0: float, t1: float, h: float):
    """Ring-template mesh of the sector t0 ≤ θ ≤ t1, 0 ≤ r ≤ radius."""
    span = t1 - t0
    n = max(2, int(math.ceil(radius / h - 1e-9)))
    # Points per ring grow linearly: ring i has k*i + 1 points, so the
    # outermost arc spacing span*radius/(k*n) is at most ~h.
    k = max(2, int(math.ceil(span * radius / (n * h) - 1e-9)))

    verts = [(0.0, 0.0)]
    ring_idx: list[np.ndarray] = [np.array([0])]
    ring_ang: list[np.ndarray] = [np.array([0.5 * (t0 + t1)])]
    for i in range(1, n + 1):
        m = k * i + 1
        ang = t0 + span * np.arange(m) / (m - 1)
        r = radius * i / n
        start = len(verts)
        verts.extend(zip(r * np.cos(ang), r * np.sin(ang)))
        ring_idx.append(np.arange(start, start + m))
        ring_ang.append(ang)

    tris: list[tuple] = []
    for i in range(1, n + 1):
        tris.extend(
            _triangulate_band(
                ring_idx[i - 1], ring_ang[i - 1], ring_idx[i], ring_ang[i]
            )
        )
    verts = np.asarray(verts, dtype=float)
    # Outer-ring vertices sit exactly on the arc up to roundoff; normalize.
    outer = ring_idx[-1]
    rr = np.hypot(verts[outer, 0], verts[outer, 1])
    verts[outer] *= (radius / rr)[:, None]
    return verts, np.asarray(tris, dtype=np.int64)


def _triangulate_band(inner_idx, inner_ang, outer_idx, outer_ang):
    """CCW triangles between two concentric vertex rings, merged by angle."""
    tris = []
    ii = oo = 0
    ni, no = len(inner_idx), len(outer_idx)
    while ii < ni - 1 or oo < no - 1:
        if ii == ni - 1:
            advance_outer = True
        elif oo == no - 1:
            advance_outer = False
        else:
            advance_outer = outer_ang[oo + 1] <= inner_ang[ii + 1] + 1e-12
        if advance_outer:
            tris.append((inner_idx[ii], outer_idx[oo], outer_idx[oo + 1]))
            oo += 1
        else:
            tris.append((inner_idx[ii], outer_idx[oo], inner_idx[ii + 1]))
            ii += 1
    return tris


def _extract_boundary(tris: np.ndarray) -> np.ndarray:
    """Oriented boundary edges: those appearing in exactly one triangle."""
    count: dict[tuple, int] = {}
    oriented: dict[tuple, tuple] = {}
    for tri in tris:
        for kk in range(3):
            u, v = int(tri[kk]), int(tri[(kk + 1) % 3])
            key = (min(u, v), max(u, v))
            count[key] = count.get(key, 0) + 1
            oriented[key] = (u, v)
    out = [oriented[key] for key, c in count.items() if c == 1]
    return np.asarray(sorted(out), dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------


def _arc_radius(spec: DomainSpec) -> float | None:
    if spec.kind in ("half_disk", "disk_sector"):
        return spec.params[0]
    return None


def _is_arc_vertex(verts: np.ndarray, idx, radius: float) -> np.ndarray:
    r = np.hypot(verts[idx, 0], verts[idx, 1])
    return np.abs(r - radius) <= 1e-9 * radius


def _new_f(spec: DomainSpec, old_f, verts, new_slice, parents):
    """Conformal factor at newly created vertices.

    Evaluated exactly when an expression is available, otherwise linearly
    interpolated from the two parent vertices of each midpoint.
    """
    if spec.f_expr is not None:
        fn = spec.f_callable()
        return fn(verts[new_slice, 0], verts[new_slice, 1])
    pa, pb = parents[:, 0], parents[:, 1]
    return 0.5 * (old_f[pa] + old_f[pb])


def refine(surface: Surface) -> Surface:
    """Uniform 4-way refinement; midpoints of arc edges are reprojected."""
    verts = surface.vertices
    tris = surface.triangles
    nv = surface.num_vertices

    # Global edge list and midpoint index per edge.
    e = np.concatenate(
        [tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=0
    )
    e = np.sort(e, axis=1)
    uniq, inverse = np.unique(e, axis=0, return_inverse=True)
    mids = 0.5 * (verts[uniq[:, 0]] + verts[uniq[:, 1]])

    radius = _arc_radius(surface.spec)
    if radius is not None:
        on_arc = _is_arc_vertex(verts, uniq[:, 0], radius) & _is_arc_vertex(
            verts, uniq[:, 1], radius
        )
        if on_arc.any():
            r = np.hypot(mids[on_arc, 0], mids[on_arc, 1])
            mids[on_arc] *= (radius / r)[:, None]
    mids[np.abs(mids) < _SNAP] = 0.0

    new_verts = np.vstack([verts, mids])
    mid_id = nv + inverse.reshape(3, -1)  # rows: m01, m12, m20 per triangle
    m01, m12, m20 = mid_id[0], mid_id[1], mid_id[2]
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    new_tris = np.concatenate(
        [
            np.column_stack([a, m01, m20]),
            np.column_stack([m01, b, m12]),
            np.column_stack([m20, m12, c]),
            np.column_stack([m01, m12, m20]),
        ],
        axis=0,
    )
    f_new = _new_f(surface.spec, surface.f_nodal, new_verts, slice(nv, None), uniq)
    return Surface(
        new_verts,
        new_tris,
        _extract_boundary(new_tris),
        np.concatenate([surface.f_nodal, f_new]),
        surface.spec,
    )


def refine_local(surface: Surface, marked) -> Surface:
    """Bisect the marked triangles across their longest edges.

    Conformity is restored by the longest-edge propagation rule: an edge is
    split only when it is the longest edge of every triangle containing it
    (or lies on the boundary), otherwise the blocking neighbor is bisected
    first.  Termination follows from edge lengths increasing strictly along
    each propagation chain.
    """
    marked = np.asarray(marked)
    if marked.dtype == bool:
        marked_ids = np.flatnonzero(marked)
    else:
        marked_ids = marked.astype(np.int64)
    if marked_ids.size == 0:
        return surface

    verts: list = [tuple(p) for p in surface.vertices]
    f_vals: list = list(surface.f_nodal)
    tris: dict[int, tuple] = {i: tuple(map(int, t)) for i, t in enumerate(surface.triangles)}
    next_tid = len(tris)
    radius = _arc_radius(surface.spec)
    f_fn = surface.spec.f_callable() if surface.spec.f_expr is not None else None

    edge_map: dict[tuple, set] = {}

    def ekey(u, v):
        return (u, v) if u < v else (v, u)

    for tid, t in tris.items():
        for kk in range(3):
            edge_map.setdefault(ekey(t[kk], t[(kk + 1) % 3]), set()).add(tid)

    def longest_edge(t: tuple) -> tuple:
        best, best_l = None, -1.0
        for kk in range(3):
            u, v = t[kk], t[(kk + 1) % 3]
            dx = verts[u][0] - verts[v][0]
            dy = verts[u][1] - verts[v][1]
            ll = dx * dx + dy * dy
            # Deterministic tie-break on the sorted vertex pair.
            cand = (ll, ekey(u, v))
            if best is None or cand > (best_l, best):
                best_l, best = ll, ekey(u, v)
        return best

    def on_arc(u) -> bool:
        x, y = verts[u]
        return abs(math.hypot(x, y) - radius) <= 1e-9 * radius

    def make_midpoint(u, v) -> int:
        nonlocal verts, f_vals
        x = 0.5 * (verts[u][0] + verts[v][0])
        y = 0.5 * (verts[u][1] + verts[v][1])
        boundary = len(edge_map[ekey(u, v)]) == 1
        if boundary and radius is not None and on_arc(u) and on_arc(v):
            r = math.hypot(x, y)
            x, y = x * radius / r, y * radius / r
        if abs(x) < _SNAP:
            x = 0.0
        if abs(y) < _SNAP:
            y = 0.0
        verts.append((x, y))
        if f_fn is not None:
            f_vals.append(float(f_fn(np.array([x]), np.array([y]))[0]))
        else:
            f_vals.append(0.5 * (f_vals[u] + f_vals[v]))
        return len(verts) - 1

    def replace(tid: int, children: list) -> list:
        nonlocal next_tid
        t = tris.pop(tid)
        for kk in range(3):
            edge_map[ekey(t[kk], t[(kk + 1) % 3])].discard(tid)
        out = []
        for child in children:
            cid = next_tid
            next_tid += 1
            tris[cid] = child
            for kk in range(3):
                edge_map.setdefault(ekey(child[kk], child[(kk + 1) % 3]), set()).add(cid)
            out.append(cid)
        return out

    def split_pair(tid: int, edge: tuple):
        """Split ``tid`` (and its neighbor across ``edge``, if any) at the
        edge midpoint.  Caller guarantees the edge is longest in both."""
        owners = list(edge_map[ekey(*edge)])
        m = make_midpoint(*edge)
        for oid in owners:
            t = tris[oid]
            u, v = edge
            # Local orientation of the shared edge within this triangle.
            for kk in range(3):
                a, b = t[kk], t[(kk + 1) % 3]
                if ekey(a, b) == ekey(u, v):
                    w = t[(kk + 2) % 3]
                    replace(oid, [(a, m, w), (m, b, w)])
                    break

    queue = deque(int(i) for i in marked_ids)
    while queue:
        tid = queue.popleft()
        if tid not in tris:
            continue  # consumed by a conformity split
        chain = [tid]
        guard = 0
        while chain:
            guard += 1
            if guard > 10_000_000:
                raise PreconditionError("bisection propagation did not terminate")
            cur = chain[-1]
            if cur not in tris:
                chain.pop()
                continue
            edge = longest_edge(tris[cur])
            owners = edge_map[ekey(*edge)]
            blocker = None
            for oid in owners:
                if oid != cur and longest_edge(tris[oid]) != edge:
                    blocker = oid
                    break
            if blocker is None:
                split_pair(cur, edge)
                chain.pop()
            else:
                chain.append(blocker)

    order = sorted(tris)
    new_tris = np.asarray([tris[i] for i in order], dtype=np.int64)
    new_verts = np.asarray(verts, dtype=float)
    return Surface(
        new_verts,
        new_tris,
        _extract_boundary(new_tris),
        np.asarray(f_vals, dtype=float),
        surface.spec,
    )


def adapt_for_point(
    surface: Surface,
    center,
    inner_scale: float,
    outer_radius: float,
    ratio: float = 8.0,
    max_rounds: int = 400,
) -> Surface:
    """Grade the mesh toward ``center``.

    After adaptation every triangle whose centroid lies within
    ``outer_radius`` of ``center`` has longest edge at most
    ``max(inner_scale, min(d, outer_radius)) / ratio`` where d is the
    centroid distance — i.e. resolution ~ d/ratio, saturating at
    ``inner_scale/ratio`` near the center.
    """
    if inner_scale <= 0 or outer_radius <= 0:
        raise UsageError("adaptation scales must be positive")
    cx, cy = float(center[0]), float(center[1])
    surf = surface
    for _ in range(max_rounds):
        cc = surf.tri_coords().mean(axis=1)
        d = np.hypot(cc[:, 0] - cx, cc[:, 1] - cy)
        target = np.maximum(inner_scale, np.minimum(d, outer_radius)) / ratio
        longest = surf.edge_lengths().max(axis=1)
        marks = (longest > target) & (d <= outer_radius + longest)
        if not marks.any():
            return surf
        surf = refine_local(surf, marks)
    raise PreconditionError("adaptation did not settle within the round limit")
