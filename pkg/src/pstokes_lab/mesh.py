"""Triangular meshes: structured squares, extruded glacier sections, ASCII files."""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshParseError(ValueError):
    """Raised for malformed mesh or profile files; carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BoundaryTag(enum.IntEnum):
    DIRICHLET_ALL = 0
    SURFACE = 1
    BED = 2
    LAKE = 3


_TAG_NAMES = {
    "dirichlet": BoundaryTag.DIRICHLET_ALL,
    "dirichletall": BoundaryTag.DIRICHLET_ALL,
    "surface": BoundaryTag.SURFACE,
    "bed": BoundaryTag.BED,
    "lake": BoundaryTag.LAKE,
}


def parse_tag(token: str) -> BoundaryTag:
    """Accept either the integer value or a case-insensitive tag name."""
    tok = token.strip()
    if tok.lstrip("-").isdigit():
        return BoundaryTag(int(tok))
    return _TAG_NAMES[tok.lower().replace("_", "")]


def signed_areas(vertices: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (vertices[cells[:, k]] for k in range(3))
    e1 = p1 - p0
    e2 = p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _boundary_edges(cells: np.ndarray) -> np.ndarray:
    """Edges (sorted vertex pairs) that belong to exactly one cell."""
    edges = np.concatenate([cells[:, [1, 2]], cells[:, [2, 0]], cells[:, [0, 1]]])
    edges = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return uniq[counts == 1]


@dataclass(frozen=True)
class Mesh:
    """Immutable 2D triangulation with tagged boundary facets.

    ``vertices`` is (N, 2), ``cells`` is (M, 3) counter-clockwise, ``facets`` is
    (K, 2) boundary edges and ``facet_tags`` (K,) their :class:`BoundaryTag`.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=float)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        facets = np.ascontiguousarray(self.facets, dtype=np.int64).reshape(-1, 2)
        tags = np.ascontiguousarray(self.facet_tags, dtype=np.int64).reshape(-1)
        for arr in (verts, cells, facets, tags):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "facets", facets)
        object.__setattr__(self, "facet_tags", tags)
        if self.validate:
            self.check()

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    def cell_areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.cells)

    def check(self) -> None:
        """Raise ``ValueError`` if any type invariant is violated."""
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (N, 2)")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise ValueError("cells must have shape (M, 3)")
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= self.num_vertices):
            raise ValueError("cell references a vertex out of range")
        if self.facets.size and (self.facets.min() < 0 or self.facets.max() >= self.num_vertices):
            raise ValueError("facet references a vertex out of range")
        if len(self.facet_tags) != len(self.facets):
            raise ValueError("one tag per facet required")
        areas = self.cell_areas()
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise ValueError(f"cell {bad} has non-positive signed area {areas[bad]:.3e}")
        boundary = {tuple(e) for e in _boundary_edges(self.cells)}
        tagged = [tuple(sorted(f)) for f in self.facets]
        if len(set(tagged)) != len(tagged):
            raise ValueError("boundary facet tagged more than once")
        if set(tagged) != boundary:
            raise ValueError("tagged facets do not coincide with the mesh boundary")

    def facet_owner(self) -> tuple[np.ndarray, np.ndarray]:
        """Owning cell and the cell's vertex opposite to each boundary facet."""
        lookup = {}
        for c, tri in enumerate(self.cells):
            for k in range(3):
                a, b = tri[(k + 1) % 3], tri[(k + 2) % 3]
                lookup[(min(a, b), max(a, b))] = (c, tri[k])
        owner = np.empty(len(self.facets), dtype=np.int64)
        opposite = np.empty(len(self.facets), dtype=np.int64)
        for i, (a, b) in enumerate(self.facets):
            owner[i], opposite[i] = lookup[(min(a, b), max(a, b))]
        return owner, opposite

    def facet_normals(self) -> np.ndarray:
        """Outward unit normals of the boundary facets, shape (K, 2)."""
        _, opposite = self.facet_owner()
        a = self.vertices[self.facets[:, 0]]
        b = self.vertices[self.facets[:, 1]]
        t = b - a
        n = np.column_stack([t[:, 1], -t[:, 0]])
        n /= np.linalg.norm(n, axis=1)[:, None]
        inward = self.vertices[opposite] - 0.5 * (a + b)
        flip = np.einsum("ij,ij->i", n, inward) > 0
        n[flip] *= -1.0
        return n

    def tags_present(self) -> set[BoundaryTag]:
        return {BoundaryTag(int(t)) for t in np.unique(self.facet_tags)}


@dataclass(frozen=True)
class GlacierProfile:
    """Bed and surface elevation sampled along the flow line (metres)."""

    arc: np.ndarray
    bed: np.ndarray
    surface: np.ndarray

    def __post_init__(self):
        arc = np.asarray(self.arc, dtype=float)
        bed = np.asarray(self.bed, dtype=float)
        surface = np.asarray(self.surface, dtype=float)
        if not (arc.ndim == bed.ndim == surface.ndim == 1):
            raise ValueError("profile arrays must be one-dimensional")
        if not (len(arc) == len(bed) == len(surface)) or len(arc) < 2:
            raise ValueError("profile arrays need equal lengths >= 2")
        if np.any(np.diff(arc) <= 0):
            raise ValueError("arc positions must be strictly increasing")
        if np.any(surface < bed):
            raise ValueError("surface lies below the bed")
        object.__setattr__(self, "arc", arc)
        object.__setattr__(self, "bed", bed)
        object.__setattr__(self, "surface", surface)

    @property
    def thickness(self) -> np.ndarray:
        return self.surface - self.bed

    @property
    def length(self) -> float:
        return float(self.arc[-1] - self.arc[0])


@dataclass(frozen=True)
class MeshQuality:
    min_angles: np.ndarray
    max_angles: np.ndarray
    angle_ratio: float

    @property
    def min_angle(self) -> float:
        return float(self.min_angles.min())


def square_mesh(nx: int, lo=(-1.0, -1.0), hi=(1.0, 1.0)) -> Mesh:
    """Structured mesh of a rectangle with ``2*nx**2`` right triangles.

    Every sub-rectangle is cut along its lower-left to upper-right diagonal and
    all boundary facets carry ``DIRICHLET_ALL``.
    """
    if int(nx) != nx or nx < 1:
        raise ValueError(f"nx must be a positive integer, got {nx!r}")
    nx = int(nx)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi <= lo):
        raise ValueError("need lo < hi componentwise")
    xs = np.linspace(lo[0], hi[0], nx + 1)
    ys = np.linspace(lo[1], hi[1], nx + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(nx), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * nx * nx, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper

    k = np.arange(nx)
    facets = np.concatenate(
        [
            np.column_stack([vid(k, 0), vid(k + 1, 0)]),
            np.column_stack([vid(nx, k), vid(nx, k + 1)]),
            np.column_stack([vid(k + 1, nx), vid(k, nx)]),
            np.column_stack([vid(0, k + 1), vid(0, k)]),
        ]
    )
    tags = np.full(len(facets), BoundaryTag.DIRICHLET_ALL)
    return Mesh(vertices, cells, facets, tags)


def extruded_glacier_mesh(
    profile: GlacierProfile,
    n_columns: int,
    n_layers: int,
    lake_interval: tuple[float, float] | None = None,
    min_thickness_fraction: float = 1e-3,
) -> Mesh:
    """Column-wise extrusion of a glacier profile from bed to surface.

    The arc range is split into ``n_columns`` equal columns; column edges take
    bed and surface by linear interpolation of the profile. Thickness is
    floored at ``min_thickness_fraction`` times its maximum so that cusp-like
    margins do not produce degenerate cells. Bed facets whose midpoint arc lies
    in ``lake_interval`` are tagged ``LAKE``; the two end walls are ``BED``.
    """
    if int(n_columns) != n_columns or n_columns < 1:
        raise ValueError("n_columns must be a positive integer")
    if int(n_layers) != n_layers or n_layers < 1:
        raise ValueError("n_layers must be a positive integer")
    n_columns, n_layers = int(n_columns), int(n_layers)
    thick = profile.thickness
    if np.any(thick[1:-1] <= 0.0):
        raise ValueError("surface meets the bed away from the profile endpoints")
    hmax = thick.max()
    if hmax <= 0.0:
        raise ValueError("profile has zero thickness everywhere")

    xs = np.linspace(profile.arc[0], profile.arc[-1], n_columns + 1)
    bed = np.interp(xs, profile.arc, profile.bed)
    surf = np.interp(xs, profile.arc, profile.surface)
    h = np.maximum(surf - bed, min_thickness_fraction * hmax)

    frac = np.linspace(0.0, 1.0, n_layers + 1)
    # vertex (i, k): column edge i, layer level k
    Xv = np.repeat(xs[:, None], n_layers + 1, axis=1)
    Zv = bed[:, None] + frac[None, :] * h[:, None]
    vertices = np.column_stack([Xv.ravel(), Zv.ravel()])

    def vid(i, k):
        return i * (n_layers + 1) + k

    i, k = np.meshgrid(np.arange(n_columns), np.arange(n_layers), indexing="ij")
    i, k = i.ravel(), k.ravel()
    v00, v10, v01, v11 = vid(i, k), vid(i + 1, k), vid(i, k + 1), vid(i + 1, k + 1)
    cells = np.empty((2 * n_columns * n_layers, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([v00, v10, v11])
    cells[1::2] = np.column_stack([v00, v11, v01])

    c = np.arange(n_columns)
    l = np.arange(n_layers)
    bottom = np.column_stack([vid(c, 0), vid(c + 1, 0)])
    top = np.column_stack([vid(c + 1, n_layers), vid(c, n_layers)])
    right = np.column_stack([vid(n_columns, l), vid(n_columns, l + 1)])
    left = np.column_stack([vid(0, l + 1), vid(0, l)])

    mid = 0.5 * (xs[:-1] + xs[1:])
    bottom_tags = np.full(n_columns, BoundaryTag.BED)
    if lake_interval is not None:
        a, b = lake_interval
        bottom_tags[(mid >= a) & (mid <= b)] = BoundaryTag.LAKE
    facets = np.concatenate([bottom, right, top, left])
    tags = np.concatenate(
        [
            bottom_tags,
            np.full(n_layers, BoundaryTag.BED),
            np.full(n_columns, BoundaryTag.SURFACE),
            np.full(n_layers, BoundaryTag.BED),
        ]
    )
    return Mesh(vertices, cells, facets, tags)


def synthetic_profile(
    length: float = 5000.0,
    max_thickness: float = 130.0,
    bed_top: float = 3000.0,
    bed_slope: float = 0.1,
    overdeepening_depth: float = 80.0,
    overdeepening_center: float | None = None,
    overdeepening_width: float = 600.0,
    n_points: int = 201,
) -> GlacierProfile:
    """Valley-glacier-like section: sloping bed with a Gaussian overdeepening
    and a parabolic thickness that vanishes at both margins."""
    x = np.linspace(0.0, length, n_points)
    if overdeepening_center is None:
        overdeepening_center = 0.5 * length
    bed = (
        bed_top
        - bed_slope * x
        - overdeepening_depth * np.exp(-(((x - overdeepening_center) / overdeepening_width) ** 2))
    )
    s = x / length
    thickness = 4.0 * max_thickness * s * (1.0 - s)
    thickness[[0, -1]] = 0.0
    return GlacierProfile(x, bed, bed + thickness)


def load_mesh(path) -> Mesh:
    """Read the ASCII mesh format (``vertices N`` / ``cells M`` / ``facets K``)."""
    lines = Path(path).read_text().splitlines()
    pos = 0

    def next_content():
        nonlocal pos
        while pos < len(lines):
            text = lines[pos].split("#", 1)[0].strip()
            pos += 1
            if text:
                return pos, text
        return pos, None

    def read_block(name, ncols, conv):
        lineno, header = next_content()
        if header is None:
            raise MeshParseError(f"missing '{name}' header", lineno)
        parts = header.split()
        if len(parts) != 2 or parts[0].lower() != name:
            raise MeshParseError(f"expected '{name} <count>', got {header!r}", lineno)
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshParseError(f"bad count {parts[1]!r}", lineno) from None
        if count < 0:
            raise MeshParseError("negative count", lineno)
        rows, linenos = [], []
        for _ in range(count):
            lineno, text = next_content()
            if text is None:
                raise MeshParseError(f"unexpected end of file in '{name}' block", lineno)
            parts = text.split()
            if len(parts) != ncols:
                raise MeshParseError(f"expected {ncols} fields, got {len(parts)}", lineno)
            try:
                rows.append([c(p) for c, p in zip(conv, parts)])
            except (ValueError, KeyError):
                raise MeshParseError(f"cannot parse {text!r}", lineno) from None
            linenos.append(lineno)
        return rows, linenos

    vrows, _ = read_block("vertices", 2, (float, float))
    crows, clines = read_block("cells", 3, (int, int, int))
    frows, flines = read_block("facets", 3, (int, int, parse_tag))
    nv = len(vrows)
    for row, ln in zip(crows, clines):
        if min(row) < 0 or max(row) >= nv:
            raise MeshParseError(f"cell references vertex out of range 0..{nv - 1}", ln)
    for row, ln in zip(frows, flines):
        if min(row[:2]) < 0 or max(row[:2]) >= nv:
            raise MeshParseError(f"facet references vertex out of range 0..{nv - 1}", ln)

    vertices = np.array(vrows, dtype=float).reshape(-1, 2)
    cells = np.array(crows, dtype=np.int64).reshape(-1, 3)
    if len(cells):
        # accept clockwise input, store counter-clockwise
        cw = signed_areas(vertices, cells) < 0
        cells[cw] = cells[cw][:, [0, 2, 1]]
    facets = np.array([r[:2] for r in frows], dtype=np.int64).reshape(-1, 2)
    tags = np.array([int(r[2]) for r in frows], dtype=np.int64)
    return Mesh(vertices, cells, facets, tags)


def save_mesh(mesh: Mesh, path) -> None:
    out = [f"vertices {mesh.num_vertices}"]
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    out.append(f"cells {mesh.num_cells}")
    out += [f"{a} {b} {c}" for a, b, c in mesh.cells]
    out.append(f"facets {len(mesh.facets)}")
    out += [f"{a} {b} {BoundaryTag(int(t)).name.lower()}" for (a, b), t in zip(mesh.facets, mesh.facet_tags)]
    Path(path).write_text("\n".join(out) + "\n")


def load_profile(path) -> GlacierProfile:
    """Read a CSV profile with header ``arc,bed,surface`` (metres)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MeshParseError("empty profile file", 1) from None
        if [h.strip().lower() for h in header] != ["arc", "bed", "surface"]:
            raise MeshParseError(f"expected header 'arc,bed,surface', got {header!r}", 1)
        arc, bed, surf = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise MeshParseError(f"expected 3 fields, got {len(row)}", lineno)
            try:
                a, b, s = (float(c) for c in row)
            except ValueError:
                raise MeshParseError(f"cannot parse {row!r}", lineno) from None
            arc.append(a)
            bed.append(b)
            surf.append(s)
    return GlacierProfile(np.array(arc), np.array(bed), np.array(surf))


def save_profile(profile: GlacierProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arc", "bed", "surface"])
        for row in zip(profile.arc, profile.bed, profile.surface):
            w.writerow([f"{v:.17g}" for v in row])


def mesh_quality(mesh: Mesh) -> MeshQuality:
    """Exact interior angles per cell and the global min/max angle ratio."""
    v = mesh.vertices[mesh.cells]
    angles = np.empty((mesh.num_cells, 3))
    for k in range(3):
        a = v[:, (k + 1) % 3] - v[:, k]
        b = v[:, (k + 2) % 3] - v[:, k]
        cross = np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
        dot = np.einsum("ij,ij->i", a, b)
        angles[:, k] = np.arctan2(cross, dot)
    mins = angles.min(axis=1)
    maxs = angles.max(axis=1)
    return MeshQuality(mins, maxs, float(mins.min() / maxs.max()))
