"""Structured P1/P0 finite elements on the unit square.

The mesh is a uniform grid with ``m`` subdivisions per side, every cell split
along the same (lower-left to upper-right) diagonal, which makes the P1
Laplacian stiffness realize the classical 5-point stencil.  States are
continuous piecewise-linear with zero boundary values (coefficients at the
(m-1)^2 interior vertices); controls are piecewise-constant per triangle
(2 m^2 coefficients).  Vertex numbering is row-major, triangle numbering
cell-major with the lower triangle first.
"""

import csv

import numpy as np

from .linalg import CsrMatrix

__all__ = [
    "Triangulation",
    "build_mesh",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_control_operator",
    "interpolate_p1",
    "project_p0",
    "norm_l2_p1",
    "norm_l2_p0",
    "norm_l1_p0",
    "norm_linf_p0",
    "export_p1_csv",
    "export_p0_csv",
]


class Triangulation:
    """Uniform right-triangle mesh of [0,1]^2 with interior-vertex indexing."""

    def __init__(self, m):
        if m < 2:
            raise ValueError("need at least 2 subdivisions per side")
        self.m = int(m)
        self.h = 1.0 / m
        self.n_vertices = (m + 1) ** 2
        self.n_interior = (m - 1) ** 2
        self.n_triangles = 2 * m * m
        self.triangle_area = self.h * self.h / 2.0

        side = np.arange(m + 1) * self.h
        xx, yy = np.meshgrid(side, side)  # row-major: vertex j*(m+1)+i at (i h, j h)
        self.vertices = np.column_stack([xx.ravel(), yy.ravel()])

        ii, jj = np.meshgrid(np.arange(m + 1), np.arange(m + 1))
        interior = (ii.ravel() > 0) & (ii.ravel() < m) & (jj.ravel() > 0) & (jj.ravel() < m)
        self.interior_map = np.full(self.n_vertices, -1, dtype=np.int64)
        self.interior_vertices = np.flatnonzero(interior)
        self.interior_map[self.interior_vertices] = np.arange(self.n_interior)

        # cells row-major (cj outer, ci inner); per cell: lower (v00,v10,v11)
        # then upper (v00,v11,v01)
        ci, cj = np.meshgrid(np.arange(m), np.arange(m))
        ci, cj = ci.ravel(), cj.ravel()
        v00 = cj * (m + 1) + ci
        v10 = v00 + 1
        v01 = v00 + (m + 1)
        v11 = v01 + 1
        tris = np.empty((self.n_triangles, 3), dtype=np.int64)
        tris[0::2] = np.column_stack([v00, v10, v11])
        tris[1::2] = np.column_stack([v00, v11, v01])
        self.triangles = tris
        self.centroids = self.vertices[tris].mean(axis=1)

        self._stiffness = None
        self._mass = None
        self._control = None

    def interior_coords(self):
        return self.vertices[self.interior_vertices]

    def stiffness(self):
        if self._stiffness is None:
            self._stiffness = assemble_stiffness(self)
        return self._stiffness

    def mass(self):
        if self._mass is None:
            self._mass = assemble_mass(self)
        return self._mass

    def control_operator(self):
        if self._control is None:
            self._control = assemble_control_operator(self)
        return self._control


def build_mesh(m):
    return Triangulation(m)


def _element_gradients(mesh):
    """Physical gradients of the three nodal basis functions, per triangle.

    Returns an array of shape (n_triangles, 3, 2).
    """
    p = mesh.vertices[mesh.triangles]  # (t, 3, 2)
    b = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edges
    binv = np.linalg.inv(b)
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # reference gradients
    return np.einsum("nk,tkj->tnj", ref, binv)


def _scatter_interior(mesh, local, symmetric):
    """Accumulate per-element 3x3 blocks into the interior-vertex matrix."""
    tris = mesh.triangles
    imap = mesh.interior_map
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    vals = local.reshape(-1)
    ri, cj = imap[rows], imap[cols]
    keep = (ri >= 0) & (cj >= 0)
    return CsrMatrix.from_coo(
        mesh.n_interior, mesh.n_interior, ri[keep], cj[keep], vals[keep],
        symmetric=symmetric,
    )


def assemble_stiffness(mesh, a11=1.0, a12=0.0, a22=1.0, a0=0.0):
    """Interior stiffness matrix of -div(A grad .) + a0 with constant coefficients.

    The default is the Laplacian, whose interior rows form the 5-point
    stencil (4 on the diagonal, -1 to the axis neighbors).
    """
    grads = _element_gradients(mesh)
    coeff = np.array([[a11, a12], [a12, a22]])
    local = mesh.triangle_area * np.einsum("tnj,jk,tmk->tnm", grads, coeff, grads)
    if a0 != 0.0:
        local = local + a0 * _element_mass(mesh)
    return _scatter_interior(mesh, local, symmetric=True)


def _element_mass(mesh):
    base = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    return mesh.triangle_area * np.broadcast_to(base, (mesh.n_triangles, 3, 3))


def assemble_mass(mesh):
    """Interior P1 Gram (mass) matrix, exact for piecewise linears."""
    return _scatter_interior(mesh, np.array(_element_mass(mesh)), symmetric=True)


def assemble_control_operator(mesh):
    """Coupling of P0 controls to P1 interior test functions.

    Entry (i, j) is the integral of the i-th interior hat function over
    triangle j, i.e. area/3 whenever vertex i belongs to triangle j.
    """
    tris = mesh.triangles
    imap = mesh.interior_map
    rows = imap[tris.ravel()]
    cols = np.repeat(np.arange(mesh.n_triangles, dtype=np.int64), 3)
    keep = rows >= 0
    vals = np.full(keep.sum(), mesh.triangle_area / 3.0)
    return CsrMatrix.from_coo(mesh.n_interior, mesh.n_triangles, rows[keep], cols[keep], vals)


def interpolate_p1(mesh, f):
    """Nodal values of f at interior vertices (boundary values are 0)."""
    xy = mesh.interior_coords()
    return np.asarray(f(xy[:, 0], xy[:, 1]), dtype=np.float64) * np.ones(mesh.n_interior)


def project_p0(mesh, f):
    """Centroid values of f, one per triangle."""
    c = mesh.centroids
    return np.asarray(f(c[:, 0], c[:, 1]), dtype=np.float64) * np.ones(mesh.n_triangles)


def norm_l2_p1(mesh, y):
    """L2 norm of a P1 field via the mass quadratic form."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (mesh.n_interior,):
        raise ValueError("P1 field has wrong length")
    return float(np.sqrt(max(y @ (mesh.mass() @ y), 0.0)))


def norm_l2_p0(mesh, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (mesh.n_triangles,):
        raise ValueError("P0 field has wrong length")
    return float(np.sqrt(mesh.triangle_area * (u @ u)))


def norm_l1_p0(mesh, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (mesh.n_triangles,):
        raise ValueError("P0 field has wrong length")
    return float(mesh.triangle_area * np.abs(u).sum())


def norm_linf_p0(mesh, u):
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (mesh.n_triangles,):
        raise ValueError("P0 field has wrong length")
    return float(np.abs(u).max())


def _write_points_csv(path, coords, values):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "value"])
        for (x, y), v in zip(coords, values):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def export_p1_csv(mesh, y, path):
    """Dump a P1 field as (x, y, value) rows at interior vertices."""
    _write_points_csv(path, mesh.interior_coords(), y)


def export_p0_csv(mesh, u, path):
    """Dump a P0 field as (x, y, value) rows at triangle centroids."""
    _write_points_csv(path, mesh.centroids, u)
