"""Geometry catalog: model spaces with exact metadata oracles.

Kinds
-----
euclidean    cell-centered grid on a box [-a, a]^n, reflecting (zero-Neumann)
             closure, uniform measure h^n, conductance h^(n-2)
torus        periodic grid, period P, uniform measure
sphere       geodesic icosahedral mesh of S^2 (frequency nu, 10 nu^2 + 2
             vertices), cotangent conductances, lumped vertex-area measure
heisenberg   group lattice for the first Heisenberg group: horizontal moves
             are the exact time-h flows of X = dx - (y/2) dz and
             Y = dy + (x/2) dz, which close on the lattice when the vertical
             spacing is h^2/2; the four horizontal edges assemble the
             sub-Laplacian and the vertical edge form carries Z = dz

All truncations are reflecting, so mass conservation is exact and the
constant field is in the kernel of L globally.  The hyperbolic kind is an
optional tier that is not enabled in this build.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .fields import (
    CDParameters,
    DiscretizedModel,
    EdgeForm,
    VerticalForm,
    graph_laplacian,
    self_test_gamma,
)


class UnsupportedModelError(ValueError):
    """Requested (kind, dim) combination is not in the catalog."""


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    dim: int = 2
    resolution: int = 16
    extent: float = 1.0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("euclidean", "torus", "sphere", "heisenberg", "hyperbolic"):
            raise UnsupportedModelError(f"unknown model kind {self.kind!r}")
        if self.resolution < 8:
            raise ValueError("resolution must be at least 8")
        if self.kind in ("euclidean", "heisenberg") and not (self.extent > 0):
            raise ValueError("truncated kinds need a positive extent")

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        known = {"kind", "dim", "resolution", "extent", "options"}
        extra = {k: v for k, v in d.items() if k not in known}
        opts = dict(d.get("options", {}))
        opts.update(extra)
        return ModelSpec(
            kind=d["kind"],
            dim=int(d.get("dim", 2)),
            resolution=int(d.get("resolution", 16)),
            extent=float(d.get("extent", 1.0)),
            options=opts,
        )


@dataclass(frozen=True)
class GeometryOracle:
    """Exact per-model metadata; fields are None when no closed form exists."""

    dim: int
    ricci_lower: float
    cd_params: Optional[CDParameters] = None
    exact_distance: Optional[Callable] = None          # (x, y) -> float
    exact_ball_volume: Optional[Callable] = None       # (x, r) -> float
    exact_kernel: Optional[Callable] = None            # (t, x, y) -> float
    exact_eigenvalues: Optional[Callable] = None       # count -> ndarray
    total_measure: Optional[float] = None
    diameter: Optional[float] = None


def exact_heat_kernel(oracle: GeometryOracle, t: float, x, y) -> float:
    """Evaluate the oracle heat kernel; positive and symmetric in (x, y)."""
    if oracle.exact_kernel is None:
        raise UnsupportedModelError(
            "oracle carries no closed-form kernel; use the discrete kernel"
        )
    if not (t > 0):
        raise ValueError("kernel time must be positive")
    return float(oracle.exact_kernel(t, np.asarray(x, float), np.asarray(y, float)))


def model_hash(model: DiscretizedModel) -> str:
    """Structural hash of a model (keys spectral caches)."""
    h = hashlib.sha256()
    h.update(model.kind.encode())
    h.update(model.nodes.tobytes())
    h.update(model.mu.tobytes())
    h.update(model.edge_form.i.tobytes())
    h.update(model.edge_form.j.tobytes())
    h.update(model.edge_form.c.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# grid kinds (euclidean box, torus)


def _axis_edges(shape, axis, wrap):
    """Index pairs of nearest neighbours along one axis of a C-ordered grid."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    a = np.moveaxis(idx, axis, 0)
    pairs = [(a[:-1].ravel(), a[1:].ravel())]
    if wrap and shape[axis] > 2:
        pairs.append((a[-1].ravel(), a[0].ravel()))
    i = np.concatenate([p[0] for p in pairs])
    j = np.concatenate([p[1] for p in pairs])
    return i, j


def _build_grid(spec: ModelSpec, periodic: bool):
    dim, m = spec.dim, spec.resolution
    if periodic:
        period = float(spec.options.get("period", 2 * np.pi))
        h = period / m
        axis = -period / 2 + h * np.arange(m)
    else:
        a = spec.extent
        h = 2 * a / m
        axis = -a + h * (np.arange(m) + 0.5)   # cell centers tile [-a, a]
    shape = (m,) * dim
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    n = nodes.shape[0]

    ii, jj = [], []
    for ax in range(dim):
        i, j = _axis_edges(shape, ax, wrap=periodic)
        ii.append(i)
        jj.append(j)
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    c = np.full(i.shape, h ** (dim - 2), dtype=float)
    ef = EdgeForm(i, j, c, n)
    mu = np.full(n, h ** dim)
    L = graph_laplacian(ef, mu)

    if periodic:
        boundary = np.zeros(n, dtype=bool)
    else:
        onb = np.zeros(shape, dtype=bool)
        for ax in range(dim):
            sl = [slice(None)] * dim
            sl[ax] = 0
            onb[tuple(sl)] = True
            sl[ax] = m - 1
            onb[tuple(sl)] = True
        boundary = onb.ravel()

    lengths = np.linalg.norm(nodes[j] - nodes[i], axis=1)
    if periodic:
        lengths = np.minimum(lengths, np.full_like(lengths, h))  # wrap edges
    meta = {"h": h, "shape": shape, "mesh_order": 2}
    if periodic:
        meta["period"] = period
    return nodes, mu, L, ef, lengths, boundary, meta


def _euclidean_oracle(dim: int, extent: float) -> GeometryOracle:
    def kernel(t, x, y):
        d2 = float(np.sum((x - y) ** 2))
        return (4 * np.pi * t) ** (-dim / 2) * np.exp(-d2 / (4 * t))

    vol_coef = {1: 2.0, 2: np.pi, 3: 4 * np.pi / 3}[dim]

    return GeometryOracle(
        dim=dim,
        ricci_lower=0.0,
        exact_distance=lambda x, y: float(np.linalg.norm(np.asarray(x) - np.asarray(y))),
        exact_ball_volume=lambda x, r: vol_coef * r ** dim,
        exact_kernel=kernel,
        total_measure=(2 * extent) ** dim,
        diameter=2 * extent * np.sqrt(dim),
    )


def _torus_oracle(dim: int, period: float) -> GeometryOracle:
    def dist(x, y):
        d = np.abs(np.asarray(x) - np.asarray(y))
        d = np.minimum(d, period - d)
        return float(np.linalg.norm(d))

    def kernel(t, x, y):
        # wrapped Gaussian; images decay fast for t << period^2
        nimg = max(2, int(np.ceil(4 * np.sqrt(t) / period)) + 2)
        total = 1.0
        x, y = np.atleast_1d(x), np.atleast_1d(y)
        for d in range(dim):
            shifts = period * np.arange(-nimg, nimg + 1)
            total *= np.sum(
                (4 * np.pi * t) ** -0.5 * np.exp(-((x[d] - y[d] + shifts) ** 2) / (4 * t))
            )
        return total

    def eigenvalues(count):
        # multiplicity 2 for every nonzero frequency, per axis combination
        kmax = int(np.ceil(count ** (1.0 / dim))) + 2
        rng = np.arange(-kmax, kmax + 1)
        grids = np.meshgrid(*([rng] * dim), indexing="ij")
        lam = sum((2 * np.pi / period * g.astype(float)) ** 2 for g in grids)
        return np.sort(lam.ravel())[:count]

    return GeometryOracle(
        dim=dim,
        ricci_lower=0.0,
        exact_distance=dist,
        exact_kernel=kernel,
        exact_eigenvalues=eigenvalues,
        total_measure=period ** dim,
        diameter=period * np.sqrt(dim) / 2,
    )


# ---------------------------------------------------------------------------
# sphere


_PHI = (1 + np.sqrt(5)) / 2

_ICO_VERTS = np.array(
    [(-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
     (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
     (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1)],
    dtype=float,
)
_ICO_FACES = np.array(
    [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
     (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
     (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
     (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)],
    dtype=int,
)


def geodesic_sphere(frequency: int):
    """Class-I geodesic subdivision of the icosahedron, projected to S^2.

    Returns unit vertices (10 nu^2 + 2 of them) and triangle faces.
    """
    nu = int(frequency)
    base = _ICO_VERTS / np.linalg.norm(_ICO_VERTS[0])
    verts: list[np.ndarray] = []
    index: dict[bytes, int] = {}
    faces: list[tuple[int, int, int]] = []

    def vid(p: np.ndarray) -> int:
        p = p / np.linalg.norm(p)
        key = np.round(p, 9).tobytes()
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    for (a, b, c) in _ICO_FACES:
        A, B, C = base[a], base[b], base[c]
        grid = {}
        for i in range(nu + 1):
            for j in range(nu + 1 - i):
                p = (A * (nu - i - j) + B * i + C * j) / nu
                grid[(i, j)] = vid(p)
        for i in range(nu):
            for j in range(nu - i):
                faces.append((grid[(i, j)], grid[(i + 1, j)], grid[(i, j + 1)]))
                if i + j < nu - 1:
                    faces.append((grid[(i + 1, j)], grid[(i + 1, j + 1)], grid[(i, j + 1)]))
    return np.asarray(verts), np.asarray(faces, dtype=int)


def cotangent_assembly(verts: np.ndarray, faces: np.ndarray):
    """Cotangent conductances and lumped (barycentric) vertex areas."""
    n = verts.shape[0]
    weights: dict[tuple[int, int], float] = {}
    area = np.zeros(n)
    for (a, b, c) in faces:
        P = verts[[a, b, c]]
        # angles via edge vectors; flat triangle geometry on chords
        for k, (u, v, w) in enumerate(((a, b, c), (b, c, a), (c, a, b))):
            e1 = verts[v] - verts[u]
            e2 = verts[w] - verts[u]
            cross = np.linalg.norm(np.cross(e1, e2))
            cot = float(e1 @ e2) / cross
            key = (v, w) if v < w else (w, v)
            weights[key] = weights.get(key, 0.0) + 0.5 * cot
        tri_area = 0.5 * np.linalg.norm(np.cross(P[1] - P[0], P[2] - P[0]))
        for u in (a, b, c):
            area[u] += tri_area / 3.0
    keys = sorted(weights)
    i = np.array([k[0] for k in keys], dtype=np.int64)
    j = np.array([k[1] for k in keys], dtype=np.int64)
    c = np.array([weights[k] for k in keys])
    return i, j, c, area


def _legendre_values(lmax: int, x: float) -> np.ndarray:
    """P_0(x) .. P_lmax(x) by the three-term recurrence."""
    p = np.empty(lmax + 1)
    p[0] = 1.0
    if lmax >= 1:
        p[1] = x
    for l in range(1, lmax):
        p[l + 1] = ((2 * l + 1) * x * p[l] - l * p[l - 1]) / (l + 1)
    return p


def sphere_zonal_kernel(t: float, cos_angle: float, tail: float = 1e-12,
                        lmax_cap: int = 4000) -> float:
    """Zonal heat-kernel series on S^2 with a rigorous truncation rule.

    Truncation degree L is the smallest with exp(-L(L+1)t) (2L+1)^2 below
    ``tail``; the discarded majorant sum is below that bound for t > 0.
    """
    if not (t > 0):
        raise ValueError("kernel time must be positive")
    L = 1
    while np.exp(-L * (L + 1) * t) * (2 * L + 1) ** 2 >= tail:
        L += 1
        if L > lmax_cap:
            raise ValueError("time too small for the zonal series cap")
    ls = np.arange(L + 1)
    p = _legendre_values(L, float(np.clip(cos_angle, -1.0, 1.0)))
    return float(np.sum(np.exp(-ls * (ls + 1) * t) * (2 * ls + 1) * p) / (4 * np.pi))


def latitude_sphere(mt: int, pole_rows_untrusted: int = 4):
    """Conservative latitude-longitude discretization of S^2 with pole cells.

    Interior rows sit at colatitude i * dth (i = 1 .. mt-1) with 2 mt
    longitudes; the two poles are genuine cap cells.  Conductances are the
    exact flux coefficients of the divergence form of the Laplace-Beltrami
    operator, so the scheme is pointwise second-order accurate away from the
    coordinate degeneracy.  The first ``pole_rows_untrusted`` rows adjacent
    to each pole change stencil character; second-order forms are not
    trusted there and the builder exports a trusted-node mask.
    """
    mp = 2 * mt
    dth = np.pi / mt
    dph = 2 * np.pi / mp
    th = np.arange(1, mt) * dth
    nrows = mt - 1
    n = nrows * mp + 2
    north, south = n - 2, n - 1
    idx = np.arange(nrows * mp).reshape(nrows, mp)
    T, P = np.meshgrid(th, np.arange(mp) * dph, indexing="ij")

    mu = np.empty(n)
    mu[: nrows * mp] = (np.sin(T) * dth * dph).ravel()
    mu[north] = mu[south] = 2 * np.pi * (1 - np.cos(dth / 2))

    ii, jj, cc, ll = [], [], [], []
    for s in range(mp):
        s2 = (s + 1) % mp
        ii.append(idx[:, s])
        jj.append(idx[:, s2])
        cc.append(dth / (np.sin(th) * dph))
        ll.append(np.sin(th) * dph)
    for r in range(nrows - 1):
        ii.append(idx[r, :])
        jj.append(idx[r + 1, :])
        cc.append(np.full(mp, np.sin((r + 1.5) * dth) * dph / dth))
        ll.append(np.full(mp, dth))
    for pole, row in ((north, 0), (south, nrows - 1)):
        ii.append(np.full(mp, pole))
        jj.append(idx[row, :])
        cc.append(np.full(mp, np.sin(dth / 2) * dph / dth))
        ll.append(np.full(mp, dth))

    i = np.concatenate([np.asarray(a, np.int64) for a in ii])
    j = np.concatenate([np.asarray(a, np.int64) for a in jj])
    c = np.concatenate(cc)
    lengths = np.concatenate(ll)

    nodes = np.zeros((n, 3))
    nodes[: nrows * mp] = np.stack(
        [np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1
    ).reshape(-1, 3)
    nodes[north] = (0.0, 0.0, 1.0)
    nodes[south] = (0.0, 0.0, -1.0)

    trusted = np.zeros(n, dtype=bool)
    k = pole_rows_untrusted
    if nrows > 2 * k:
        block = np.zeros((nrows, mp), dtype=bool)
        block[k : nrows - k, :] = True
        trusted[: nrows * mp] = block.ravel()
    return i, j, c, mu, nodes, lengths, trusted, dth


def _sphere_oracle() -> GeometryOracle:
    def dist(x, y):
        return float(np.arccos(np.clip(np.dot(x, y), -1.0, 1.0)))

    def kernel(t, x, y):
        return sphere_zonal_kernel(t, float(np.dot(x, y)))

    def eigenvalues(count):
        lam = []
        l = 0
        while len(lam) < count:
            lam.extend([l * (l + 1)] * (2 * l + 1))
            l += 1
        return np.array(lam[:count], dtype=float)

    return GeometryOracle(
        dim=2,
        ricci_lower=1.0,
        exact_distance=dist,
        exact_ball_volume=lambda x, r: 2 * np.pi * (1 - np.cos(min(r, np.pi))),
        exact_kernel=kernel,
        exact_eigenvalues=eigenvalues,
        total_measure=4 * np.pi,
        diameter=np.pi,
    )


# ---------------------------------------------------------------------------
# heisenberg group lattice


def _build_heisenberg(spec: ModelSpec):
    """Group lattice for the first Heisenberg group.

    Horizontal moves are exact unit-time-h flows of X and Y; they close on
    the lattice with vertical spacing hz = h^2/2.  The elementary X-Y
    commutator loop shifts the vertical index by 2, so (k + i j) mod 2 is
    invariant under horizontal moves: the model lives on the even-parity
    sublattice (one horizontally connected component) and vertical edges
    step by 2 hz.
    """
    m_half = (spec.resolution - 1) // 2
    h = spec.extent / m_half
    hz = h * h / 2.0
    z_extent = float(spec.options.get("z_extent", spec.extent / 8.0))
    mz_half = max(4, int(round(z_extent / hz)))

    xs = np.arange(-m_half, m_half + 1)
    ks = np.arange(-mz_half, mz_half + 1)
    nx, nz = xs.size, ks.size

    I, J, K = np.meshgrid(xs, xs, ks, indexing="ij")
    iv, jv, kv = I.ravel(), J.ravel(), K.ravel()
    keep = ((kv + iv * jv) % 2) == 0
    n = int(keep.sum())
    idmap = np.full(iv.size, -1, dtype=np.int64)
    idmap[keep] = np.arange(n)

    nodes = np.stack([iv[keep] * h, jv[keep] * h, kv[keep] * hz], axis=1)

    def flat(i, j, k):
        return ((i + m_half) * nx + (j + m_half)) * nz + (k + mz_half)

    ib, jb, kb = iv[keep], jv[keep], kv[keep]
    edges_i, edges_j = [], []

    # X flow: (x, y, z) -> (x + h, y, z - h y / 2): lattice move (1, 0, -j)
    ok = (ib + 1 <= m_half) & (np.abs(kb - jb) <= mz_half)
    edges_i.append(idmap[flat(ib[ok], jb[ok], kb[ok])])
    edges_j.append(idmap[flat(ib[ok] + 1, jb[ok], kb[ok] - jb[ok])])

    # Y flow: (x, y, z) -> (x, y + h, z + h x / 2): lattice move (0, 1, +i)
    ok = (jb + 1 <= m_half) & (np.abs(kb + ib) <= mz_half)
    edges_i.append(idmap[flat(ib[ok], jb[ok], kb[ok])])
    edges_j.append(idmap[flat(ib[ok], jb[ok] + 1, kb[ok] + ib[ok])])

    i = np.concatenate(edges_i)
    j = np.concatenate(edges_j)
    assert np.all(i >= 0) and np.all(j >= 0)  # parity preserved by the moves
    mu_cell = h * h * (2 * hz)    # each sublattice node owns two hz-cells
    c = np.full(i.shape, mu_cell / (h * h))
    ef = EdgeForm(i, j, c, n)
    mu = np.full(n, mu_cell)
    L = graph_laplacian(ef, mu)

    # vertical form: Z = dz sampled by the in-sublattice step 2 hz
    okz = kb + 2 <= mz_half
    zi = idmap[flat(ib[okz], jb[okz], kb[okz])]
    zj = idmap[flat(ib[okz], jb[okz], kb[okz] + 2)]
    cz = np.full(zi.shape, mu_cell / (2 * hz) ** 2)
    vform_edges = EdgeForm(zi, zj, cz, n)

    # horizontal edge lengths: time to traverse the unit-speed flow
    lengths = np.full(i.shape, h)

    # boundary: any missing structural move (4 horizontal + 2 vertical)
    deg = np.zeros(n)
    np.add.at(deg, i, 1.0)
    np.add.at(deg, j, 1.0)
    degz = np.zeros(n)
    np.add.at(degz, zi, 1.0)
    np.add.at(degz, zj, 1.0)
    boundary = (deg < 4) | (degz < 2)

    ncomp, _ = connected_components(
        sp.coo_matrix((np.ones(i.size), (i, j)), shape=(n, n)), directed=False
    )
    if ncomp != 1:
        raise UnsupportedModelError("horizontal graph is disconnected; widen the box")

    meta = {"h": h, "hz": hz, "z_step": 2 * hz, "shape": (nx, nx, nz),
            "mesh_order": 2}
    return nodes, mu, L, ef, lengths, boundary, meta, vform_edges


def heisenberg_translate(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Left-translate q by p^{-1}; distances satisfy d(p, q) = d(0, p^{-1} q)."""
    a, b, c = p
    x, y, z = q
    return np.array([x - a, y - b, z - c + (b * x - a * y) / 2.0])


def _heisenberg_oracle(total: float) -> GeometryOracle:
    return GeometryOracle(
        dim=3,
        ricci_lower=0.0,
        cd_params=CDParameters(rho1=0.0, rho2=0.5, kappa=1.0, n=2.0),
        total_measure=total,
    )


# ---------------------------------------------------------------------------
# entry point


def build_model(spec: ModelSpec):
    """Build (DiscretizedModel, GeometryOracle, VerticalForm | None)."""
    vform = None
    if spec.kind == "euclidean":
        if spec.dim not in (1, 2, 3):
            raise UnsupportedModelError("euclidean boxes support dim 1..3")
        nodes, mu, L, ef, lengths, boundary, meta = _build_grid(spec, periodic=False)
        oracle = _euclidean_oracle(spec.dim, spec.extent)
        model_id = f"euclidean{spec.dim}d-m{spec.resolution}-a{spec.extent:g}"
    elif spec.kind == "torus":
        if spec.dim not in (1, 2):
            raise UnsupportedModelError("torus supports dim 1..2")
        nodes, mu, L, ef, lengths, boundary, meta = _build_grid(spec, periodic=True)
        oracle = _torus_oracle(spec.dim, meta["period"])
        model_id = f"torus{spec.dim}d-m{spec.resolution}-P{meta['period']:g}"
    elif spec.kind == "sphere":
        if spec.dim != 2:
            raise UnsupportedModelError("only the round 2-sphere is in the catalog")
        mesh = spec.options.get("mesh", "latitude")
        if mesh == "latitude":
            i, j, c, mu, nodes, lengths, trusted, dth = latitude_sphere(
                spec.resolution,
                pole_rows_untrusted=int(spec.options.get("pole_rows_untrusted", 4)),
            )
            ef = EdgeForm(i, j, c, mu.size)
            L = graph_laplacian(ef, mu)
            boundary = np.zeros(mu.size, dtype=bool)
            meta = {"h": dth, "mesh_order": 2, "trusted_mask": trusted}
            model_id = f"sphere2-lat{spec.resolution}"
        elif mesh == "icosahedral":
            # integrated quantities (spectra, semigroups) are accurate here,
            # but pointwise second-order forms are not consistent on the
            # irregular vertex stars; prefer the latitude mesh for those
            verts, faces = geodesic_sphere(spec.resolution)
            i, j, c, area = cotangent_assembly(verts, faces)
            ef = EdgeForm(i, j, c, verts.shape[0])
            mu = area
            L = graph_laplacian(ef, mu)
            chord = np.linalg.norm(verts[j] - verts[i], axis=1)
            lengths = 2 * np.arcsin(np.clip(chord / 2, 0, 1))
            nodes = verts
            boundary = np.zeros(verts.shape[0], dtype=bool)
            meta = {"h": float(lengths.mean()), "faces": faces, "mesh_order": 1,
                    "trusted_mask": np.zeros(verts.shape[0], dtype=bool)}
            model_id = f"sphere2-ico{spec.resolution}"
        else:
            raise UnsupportedModelError(f"unknown sphere mesh {mesh!r}")
        oracle = _sphere_oracle()
    elif spec.kind == "heisenberg":
        nodes, mu, L, ef, lengths, boundary, meta, vedges = _build_heisenberg(spec)
        oracle = _heisenberg_oracle(total=float(mu.sum()))
        model_id = (
            f"heisenberg-m{spec.resolution}-a{spec.extent:g}"
            f"-z{spec.options.get('z_extent', spec.extent / 8.0):g}"
        )
        vform = ("pending", vedges)
    elif spec.kind == "hyperbolic":
        raise UnsupportedModelError(
            "the hyperbolic plane is an optional tier and is not enabled"
        )
    else:  # pragma: no cover
        raise UnsupportedModelError(spec.kind)

    model = DiscretizedModel(
        model_id=model_id,
        kind=spec.kind,
        nodes=nodes,
        mu=mu,
        L=L,
        edge_form=ef,
        edge_length=lengths,
        boundary_mask=boundary,
        meta=meta,
    )
    if vform is not None:
        vform = VerticalForm(model_id=model_id, form=vform[1])

    # built-in self test: edge and operator routes to Gamma must agree
    resid = self_test_gamma(model, seed=7, n_fields=2)
    scale = float(np.abs(model.L.data).max())
    if resid > 1e-9 * max(1.0, scale):
        raise AssertionError(
            f"Gamma edge/operator self-test failed for {model_id}: {resid:g}"
        )
    model.meta["gamma_self_test"] = resid
    model.meta["oracle"] = oracle
    return model, oracle, vform


def node_nearest(model: DiscretizedModel, point) -> int:
    """Index of the node closest to a chart point."""
    p = np.asarray(point, dtype=float)
    return int(np.argmin(np.sum((model.nodes - p) ** 2, axis=1)))
