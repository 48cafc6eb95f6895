"""Heat semigroup engines: spectral decomposition and time stepping.

Two independent routes to exp(tL) are kept side by side and cross-checked:

* spectral truncation through the k lowest eigenpairs of -L in L2(mu),
  with the unresolved component damped at the last retained rate (so t = 0
  reproduces the input exactly and mass is conserved to roundoff);
* Crank-Nicolson stepping with a Richardson step-doubling control, solved
  by conjugate gradients on the mu-symmetrized operator.

The eigensolver works on the symmetrized matrix D^{1/2} L D^{-1/2}
(D = diag mu), so standard symmetric machinery applies; eigenfields map
back and are mu-orthonormal by construction.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .fields import DiscretizedModel, EdgeForm, ScalarField, graph_laplacian


class SolverError(RuntimeError):
    """Eigensolver failed to converge within its iteration budget."""


class TruncationError(RuntimeError):
    """Retained spectrum is inadequate for the requested diffusion time."""


CACHE_MAGIC = b"HLSPEC01"


@dataclass(frozen=True)
class SpectralData:
    """Ascending eigenvalues of -L with mu-orthonormal eigenfields."""

    model_id: str
    eigenvalues: np.ndarray     # (k,) ascending, nonnegative
    eigenfields: np.ndarray     # (N, k), columns mu-orthonormal
    residual: float             # max L2(mu) norm of L phi + lambda phi
    gram_error: float

    def __post_init__(self):
        for name in ("eigenvalues", "eigenfields"):
            a = np.asarray(getattr(self, name), dtype=float).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        lam = self.eigenvalues
        scale = max(1.0, float(lam[-1])) if lam.size else 1.0
        if lam.size and lam[0] > 1e-8 * scale:
            raise SolverError(f"lowest eigenvalue {lam[0]:g} is not ~0")
        if self.gram_error > 1e-8:
            raise SolverError(f"eigenfield Gram error {self.gram_error:g}")

    @property
    def count(self) -> int:
        return self.eigenvalues.shape[0]


def _symmetrized(model: DiscretizedModel):
    D = sp.diags(model.mu)
    C = -(D @ model.L)
    C = (C + C.T) * 0.5
    dm = 1.0 / np.sqrt(model.mu)
    A = sp.diags(dm) @ C @ sp.diags(dm)
    return A.tocsr(), dm


def spectral_decompose(model: DiscretizedModel, k: int, seed: int = 0,
                       dense_cutoff: int = 6000, maxiter: int | None = None) -> SpectralData:
    """k lowest eigenpairs of -L in the mu-weighted inner product.

    Deterministic for a fixed seed (the iterative start vector is drawn
    from it); small models fall back to a dense solve.
    """
    n = model.n_nodes
    if k > n:
        raise ValueError("cannot retain more eigenpairs than nodes")
    A, dm = _symmetrized(model)
    if n <= dense_cutoff:
        w, U = np.linalg.eigh(A.toarray())
        w, U = w[:k], U[:, :k]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        shift = 1e-2 * float(A.diagonal().mean())
        try:
            w, U = spla.eigsh(A, k=k, sigma=-shift, which="LM", v0=v0,
                              maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise SolverError(
                "eigensolver did not converge; raise the subspace size or "
                "lower the resolution"
            ) from exc
        order = np.argsort(w)
        w, U = w[order], U[:, order]

    # deterministic sign convention: largest-|entry| component positive
    pick = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pick, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U = U * signs

    w = np.clip(w, 0.0, None)
    phi = U * dm[:, None]
    gram = phi.T @ (model.mu[:, None] * phi)
    gram_error = float(np.max(np.abs(gram - np.eye(k))))
    resid = model.L @ phi + phi * w
    residual = float(np.sqrt(np.max(model.mu @ resid**2)))
    return SpectralData(model.model_id, w, phi, residual, gram_error)


# ---------------------------------------------------------------------------
# semigroup application


def _coefficients(model: DiscretizedModel, spectral: SpectralData, fv: np.ndarray):
    return spectral.eigenfields.T @ (model.mu * fv)


def apply_semigroup(model: DiscretizedModel, engine, f: ScalarField, t: float) -> ScalarField:
    """P_t f.  ``engine`` is SpectralData or a CrankNicolson stepper.

    The spectral route damps the component outside the retained span at the
    last resolved rate; the true semigroup damps it at least that fast, so
    the sup error is bounded by exp(-lambda_{k-1} t) times its norm.
    t = 0 returns f, total mass is conserved to roundoff, and every L^p
    norm is contracted up to the recorded truncation slack.
    """
    if t < 0:
        raise ValueError("diffusion time must be nonnegative")
    fv = model.check_field(f)
    if isinstance(engine, SpectralData):
        lam = engine.eigenvalues
        coef = _coefficients(model, engine, fv)
        resolved = engine.eigenfields @ (np.exp(-lam * t) * coef)
        rest = fv - engine.eigenfields @ coef
        damp = np.exp(-lam[-1] * t) if lam.size else 1.0
        return model.field(resolved + damp * rest)
    return engine.evolve(f, t)


def semigroup_truncation_bound(model: DiscretizedModel, spectral: SpectralData,
                               f: ScalarField, t: float) -> float:
    fv = model.check_field(f)
    coef = _coefficients(model, spectral, fv)
    rest = fv - spectral.eigenfields @ coef
    return float(np.exp(-spectral.eigenvalues[-1] * t) * np.sqrt(model.mu @ rest**2))


class CrankNicolson:
    """Implicit trapezoidal stepper with Richardson step-doubling control.

    Each half-step solves (I - dt/2 A) w = (I + dt/2 A) w on the
    symmetrized operator by conjugate gradients; constants are preserved
    exactly and so is total mass.
    """

    def __init__(self, model: DiscretizedModel, base_steps: int = 64,
                 richardson_tol: float = 1e-6, max_doublings: int = 4):
        self.model = model
        self.base_steps = base_steps
        self.richardson_tol = richardson_tol
        self.max_doublings = max_doublings
        self._A, self._dm = _symmetrized(model)

    def _run(self, w0: np.ndarray, t: float, steps: int) -> np.ndarray:
        dt = t / steps
        A = self._A
        op = spla.aslinearoperator(sp.eye(w0.size, format="csr") + (dt / 2) * A)
        w = w0
        for _ in range(steps):
            rhs = w - (dt / 2) * (A @ w)
            w, info = spla.cg(op, rhs, x0=w, rtol=1e-12, atol=1e-14)
            if info != 0:
                raise SolverError(f"conjugate gradients stalled (info={info})")
        return w

    def evolve(self, f: ScalarField, t: float) -> ScalarField:
        if t < 0:
            raise ValueError("diffusion time must be nonnegative")
        fv = self.model.check_field(f)
        if t == 0:
            return self.model.field(fv)
        w0 = fv / self._dm           # w = D^{1/2} f
        steps = self.base_steps
        w = self._run(w0, t, steps)
        for _ in range(self.max_doublings):
            steps *= 2
            w2 = self._run(w0, t, steps)
            if np.max(np.abs(w2 - w)) < self.richardson_tol * max(1.0, np.max(np.abs(w2))):
                w = w2
                break
            w = w2
        return self.model.field(w * self._dm)


# ---------------------------------------------------------------------------
# heat kernel


@dataclass(frozen=True)
class KernelEval:
    t: float
    i: int
    j: int
    value: float
    truncation_bound: float


def kernel_truncation_bound(model, spectral, t, i, j) -> float:
    """Valid tail bound from finite-dimensional completeness:

    sum_{m >= k} exp(-lam_m t) phi_m(i) phi_m(j) is at most
    exp(-lam_{k-1} t) / sqrt(mu_i mu_j).
    """
    lam = spectral.eigenvalues
    return float(np.exp(-lam[-1] * t) / np.sqrt(model.mu[i] * model.mu[j]))


def heat_kernel(model: DiscretizedModel, spectral: SpectralData, t: float,
                i: int, j: int, max_truncation: float | None = None) -> KernelEval:
    """Kernel value p(t, i, j) = sum_k exp(-lam_k t) phi_k(i) phi_k(j)."""
    if not (t > 0):
        raise ValueError("kernel time must be positive")
    lam = spectral.eigenvalues
    phi = spectral.eigenfields
    value = float(np.sum(np.exp(-lam * t) * phi[i] * phi[j]))
    bound = kernel_truncation_bound(model, spectral, t, i, j)
    if max_truncation is not None and bound > max_truncation:
        raise TruncationError(
            f"kernel tail bound {bound:g} exceeds {max_truncation:g} at t={t:g}; "
            "retain more eigenpairs"
        )
    return KernelEval(t=t, i=i, j=j, value=value, truncation_bound=bound)


def heat_kernel_block(spectral: SpectralData, t: float, rows, cols=None) -> np.ndarray:
    """Dense kernel block p(t, rows, cols) from the retained spectrum."""
    lam = spectral.eigenvalues
    phi = spectral.eigenfields
    w = np.exp(-lam * t)
    R = phi[rows] * w
    C = phi[cols] if cols is not None else phi[rows]
    return R @ C.T


def heat_kernel_column(model, spectral, t: float, i: int) -> ScalarField:
    lam = spectral.eigenvalues
    phi = spectral.eigenfields
    return model.field(phi @ (np.exp(-lam * t) * phi[i]))


# ---------------------------------------------------------------------------
# reproducing kernels, trace, equilibrium


def eigenvalue_clusters(spectral: SpectralData, rtol: float = 1e-6,
                        atol: float = 1e-9) -> list[np.ndarray]:
    """Group retained eigenvalues that agree within the clustering tolerance."""
    lam = spectral.eigenvalues
    clusters, start = [], 0
    for m in range(1, lam.size + 1):
        if m == lam.size or lam[m] - lam[start] > atol + rtol * max(1.0, lam[start]):
            clusters.append(np.arange(start, m))
            start = m
    return clusters


def reproducing_kernel(spectral: SpectralData, cluster: np.ndarray,
                       i: int, j: int, min_gap_factor: float = 10.0) -> float:
    """Projection kernel of one eigenspace, sum_k phi_k(i) phi_k(j).

    Raises when the cluster is not separated from its neighbours by at
    least ``min_gap_factor`` times the internal spread.
    """
    lam = spectral.eigenvalues
    cluster = np.asarray(cluster, dtype=int)
    spread = float(lam[cluster].max() - lam[cluster].min())
    lo, hi = cluster.min(), cluster.max()
    gaps = []
    if lo > 0:
        gaps.append(lam[lo] - lam[lo - 1])
    if hi < lam.size - 1:
        gaps.append(lam[hi + 1] - lam[hi])
    if gaps and min(gaps) < min_gap_factor * max(spread, 1e-12):
        raise SolverError(
            "eigenvalue cluster is not well separated at this tolerance"
        )
    phi = spectral.eigenfields[:, cluster]
    return float(phi[i] @ phi[j])


def reproducing_kernel_matrix(spectral: SpectralData, cluster: np.ndarray) -> np.ndarray:
    phi = spectral.eigenfields[:, np.asarray(cluster, dtype=int)]
    return phi @ phi.T


def trace(model: DiscretizedModel, spectral: SpectralData, t: float) -> float:
    """Trace of P_t over the retained spectrum, sum_k exp(-lam_k t)."""
    if not (t > 0):
        raise ValueError("trace needs positive time")
    return float(np.sum(np.exp(-spectral.eigenvalues * t)))


def trace_from_kernel(model: DiscretizedModel, spectral: SpectralData, t: float) -> float:
    lam, phi = spectral.eigenvalues, spectral.eigenfields
    diag = np.sum(phi**2 * np.exp(-lam * t), axis=1)
    return float(model.mu @ diag)


def equilibrium_error(model: DiscretizedModel, engine, f: ScalarField, t: float,
                      norm: str = "l2") -> float:
    """Distance of P_t f from its equilibrium (the mu-average of f)."""
    if model.boundary_mask.any() and not model.meta.get("reflecting", True):
        raise ValueError("equilibrium needs a reflecting (mass-conserving) closure")
    mean = model.integrate(f) / model.total_measure
    pt = apply_semigroup(model, engine, f, t)
    diff = pt.values - mean
    if norm == "sup":
        return float(np.max(np.abs(diff)))
    return float(np.sqrt(model.mu @ diff**2))


def equilibrium_rate(model, engine, f, t_grid) -> float:
    """Fitted slope of log ||P_t f - mean|| over the time grid."""
    errs = np.array([equilibrium_error(model, engine, f, t) for t in t_grid])
    if np.any(errs <= 0):
        raise ValueError("equilibrium error vanished on the grid; nothing to fit")
    return float(np.polyfit(np.asarray(t_grid, float), np.log(errs), 1)[0])


# ---------------------------------------------------------------------------
# Neumann restriction


def neumann_restrict(model: DiscretizedModel, node_subset) -> DiscretizedModel:
    """Reflecting restriction to a connected node subset.

    Keeps internal edges only, so the constant field stays in the kernel
    and the spectrum is the discrete Neumann spectrum of the subdomain.
    """
    subset = np.asarray(node_subset)
    if subset.dtype == bool:
        subset = np.flatnonzero(subset)
    subset = np.unique(subset)
    remap = -np.ones(model.n_nodes, dtype=np.int64)
    remap[subset] = np.arange(subset.size)

    ef = model.edge_form
    keep = (remap[ef.i] >= 0) & (remap[ef.j] >= 0)
    i, j = remap[ef.i[keep]], remap[ef.j[keep]]
    c = ef.c[keep]
    sub_ef = EdgeForm(i, j, c, subset.size)

    adj = sp.coo_matrix((np.ones(i.size), (i, j)), shape=(subset.size,) * 2)
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise ValueError("restriction subset is disconnected")

    mu = model.mu[subset]
    lost = np.ones(model.n_nodes, dtype=bool)
    lost[subset] = False
    adj_full = model.adjacency(weights="unit")
    touches_cut = np.asarray((adj_full @ lost.astype(float))[subset] > 0)
    boundary = model.boundary_mask[subset] | touches_cut

    sub = DiscretizedModel(
        model_id=f"{model.model_id}|sub{subset.size}",
        kind=model.kind,
        nodes=model.nodes[subset],
        mu=mu,
        L=graph_laplacian(sub_ef, mu),
        edge_form=sub_ef,
        edge_length=model.edge_length[keep],
        boundary_mask=boundary,
        meta={"h": model.meta.get("h"), "parent": model.model_id,
              "parent_index": subset,
              "mesh_order": model.meta.get("mesh_order", 1)},
    )
    if "trusted_mask" in model.meta:
        sub.meta["trusted_mask"] = model.meta["trusted_mask"][subset]
    return sub


# ---------------------------------------------------------------------------
# spectral cache (flat binary, versioned header)


def save_spectral(path: str, spectral: SpectralData, model_hash: str) -> None:
    header = json.dumps({
        "version": 1,
        "model_id": spectral.model_id,
        "model_hash": model_hash,
        "k": spectral.count,
        "n": spectral.eigenfields.shape[0],
        "residual": spectral.residual,
        "gram_error": spectral.gram_error,
    }, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(CACHE_MAGIC)
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    buf.write(np.ascontiguousarray(spectral.eigenvalues).tobytes())
    buf.write(np.ascontiguousarray(spectral.eigenfields).tobytes())
    import os

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_spectral(path: str, model_hash: str) -> SpectralData | None:
    """Load a cached decomposition; None on any mismatch (then recompute)."""
    import os

    if not os.path.exists(path):
        return None
    try:
        with open(path, "rb") as fh:
            if fh.read(len(CACHE_MAGIC)) != CACHE_MAGIC:
                return None
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen))
            if header.get("version") != 1 or header.get("model_hash") != model_hash:
                return None
            k, n = header["k"], header["n"]
            lam = np.frombuffer(fh.read(8 * k), dtype=float).copy()
            phi = np.frombuffer(fh.read(8 * n * k), dtype=float).reshape(n, k).copy()
        return SpectralData(header["model_id"], lam, phi,
                            header["residual"], header["gram_error"])
    except (OSError, ValueError, KeyError, json.JSONDecodeError):
        return None
