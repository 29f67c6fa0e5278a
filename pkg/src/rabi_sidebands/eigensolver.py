"""Dense real-symmetric eigensolver: Householder tridiagonalization + implicit-shift QL.

The two kernels are compiled with numba; everything else is plain numpy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.linalg

from .operators import BasisLabel, OperatorMatrix


class NotSymmetricError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


class AmbiguousLabelError(ValueError):
    pass


@numba.njit(cache=True)
def _tridiagonalize(a, want_q):
    """Reduce symmetric ``a`` (overwritten) to tridiagonal T = Q^T A Q.

    Returns (diagonal, off-diagonal with e[i] = T[i, i+1] and e[n-1] = 0, Q^T).
    Q is kept transposed so that every update runs along contiguous rows.
    """
    n = a.shape[0]
    qt = np.eye(n) if want_q else np.empty((0, 0))
    v = np.empty(n)
    w = np.empty(n)
    p = np.empty(n)
    for k in range(n - 2):
        m = n - k - 1
        alpha = 0.0
        for i in range(m):
            alpha += a[k + 1 + i, k] ** 2
        alpha = np.sqrt(alpha)
        if alpha == 0.0:
            continue
        if a[k + 1, k] > 0:
            alpha = -alpha
        # v = x - alpha e_1, normalised
        vnorm2 = 0.0
        for i in range(m):
            v[i] = a[k + 1 + i, k]
        v[0] -= alpha
        for i in range(m):
            vnorm2 += v[i] * v[i]
        if vnorm2 == 0.0:
            continue
        vn = np.sqrt(vnorm2)
        for i in range(m):
            v[i] /= vn
        # p = A22 v ;  w = p - (v.p) v ;  A22 -= 2 (v w^T + w v^T)
        for i in range(m):
            s = 0.0
            for j in range(m):
                s += a[k + 1 + i, k + 1 + j] * v[j]
            p[i] = s
        vp = 0.0
        for i in range(m):
            vp += v[i] * p[i]
        for i in range(m):
            p[i] -= vp * v[i]
        for i in range(m):
            for j in range(m):
                a[k + 1 + i, k + 1 + j] -= 2.0 * (v[i] * p[j] + p[i] * v[j])
        a[k + 1, k] = alpha
        a[k, k + 1] = alpha
        for i in range(1, m):
            a[k + 1 + i, k] = 0.0
            a[k, k + 1 + i] = 0.0
        if want_q:
            # rows k+1.. of Q^T <- (I - 2 v v^T) rows k+1.. of Q^T
            for r in range(n):
                w[r] = 0.0
            for j in range(m):
                for r in range(n):
                    w[r] += v[j] * qt[k + 1 + j, r]
            for j in range(m):
                for r in range(n):
                    qt[k + 1 + j, r] -= 2.0 * v[j] * w[r]
    d = np.empty(n)
    e = np.zeros(n)
    for i in range(n):
        d[i] = a[i, i]
    for i in range(n - 1):
        e[i] = a[i, i + 1]
    return d, e, qt


@numba.njit(cache=True)
def _tql_implicit(d, e, zt, want_z, max_iter):
    """QL with implicit Wilkinson-type shifts on a symmetric tridiagonal matrix.

    ``d`` and ``e`` are overwritten (eigenvalues end up in ``d``); plane
    rotations are accumulated into the rows of ``zt`` (eigenvectors as rows)
    when ``want_z``.
    Returns -1 on success, otherwise the index whose eigenvalue failed to converge.
    """
    n = d.shape[0]
    nz = zt.shape[1]
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= 2.220446049250313e-16 * dd:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                return l
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_z:
                    for k in range(nz):
                        f = zt[i + 1, k]
                        zt[i + 1, k] = s * zt[i, k] + c * f
                        zt[i, k] = c * zt[i, k] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


def _as_matrix(h) -> tuple[np.ndarray, tuple[BasisLabel, ...] | None]:
    if isinstance(h, OperatorMatrix):
        return np.array(h.entries, dtype=float), h.basis
    m = np.array(h, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"square matrix required, got shape {m.shape}")
    return m, None


def _check_symmetric(m: np.ndarray, rtol: float) -> None:
    norm = np.linalg.norm(m)
    asym = np.linalg.norm(m - m.T)
    if asym > rtol * max(norm, np.finfo(float).tiny):
        raise NotSymmetricError(f"matrix is not symmetric: ||H - H^T||_F / ||H||_F = {asym / norm:.3e}")


def _solve(m: np.ndarray, want_vectors: bool, max_iter: int):
    n = m.shape[0]
    if n == 0:
        return np.empty(0), np.empty((0, 0))
    if n == 1:
        return m.diagonal().copy(), np.ones((1, 1))
    d, e, zt = _tridiagonalize(np.ascontiguousarray(m, dtype=float).copy(), want_vectors)
    status = _tql_implicit(d, e, zt, want_vectors, max_iter)
    if status >= 0:
        cond = np.linalg.cond(m) if n <= 2048 else float("nan")
        raise ConvergenceError(
            f"QL iteration did not converge for eigenvalue {status} after {max_iter} sweeps "
            f"(dim={n}, ||H||_F={np.linalg.norm(m):.3e}, cond={cond:.3e})")
    return d, (zt.T if want_vectors else zt)


def eigenvalues(h, *, symmetry_rtol: float = 1e-10, max_iter: int = 60) -> np.ndarray:
    """Ascending eigenvalues only (no eigenvector accumulation)."""
    m, _ = _as_matrix(h)
    _check_symmetric(m, symmetry_rtol)
    d, _ = _solve(m, False, max_iter)
    return np.sort(d)


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray
    basis: tuple[BasisLabel, ...] | None = None

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def state(self, k: int) -> np.ndarray:
        return self.vectors[:, k]


def _canonicalize_cluster(vecs: np.ndarray) -> np.ndarray:
    """Replace an orthonormal basis of a degenerate subspace by the one closest to bare states."""
    k = vecs.shape[1]
    _, _, piv = scipy.linalg.qr(vecs.T, pivoting=True)
    rows = np.sort(piv[:k])
    # projections of the chosen basis vectors, symmetrically orthonormalised
    proj = vecs @ vecs[rows, :].T
    u, _, vt = np.linalg.svd(proj, full_matrices=False)
    return u @ vt


def diagonalize(h, *, symmetry_rtol: float = 1e-10, max_iter: int = 60,
                degeneracy_tol: float = 1e-10) -> EigenDecomposition:
    """Complete eigendecomposition of a real symmetric matrix.

    Eigenvalues ascend.  Each eigenvector has its largest-magnitude component
    positive.  Within an exactly degenerate cluster (spacing below
    ``degeneracy_tol * max(1, |lambda|_max)``) the eigenvectors are rotated to
    be as close as possible to bare basis states and ordered by basis index.
    """
    m, basis = _as_matrix(h)
    _check_symmetric(m, symmetry_rtol)
    d, z = _solve(m, True, max_iter)
    order = np.argsort(d, kind="stable")
    values, vectors = d[order], z[:, order]

    tol = degeneracy_tol * max(1.0, float(np.abs(values).max(initial=0.0)))
    start = 0
    n = values.shape[0]
    while start < n:
        stop = start + 1
        while stop < n and values[stop] - values[stop - 1] <= tol:
            stop += 1
        if stop - start > 1:
            block = _canonicalize_cluster(vectors[:, start:stop])
            lead = np.argmax(np.abs(block), axis=0)
            vectors[:, start:stop] = block[:, np.argsort(lead, kind="stable")]
        start = stop

    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(n)])
    signs[signs == 0] = 1.0
    vectors = vectors * signs
    values.setflags(write=False)
    vectors.setflags(write=False)
    return EigenDecomposition(values, vectors, basis)


@dataclass(frozen=True)
class DressedLabel:
    label: BasisLabel | int
    overlap: float
    runner_up: BasisLabel | int | None
    runner_up_overlap: float
    ambiguous: bool


def dressed_label(dec: EigenDecomposition, k: int, ambiguity_gap: float = 0.1) -> DressedLabel:
    """Dominant bare component of eigenstate ``k`` and its probability."""
    if not 0 <= k < dec.dim:
        raise IndexError(f"eigenstate index {k} out of range for dim {dec.dim}")
    probs = dec.vectors[:, k] ** 2
    top = np.argsort(-probs, kind="stable")[:2]
    names = dec.basis if dec.basis is not None else range(dec.dim)
    first = names[top[0]]
    second = names[top[1]] if len(top) > 1 else None
    p1 = float(probs[top[0]])
    p2 = float(probs[top[1]]) if len(top) > 1 else 0.0
    return DressedLabel(first, p1, second, p2, (p1 - p2) < ambiguity_gap)


def find_dressed_state(dec: EigenDecomposition, label: BasisLabel, ambiguity_gap: float = 0.1) -> int:
    """Index of the eigenstate whose dominant bare component is ``label``."""
    if dec.basis is None:
        raise ValueError("decomposition carries no basis labels")
    row = dec.basis.index(label)
    k = int(np.argmax(dec.vectors[row, :] ** 2))
    info = dressed_label(dec, k, ambiguity_gap)
    if info.label != label or info.ambiguous:
        raise AmbiguousLabelError(
            f"{label} has no unambiguous dressed partner: best eigenstate {k} is "
            f"{info.label} ({info.overlap:.3f}) vs {info.runner_up} ({info.runner_up_overlap:.3f})")
    return k
