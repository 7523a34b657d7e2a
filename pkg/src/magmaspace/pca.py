"""Principal component embedding of the feature matrix.

The top eigenpairs are found by orthogonal (subspace) iteration with
Rayleigh-Ritz on whichever Gram matrix is smaller, ``X^T X`` (magma side)
or ``X X^T`` (equation side).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .terms import conjugate

log = logging.getLogger(__name__)

N_REPORT = 10


class PCAError(RuntimeError):
    pass


@dataclass(frozen=True)
class LatentEmbedding:
    coords: np.ndarray              # (m, k) projections, columns X, Y, Z
    components: np.ndarray          # (k, n) orthonormal directions
    eigenvalues: np.ndarray         # top eigenvalues of the covariance
    singular_values: np.ndarray     # of the centered matrix
    explained_variance_ratio: np.ndarray
    center: np.ndarray              # subtracted mean
    total_variance: float
    iterations: int

    @property
    def k(self) -> int:
        return self.coords.shape[1]

    @property
    def X(self):
        return self.coords[:, 0]

    @property
    def Y(self):
        return self.coords[:, 1]

    @property
    def Z(self):
        return self.coords[:, 2]


def center_matrix(R: np.ndarray, centering: str = "columns") -> tuple[np.ndarray, np.ndarray]:
    """Subtract per-column means (default) or per-row means."""
    if centering == "columns":
        mu = R.mean(axis=0)
        return R - mu, mu
    if centering == "rows":
        mu = R.mean(axis=1)
        return R - mu[:, None], mu
    raise ValueError(f"unknown centering {centering!r}")


def top_eigenpairs(A: np.ndarray, nev: int, tol: float = 1e-10, max_iter: int = 10000,
                   seed: int = 0) -> tuple[np.ndarray, np.ndarray, int]:
    """Largest ``nev`` eigenpairs of a symmetric PSD matrix.

    Converged when every wanted Ritz pair has residual at most
    ``tol * lambda_max``.  Returns ``(values, vectors as columns, iterations)``.
    """
    d = A.shape[0]
    nev = min(nev, d)
    p = min(d, nev + 8)
    Q = rng.uniform(rng.stream_key(seed, 0x504341), d * p).reshape(d, p) - 0.5
    Q, _ = np.linalg.qr(Q)
    scale = max(float(np.abs(A).max()), np.finfo(float).tiny)
    for it in range(1, max_iter + 1):
        Z = A @ Q
        H = Q.T @ Z
        theta, S = np.linalg.eigh((H + H.T) / 2)
        order = np.argsort(theta)[::-1]
        theta, S = theta[order], S[:, order]
        V = Q @ S
        AV = Z @ S
        res = np.linalg.norm(AV[:, :nev] - V[:, :nev] * theta[:nev], axis=0)
        lam_max = max(theta[0], 0.0)
        if np.all(res <= tol * max(lam_max, scale * 1e-300)):
            return theta[:nev], V[:, :nev], it
        Q, _ = np.linalg.qr(AV)
    raise PCAError(f"subspace iteration did not converge in {max_iter} iterations "
                   f"(max residual {res.max():.3g})")


def _orient(v: np.ndarray) -> np.ndarray:
    """Deterministic raw sign: largest-magnitude entry positive."""
    i = int(np.argmax(np.abs(v)))
    return v if v[i] >= 0 else -v


def pca_embed(f, k: int = 3, centering: str = "columns", tol: float = 1e-10,
              max_iter: int = 10000) -> LatentEmbedding:
    """Project centered rows of ``f`` (a FeatureMatrix or 2-D array) on the top-k axes."""
    R = np.asarray(getattr(f, "values", f), dtype=np.float64)
    m, n = R.shape
    if k > N_REPORT or m < k + 1 or n < 2:
        raise PCAError(f"need k <= {N_REPORT}, at least k+1 rows and 2 columns")
    X, mu = center_matrix(R, centering)
    total = float(np.einsum("ij,ij->", X, X)) / m
    if total <= 0.0:
        raise PCAError("degenerate input: all rows identical")
    nev = min(N_REPORT, min(m, n))
    if n <= m:
        lam, V, its = top_eigenpairs(X.T @ X / m, nev, tol, max_iter)
    else:
        lam, U, its = top_eigenpairs(X @ X.T / m, nev, tol, max_iter)
        V = X.T @ U
        V /= np.maximum(np.linalg.norm(V, axis=0), np.finfo(float).tiny)
    lam = np.clip(lam, 0.0, None)
    comps = np.array([_orient(V[:, i]) for i in range(k)])
    coords = X @ comps.T
    return LatentEmbedding(
        coords=coords,
        components=comps,
        eigenvalues=lam,
        singular_values=np.sqrt(lam * m),
        explained_variance_ratio=lam / total,
        center=mu,
        total_variance=total,
        iterations=its,
    )


def pearson(a, b) -> float:
    a = np.asarray(a, float) - np.mean(a)
    b = np.asarray(b, float) - np.mean(b)
    den = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / den) if den > 0 else 0.0


def fix_signs(emb: LatentEmbedding, f, equations=None) -> LatentEmbedding:
    """Orient X with expectation, Y with variance, Z by the first non-self-conjugate law.

    ``equations`` defaults to ``f.equations``; the Z rule needs them.
    """
    R = np.asarray(getattr(f, "values", f), dtype=np.float64)
    mean, var = R.mean(axis=1), R.var(axis=1)
    flips = np.ones(emb.k)
    if pearson(emb.coords[:, 0], mean) < 0:
        flips[0] = -1
    if emb.k > 1 and pearson(emb.coords[:, 1], var) < 0:
        flips[1] = -1
    eqs = equations if equations is not None else getattr(f, "equations", None)
    if emb.k > 2 and eqs is not None:
        z = emb.coords[:, 2]
        scale = max(float(np.abs(z).max()), 1e-300)
        for i, e in enumerate(eqs):
            if abs(z[i]) > 1e-9 * scale and conjugate(e) != e:
                if z[i] < 0:
                    flips[2] = -1
                break
    if np.all(flips == 1):
        return emb
    return replace(emb, coords=emb.coords * flips, components=emb.components * flips[:, None])


def regress(xs, ys) -> tuple[float, float, float]:
    """Least squares ``ys ~ slope * xs + intercept``; returns ``(slope, intercept, r2)``."""
    x = np.asarray(xs, float)
    y = np.asarray(ys, float)
    if x.size < 2 or x.size != y.size:
        raise ValueError("need at least two paired points")
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("xs has zero variance")
    dy = y - y.mean()
    slope = float(dx @ dy) / sxx
    intercept = float(y.mean() - slope * x.mean())
    syy = float(dy @ dy)
    if syy == 0.0:
        return slope, intercept, 0.0
    resid = y - (slope * x + intercept)
    r2 = 1.0 - float(resid @ resid) / syy
    return slope, intercept, min(max(r2, 0.0), 1.0)
