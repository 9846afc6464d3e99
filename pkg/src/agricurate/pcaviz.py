"""Top-3 PCA of patch features rendered to RGB with background removal.

Only three components are needed, so the eigenpairs come from repeated power
iteration with deflation; this keeps the numeric core dependency-free and
directly checkable against a full eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError
from .probe import FeatureTensor

_POWER_SEED = 1815      # fixed start vectors keep fits deterministic
_TINY = 1e-300


@dataclass
class PrincipalComponents:
    mean: np.ndarray          # (dim,)
    components: np.ndarray    # (3, dim), unit rows, pairwise orthogonal
    shares: np.ndarray        # (3,), descending explained-variance shares


def _power_eigenpairs(cov: np.ndarray, n_components: int = 3,
                      tol: float = 1e-9, max_iter: int = 10_000
                      ) -> tuple[np.ndarray, np.ndarray]:
    dim = cov.shape[0]
    rng = np.random.default_rng(_POWER_SEED)
    comps: list[np.ndarray] = []
    lams: list[float] = []
    deflated = cov.astype(np.float64).copy()
    for _ in range(n_components):
        v = rng.standard_normal(dim)
        for u in comps:
            v -= (u @ v) * u
        norm = np.linalg.norm(v)
        if norm < _TINY:
            v = np.zeros(dim)
            v[len(comps) % dim] = 1.0
        else:
            v /= norm
        lam = 0.0
        converged = False
        residual = np.inf
        for _ in range(max_iter):
            w = deflated @ v
            for u in comps:
                w -= (u @ w) * u
            lam = float(v @ w)
            residual = float(np.linalg.norm(w - lam * v))
            if residual <= tol * max(1.0, abs(lam)):
                converged = True
                break
            norm = float(np.linalg.norm(w))
            if norm < _TINY:
                # variance exhausted: any unit vector orthogonal to the
                # found components is an eigenvector with eigenvalue 0
                lam = 0.0
                converged = True
                break
            v = w / norm
        if not converged:
            raise NumericalError(f"power iteration residual {residual:.3e} "
                                 f"after {max_iter} iterations")
        deflated -= lam * np.outer(v, v)
        comps.append(v)
        lams.append(max(lam, 0.0))
    return np.array(lams), np.stack(comps)


def _fix_signs(components: np.ndarray) -> np.ndarray:
    out = components.copy()
    for i, vec in enumerate(out):
        if vec[np.argmax(np.abs(vec))] < 0:
            out[i] = -vec
    return out


def fit_pca_points(points: np.ndarray, tol: float = 1e-9,
                   max_iter: int = 10_000) -> PrincipalComponents:
    """Top-3 principal components of a set of row vectors."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 4:
        raise DomainError("PCA needs at least 4 foreground patches")
    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered / points.shape[0]
    total = float(np.trace(cov))

    lams, comps = _power_eigenpairs(cov, 3, tol, max_iter)

    # final clean-up: re-orthonormalize, recompute Rayleigh quotients on the
    # original covariance, order by eigenvalue
    for i in range(3):
        v = comps[i]
        for j in range(i):
            v = v - (comps[j] @ v) * comps[j]
        norm = np.linalg.norm(v)
        if norm < _TINY:
            v = np.zeros(cov.shape[0])
            v[i % cov.shape[0]] = 1.0
            for j in range(i):
                v = v - (comps[j] @ v) * comps[j]
            v /= np.linalg.norm(v)
        else:
            v = v / norm
        comps[i] = v
        lams[i] = max(float(v @ cov @ v), 0.0)
    order = np.argsort(-lams, kind="stable")
    lams, comps = lams[order], comps[order]
    comps = _fix_signs(comps)
    shares = lams / total if total > 0 else np.zeros(3)
    return PrincipalComponents(mean=mean, components=comps,
                               shares=np.clip(shares, 0.0, 1.0))


def fit_pca3(features: FeatureTensor, foreground: np.ndarray,
             tol: float = 1e-9, max_iter: int = 10_000) -> PrincipalComponents:
    """Fit PCA on the foreground patches of a feature tensor."""
    fg = np.asarray(foreground, dtype=bool)
    if fg.shape != (features.grid_h, features.grid_w):
        raise DomainError("foreground mask must match the patch grid")
    return fit_pca_points(features.values[fg], tol=tol, max_iter=max_iter)


def render_rgb(features: FeatureTensor, pc: PrincipalComponents,
               foreground: np.ndarray) -> np.ndarray:
    """Map the three component projections to RGB over the patch grid.

    Each channel is min-max scaled to [0, 255] over foreground patches (a
    constant channel renders 128); background patches are black.
    """
    fg = np.asarray(foreground, dtype=bool)
    if fg.shape != (features.grid_h, features.grid_w):
        raise DomainError("foreground mask must match the patch grid")
    if pc.components.shape[1] != features.dim:
        raise DomainError("components dimension does not match features")
    flat = features.values.reshape(-1, features.dim).astype(np.float64)
    mask = fg.reshape(-1)
    out = np.zeros((flat.shape[0], 3), dtype=np.uint8)
    if mask.any():
        proj = (flat[mask] - pc.mean) @ pc.components.T
        for ch in range(3):
            p = proj[:, ch]
            lo, hi = float(p.min()), float(p.max())
            if hi == lo:
                scaled = np.full(p.shape, 128, dtype=np.uint8)
            else:
                scaled = np.clip(np.round((p - lo) / (hi - lo) * 255.0),
                                 0, 255).astype(np.uint8)
            out[mask, ch] = scaled
    return out.reshape(features.grid_h, features.grid_w, 3)


def mask_to_grid(mask: np.ndarray, grid_h: int, grid_w: int) -> np.ndarray:
    """Downsample a vegetation mask to the patch grid.

    A patch is foreground iff strictly more than half of its mask cell is
    vegetation (nonzero).
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DomainError("vegetation mask must be single-channel")
    h, w = mask.shape
    veg = mask > 0
    ys = [(i * h) // grid_h for i in range(grid_h + 1)]
    xs = [(j * w) // grid_w for j in range(grid_w + 1)]
    out = np.zeros((grid_h, grid_w), dtype=bool)
    for i in range(grid_h):
        for j in range(grid_w):
            cell = veg[ys[i]:ys[i + 1], xs[j]:xs[j + 1]]
            out[i, j] = cell.size > 0 and cell.mean() > 0.5
    return out


def upscale_nearest(rgb: np.ndarray, scale: int) -> np.ndarray:
    """Nearest-neighbor upscale: each patch becomes a uniform scale x scale block."""
    if scale < 1:
        raise DomainError("scale must be >= 1")
    return np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
