"""Gaussian-mixture patch prior and its closed-form posterior inversion.

For a patch measurement ``y = Phi x + e`` with ``e ~ N(0, Q)`` and
``x ~ sum_k w_k N(mu_k, S_k)``, the posterior is again a mixture whose
weights use the marginal ``N(y | Phi mu_k, Q + Phi S_k Phi^T)``. Posterior
moments are evaluated in covariance form (Woodbury), which avoids
inverting nearly singular prior covariances.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .core import _meas_array
from .errors import ArgumentError, DecompositionError, UnsupportedCombinationError
from .io import decode_gmm, encode_gmm, atomic_write_bytes
from .patches import PatchConfig, aggregate_patches, all_windows, patch_origins

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    cov_floor: float = 0.0
    loglik_history: list = field(default_factory=list)

    @property
    def n_components(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.means.shape[1]

    def to_bytes(self):
        return encode_gmm(self.weights, self.means, self.covs)

    @classmethod
    def from_bytes(cls, buf):
        return cls(*decode_gmm(buf))

    def save(self, path):
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def floor_covariance(cov, floor):
    """Closest symmetric matrix (in eigenvalues) with min eigenvalue >= floor."""
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def _cholesky(mat, what):
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"{what} is not positive definite") from exc


def _component_logpdf(X, mean, cov, k):
    L = _cholesky(cov, f"covariance of component {k}")
    z = solve_triangular(L, (X - mean).T, lower=True)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return -0.5 * (X.shape[1] * LOG_2PI + logdet + (z * z).sum(axis=0))


def _log_resp(X, weights, means, covs):
    logp = np.stack(
        [np.log(w) + _component_logpdf(X, m, c, k) for k, (w, m, c) in enumerate(zip(weights, means, covs))],
        axis=1,
    )
    norm = logsumexp(logp, axis=1)
    return logp - norm[:, None], norm


def _kmeanspp(X, K, rng):
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        idx = rng.integers(n) if total == 0 else rng.choice(n, p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def gmm_train(patches, K=20, em_iters=50, seed=0, cov_floor=1e-6):
    """Fit a K-component GMM by EM with an eigenvalue floor on covariances.

    The floored M-step is the constrained maximizer of the expected
    complete log-likelihood, so the data log-likelihood stays monotone
    except on iterations where an empty component is re-seeded.
    """
    X = np.asarray(patches, dtype=np.float64)
    if X.ndim != 2:
        raise ArgumentError("patches must be a 2D array (count, dim)")
    n, d = X.shape
    if K < 1 or n < 10 * K:
        raise ArgumentError(f"need at least 10*K = {10 * K} patches, got {n}")
    rng = np.random.default_rng(seed)
    global_cov = floor_covariance(np.cov(X, rowvar=False, bias=True).reshape(d, d), cov_floor)
    means = _kmeanspp(X, K, rng)
    covs = np.repeat(global_cov[None], K, axis=0)
    weights = np.full(K, 1.0 / K)
    history = []
    for _ in range(em_iters):
        log_r, norm = _log_resp(X, weights, means, covs)
        history.append(float(norm.sum()))
        r = np.exp(log_r)
        nk = r.sum(axis=0)
        for k in range(K):
            if nk[k] <= 1e-10 * n:
                far = int(np.argmin(norm))
                log.warning("GMM component %d is empty; re-seeding at patch %d", k, far)
                means[k] = X[far]
                covs[k] = global_cov
                nk[k] = 1.0
                r[:, k] = 0.0
                r[far, k] = 1.0
                continue
            means[k] = r[:, k] @ X / nk[k]
            diff = X - means[k]
            covs[k] = floor_covariance((diff * r[:, k, None]).T @ diff / nk[k], cov_floor)
        weights = nk / nk.sum()
    _, norm = _log_resp(X, weights, means, covs)
    history.append(float(norm.sum()))
    return GmmModel(weights, means, covs, cov_floor, history)


@dataclass
class PatchPosterior:
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    mean: np.ndarray


def noise_cov(m, sigma):
    return (float(sigma) ** 2) * np.eye(m)


def gmm_posterior_patch(y, phi, model, Q):
    """Posterior mixture of one patch given its local sensing block ``phi``."""
    y = np.asarray(y, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    _cholesky(Q, "noise covariance Q")
    K = model.n_components
    logw = np.empty(K)
    means = np.empty((K, phi.shape[1]))
    covs = np.empty((K, phi.shape[1], phi.shape[1]))
    for k in range(K):
        S, mu = model.covs[k], model.means[k]
        _cholesky(S, f"covariance of component {k}")
        SPt = S @ phi.T
        marg = Q + phi @ SPt
        L = _cholesky(marg, f"marginal covariance of component {k}")
        resid = y - phi @ mu
        z = solve_triangular(L, resid, lower=True)
        logw[k] = np.log(model.weights[k]) - 0.5 * (
            len(y) * LOG_2PI + 2.0 * np.log(np.diag(L)).sum() + z @ z
        )
        G = solve_triangular(L, SPt.T, lower=True)  # L^-1 Phi S
        means[k] = mu + G.T @ z
        covs[k] = S - G.T @ G
        covs[k] = 0.5 * (covs[k] + covs[k].T)
    w = np.exp(logw - logsumexp(logw))
    return PatchPosterior(w, means, covs, w @ means)


def local_sensing_block(mask_patch):
    """Dense ``Phi_i`` of a ``P x P x D`` mask patch: ``[diag(m_1), ..., diag(m_D)]``."""
    m = np.asarray(mask_patch, dtype=np.float64)
    P1, P2, D = m.shape
    n = P1 * P2
    phi = np.zeros((n, n * D))
    for k in range(D):
        phi[np.arange(n), k * n + np.arange(n)] = m[:, :, k].ravel(order="F")
    return phi


def _block_vecs(win):
    # (n, P, P, D) -> (n, D, P*P) with column-major pixel order within a frame
    n, P1, P2, D = win.shape
    return win.transpose(0, 3, 2, 1).reshape(n, D, P1 * P2)


def gmm_reconstruct(measurement, op, model, Q=None, patch_config=PatchConfig(), sigma=1e-3):
    """Invert every full-depth patch with its posterior mean, then overlap-average.

    ``Q`` defaults to ``sigma**2 * I``. Only CACTI mode is supported, where
    the measurement decouples into independent spatial patches.
    """
    if op.mode != "cacti":
        raise UnsupportedCombinationError("GMM reconstruction supports cacti mode only")
    y = _meas_array(measurement, op)
    nx, ny, nt = op.cube_shape
    P = patch_config.patch_size
    if patch_config.depth(nt) != nt:
        raise ArgumentError("GMM reconstruction needs full-depth patches")
    m = P * P
    if model.dim != m * nt:
        raise ArgumentError(f"model dim {model.dim} does not match patch dim {m * nt}")
    Q = noise_cov(m, sigma) if Q is None else np.asarray(Q, dtype=np.float64)
    _cholesky(Q, "noise covariance Q")
    origins = patch_origins(op.cube_shape, patch_config)
    masks = _block_vecs(all_windows(op.masks.values, P, nt)[origins[:, 0], origins[:, 1], 0])
    ys = all_windows(y[:, :, None], P, 1)[origins[:, 0], origins[:, 1], 0][..., 0]
    ys = ys.transpose(0, 2, 1).reshape(len(origins), m)
    n_p = len(origins)
    K = model.n_components
    logw = np.empty((n_p, K))
    post = np.empty((K, n_p, m * nt))
    for k in range(K):
        S = model.covs[k]
        _cholesky(S, f"covariance of component {k}")
        S4 = S.reshape(nt, m, nt, m)
        # Phi S: rows a, mixing frames with the local mask values
        PS = np.einsum("nka,kalb->nalb", masks, S4).reshape(n_p, m, nt * m)
        marg = np.einsum("nalb,nlb->nab", PS.reshape(n_p, m, nt, m), masks) + Q
        try:
            L = np.linalg.cholesky(marg)
        except np.linalg.LinAlgError as exc:
            raise DecompositionError(f"marginal covariance of component {k} is not positive definite") from exc
        mu = model.means[k]
        resid = ys - np.einsum("nka,ka->na", masks, mu.reshape(nt, m))
        z = np.linalg.solve(L, resid[..., None])[..., 0]
        logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        logw[:, k] = np.log(model.weights[k]) - 0.5 * (m * LOG_2PI + logdet + (z * z).sum(axis=1))
        # mu + (Phi S)^T marg^-1 resid
        alpha = np.linalg.solve(np.swapaxes(L, 1, 2), z[..., None])[..., 0]
        post[k] = mu + np.einsum("nad,na->nd", PS, alpha)
    w = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))
    est = np.einsum("nk,knd->nd", w, post)
    return aggregate_patches(origins, est, op.cube_shape, patch_config)
