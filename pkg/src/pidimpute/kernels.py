"""Numerically stable scalar and matrix kernels for mixture EM.

Everything here is a pure function of its arguments: normal and
skew-normal densities (log-space internally), first and second moments of
a normal truncated to (0, +inf), and the observed/missing block algebra
used by conditional expectations. The skew-normal family used throughout
is the restricted one,

    f(x) = 2 phi_p(x; xi, Omega) Phi(d' Omega^{-1} (x - xi); 0, 1 - d' Omega^{-1} d)

with Omega = Sigma + d d' built from a positive-definite scale matrix
Sigma and a skewness vector d. Equivalently X = xi + d|U| + V with
U ~ N(0, 1) and V ~ N_p(0, Sigma) independent.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import log_ndtr, ndtr

from .errors import FactorizationError, ParameterDomainError

LOG_2PI = float(np.log(2.0 * np.pi))

# Below this standardized argument the pdf/cdf ratio is evaluated in log
# space; the direct ratio would divide two underflowing quantities.
_MILLS_LOG_BRANCH = -6.0


@dataclass(frozen=True)
class TruncMoments:
    """First and second moments of a normal truncated to (0, +inf)."""

    e1: float
    e2: float


@dataclass(frozen=True)
class BlockPartition:
    """Observed/missing index split of the coordinates {0, ..., p-1}."""

    observed_idx: np.ndarray
    missing_idx: np.ndarray

    @classmethod
    def from_mask(cls, mask_row: np.ndarray) -> "BlockPartition":
        """Build a partition from a boolean row mask (True = observed)."""
        mask_row = np.asarray(mask_row, dtype=bool)
        idx = np.arange(mask_row.size)
        return cls(observed_idx=idx[mask_row], missing_idx=idx[~mask_row])

    @property
    def n_missing(self) -> int:
        return self.missing_idx.size

    def key(self) -> tuple:
        """Hashable identity of the pattern (used to group rows)."""
        return tuple(self.observed_idx.tolist())


@dataclass(frozen=True)
class GaussianBlocks:
    """Partitioned mean/covariance plus the precomputed regression operator.

    `regression` is Sigma_mo Sigma_oo^{-1}, the operator mapping observed
    residuals to conditional means of the missing block. `schur` is the
    conditional covariance Sigma_mm - Sigma_mo Sigma_oo^{-1} Sigma_om.
    """

    mu_o: np.ndarray
    mu_m: np.ndarray
    sigma_oo: np.ndarray
    sigma_mm: np.ndarray
    sigma_om: np.ndarray
    sigma_mo: np.ndarray
    regression: np.ndarray
    schur: np.ndarray


def spd_cholesky(a: np.ndarray, component=None, pattern=None) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Failure is surfaced as :class:`FactorizationError` carrying the
    component index / observed pattern so callers can apply an explicit
    regularization policy; no silent pseudo-inverse.
    """
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            f"matrix is not positive definite: {exc}",
            component=component,
            pattern=pattern,
        ) from exc


def normal_pdf_cdf_ratio(t):
    """Inverse Mills ratio phi(t) / Phi(t).

    For t < -6 the direct ratio is 0/0 in double precision; that branch is
    evaluated as exp(log phi - log Phi) with the asymptotic-safe
    ``log_ndtr``. Total function on finite reals; accepts scalars or
    arrays.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    low = t < _MILLS_LOG_BRANCH
    th = t[~low]
    out[~low] = np.exp(-0.5 * th * th - 0.5 * LOG_2PI) / ndtr(th)
    tl = t[low]
    out[low] = np.exp(-0.5 * tl * tl - 0.5 * LOG_2PI - log_ndtr(tl))
    return out if out.ndim else float(out)


def truncated_normal_moments(mu, sigma) -> TruncMoments:
    """Moments e1 = E[T], e2 = E[T^2] of T ~ N(mu, sigma^2) truncated to (0, inf).

    Closed forms with r = phi(mu/sigma)/Phi(mu/sigma):

        e1 = mu + sigma r,   e2 = mu^2 + sigma^2 + mu sigma r.

    Raises :class:`ParameterDomainError` for non-positive sigma. Scalar or
    array arguments broadcast.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0.0):
        raise ParameterDomainError("truncated-normal sigma must be > 0")
    r = normal_pdf_cdf_ratio(mu / sigma)
    e1 = mu + sigma * r
    e2 = mu * mu + sigma * sigma + mu * sigma * r
    if e1.ndim == 0:
        return TruncMoments(e1=float(e1), e2=float(e2))
    return TruncMoments(e1=e1, e2=e2)


def mn_logpdf(x, mu, sigma, component=None):
    """Log density of N_p(mu, sigma) at x (one vector or an (n, p) batch)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    p = mu.size
    chol = spd_cholesky(sigma, component=component)
    z = solve_triangular(chol, (x - mu).T, lower=True).T
    maha = np.einsum("ij,ij->i", z, z)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    out = -0.5 * (p * LOG_2PI + logdet + maha)
    return out if out.size > 1 else float(out[0])


def mn_pdf(x, mu, sigma, component=None):
    """Multivariate normal density (linear scale; computed in log space)."""
    return np.exp(mn_logpdf(x, mu, sigma, component=component))


def _skew_projection(sigma, delta, component=None, pattern=None):
    """Return (omega, w, s2) with w = Omega^{-1} delta and s2 = 1 - delta' w.

    Uses the Cholesky factor of Omega = Sigma + delta delta'. Raises
    :class:`ParameterDomainError` when the skew-feasibility condition
    s2 > 0 fails.
    """
    delta = np.asarray(delta, dtype=float)
    omega = np.asarray(sigma, dtype=float) + np.outer(delta, delta)
    chol = spd_cholesky(omega, component=component, pattern=pattern)
    w = cho_solve((chol, True), delta)
    s2 = 1.0 - float(delta @ w)
    if s2 <= 0.0:
        raise ParameterDomainError(
            "skew-feasibility violated: 1 - delta' Omega^{-1} delta <= 0"
        )
    return omega, chol, w, s2


def msn_logpdf(x, xi, sigma, delta, component=None):
    """Log density of the restricted multivariate skew-normal.

    Parameters are the location xi, positive-definite scale Sigma and
    skewness vector delta; Omega = Sigma + delta delta' is formed
    internally. With delta = 0 this reduces exactly to ``mn_logpdf``
    (log 2 cancels against Phi(0) = 1/2).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.asarray(xi, dtype=float)
    omega, chol, w, s2 = _skew_projection(sigma, delta, component=component)
    dev = x - xi
    z = solve_triangular(chol, dev.T, lower=True).T
    maha = np.einsum("ij,ij->i", z, z)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    log_norm = -0.5 * (xi.size * LOG_2PI + logdet + maha)
    arg = dev @ w / np.sqrt(s2)
    out = np.log(2.0) + log_norm + log_ndtr(arg)
    return out if out.size > 1 else float(out[0])


def msn_pdf(x, xi, sigma, delta, component=None):
    """Restricted multivariate skew-normal density (linear scale)."""
    return np.exp(msn_logpdf(x, xi, sigma, delta, component=component))


def partition_gaussian(mu, sigma, part: BlockPartition, component=None) -> GaussianBlocks:
    """Split (mu, Sigma) by an observed/missing partition.

    Also precomputes the regression operator Sigma_mo Sigma_oo^{-1} and
    the Schur complement used by every conditional-expectation formula.
    A singular observed block raises :class:`FactorizationError` naming
    the pattern.
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    o = part.observed_idx
    m = part.missing_idx
    sigma_oo = sigma[np.ix_(o, o)]
    sigma_mm = sigma[np.ix_(m, m)]
    sigma_om = sigma[np.ix_(o, m)]
    sigma_mo = sigma[np.ix_(m, o)]
    chol_oo = spd_cholesky(sigma_oo, component=component, pattern=part.key())
    # regression' = Sigma_oo^{-1} Sigma_om, solved via the Cholesky factor
    regression = cho_solve((chol_oo, True), sigma_om).T
    schur = sigma_mm - regression @ sigma_om
    schur = 0.5 * (schur + schur.T)
    return GaussianBlocks(
        mu_o=mu[o],
        mu_m=mu[m],
        sigma_oo=sigma_oo,
        sigma_mm=sigma_mm,
        sigma_om=sigma_om,
        sigma_mo=sigma_mo,
        regression=regression,
        schur=schur,
    )


def sample_msn(xi, sigma, delta, size, rng) -> np.ndarray:
    """Draw from the restricted skew-normal via X = xi + delta |U| + V.

    U ~ N(0,1), V ~ N_p(0, Sigma) independent. Intended for test oracles;
    mean is xi + sqrt(2/pi) delta and covariance Sigma + (1 - 2/pi) dd'.
    """
    xi = np.asarray(xi, dtype=float)
    delta = np.asarray(delta, dtype=float)
    chol = spd_cholesky(np.asarray(sigma, dtype=float))
    u = np.abs(rng.standard_normal(size))
    v = rng.standard_normal((size, xi.size)) @ chol.T
    return xi + np.outer(u, delta) + v
