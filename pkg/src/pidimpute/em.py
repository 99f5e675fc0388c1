"""EM fitting of normal and restricted skew-normal mixtures on incomplete data.

Rows are grouped by their observed pattern so each (pattern, component)
pair factorizes the relevant blocks once. The E step produces, per row and
component, the responsibility tau, the conditional expectation of the row
(xhat, with the observed coordinates passed through untouched) and the
conditional covariance of the missing block (Chat). For the skew-normal
family it additionally produces the truncated-normal moments e1, e2 of the
latent skew factor and the second conditional vector xtilde that enters
the skewness update.

The M step for the skew-normal family is a conditional-maximization
sweep: location (using the previous skewness), then skewness (using the
new location), then scale (using both new values). Each sub-step maximizes
the expected complete log-likelihood in its own block, so the observed
log-likelihood is non-decreasing across iterations.
"""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .data import IncompleteDataset
from .errors import (
    DegenerateComponentError,
    DegenerateSkewError,
    NeverObservedColumnError,
    ParameterDomainError,
    SchemaMismatchError,
)
from .kernels import (
    BlockPartition,
    LOG_2PI,
    partition_gaussian,
    spd_cholesky,
    truncated_normal_moments,
)

MN = "mn"
MSN = "msn"

RIDGE_EPS = 1e-8
COMPONENT_FLOOR = 1e-6  # times N
SKEW_DENOM_FLOOR = 1e-12
SIGMA2_CLAMP = 1e-12
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

MODEL_FORMAT_VERSION = 1


@dataclass
class MixtureModel:
    """K-component mixture, either normal or restricted skew-normal.

    ``locations`` holds the means (normal) or location vectors
    (skew-normal); ``skews`` is None for the normal family.
    """

    family: str
    weights: np.ndarray
    locations: np.ndarray
    scales: np.ndarray
    skews: np.ndarray | None = None
    loglik: float = math.nan
    n_iter: int = 0
    converged: bool = False
    trace: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.locations = np.asarray(self.locations, dtype=float)
        self.scales = np.asarray(self.scales, dtype=float)
        if self.family not in (MN, MSN):
            raise ParameterDomainError(f"unknown mixture family {self.family!r}")
        if self.family == MSN:
            if self.skews is None:
                self.skews = np.zeros_like(self.locations)
            self.skews = np.asarray(self.skews, dtype=float)
        else:
            self.skews = None

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def n_cols(self) -> int:
        return self.locations.shape[1]

    def validate(self):
        """Check simplex, positive-definiteness and skew feasibility."""
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ParameterDomainError("component weights must sum to 1")
        if np.any(self.weights < 0):
            raise ParameterDomainError("component weights must be non-negative")
        for k in range(self.n_components):
            spd_cholesky(self.scales[k], component=k)
            if self.family == MSN:
                d = self.skews[k]
                omega = self.scales[k] + np.outer(d, d)
                chol = spd_cholesky(omega, component=k)
                w = np.linalg.solve(omega, d)
                if 1.0 - d @ w <= 0.0:
                    raise ParameterDomainError(
                        f"component {k}: skew-feasibility violated"
                    )


@dataclass
class EStepRecord:
    """Per-(row, component) conditional expectations from one E step.

    ``xhat`` agrees with the data exactly on observed coordinates; ``chat``
    is zero outside the missing block. ``e1``, ``e2`` and ``xtilde`` are
    None for the normal family. ``loglik`` is the observed-data
    log-likelihood of the model the E step was run on.
    """

    tau: np.ndarray
    xhat: np.ndarray
    chat: np.ndarray
    loglik: float
    row_loglik: np.ndarray
    e1: np.ndarray | None = None
    e2: np.ndarray | None = None
    xtilde: np.ndarray | None = None


def _pattern_groups(mask: np.ndarray):
    """Group row indices by observed pattern; all-missing rows are rejected."""
    if mask.shape[0] and not mask.any(axis=1).all():
        bad = int(np.flatnonzero(~mask.any(axis=1))[0])
        raise ParameterDomainError(
            f"row {bad} has no observed cells; exclude all-missing rows before "
            "the E step"
        )
    patterns, inverse = np.unique(mask, axis=0, return_inverse=True)
    groups = []
    for g in range(patterns.shape[0]):
        rows = np.flatnonzero(inverse == g)
        groups.append((BlockPartition.from_mask(patterns[g]), rows))
    return groups


def _check_identifiable(data: IncompleteDataset):
    counts = data.observed_column_counts()
    if np.any(counts == 0):
        col = int(np.flatnonzero(counts == 0)[0])
        raise NeverObservedColumnError(
            f"column {col} is never observed; its parameters are unidentifiable",
            column=col,
        )


def _mn_obs_logpdf(x_o, mu_o, sigma_oo, component, pattern):
    """Batched N(mu_o, Sigma_oo) log density over the rows of x_o."""
    from scipy.linalg import solve_triangular

    chol = spd_cholesky(sigma_oo, component=component, pattern=pattern)
    z = solve_triangular(chol, (x_o - mu_o).T, lower=True).T
    maha = np.einsum("ij,ij->i", z, z)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (mu_o.size * LOG_2PI + logdet + maha)


def e_step_mn(data: IncompleteDataset, model: MixtureModel) -> EStepRecord:
    """E step for the normal family.

    Per (row, component): conditional mean of the missing block
    mu_m + Sigma_mo Sigma_oo^{-1} (x_o - mu_o) and conditional covariance
    Sigma_mm - Sigma_mo Sigma_oo^{-1} Sigma_om; responsibilities from the
    observed-marginal densities.
    """
    n, p = data.values.shape
    k_n = model.n_components
    log_tau = np.empty((n, k_n))
    xhat = np.empty((n, k_n, p))
    chat = np.zeros((n, k_n, p, p))
    log_pi = np.log(model.weights)

    for part, rows in _pattern_groups(data.mask):
        o, m = part.observed_idx, part.missing_idx
        x_o = data.values[np.ix_(rows, o)]
        for k in range(k_n):
            blocks = partition_gaussian(
                model.locations[k], model.scales[k], part, component=k
            )
            log_tau[rows, k] = log_pi[k] + _mn_obs_logpdf(
                x_o, blocks.mu_o, blocks.sigma_oo, k, part.key()
            )
            xh = np.empty((rows.size, p))
            xh[:, o] = x_o
            if m.size:
                xh[:, m] = blocks.mu_m + (x_o - blocks.mu_o) @ blocks.regression.T
                chat[np.ix_(rows, [k], m, m)] = blocks.schur[None, None]
            xhat[rows, k] = xh

    row_loglik = logsumexp(log_tau, axis=1)
    tau = np.exp(log_tau - row_loglik[:, None])
    return EStepRecord(
        tau=tau,
        xhat=xhat,
        chat=chat,
        loglik=float(row_loglik.sum()),
        row_loglik=row_loglik,
    )


def e_step_msn(data: IncompleteDataset, model: MixtureModel) -> EStepRecord:
    """E step for the restricted skew-normal family.

    The latent skew factor given the observed sub-vector is a univariate
    normal truncated to (0, inf) with center d_o' Omega_oo^{-1} (x_o - xi_o)
    and variance 1 - d_o' Omega_oo^{-1} d_o; its first two moments feed the
    conditional expectations xhat and xtilde and the missing-block
    covariance correction.
    """
    from scipy.linalg import cho_solve

    n, p = data.values.shape
    k_n = model.n_components
    log_tau = np.empty((n, k_n))
    xhat = np.empty((n, k_n, p))
    xtilde = np.empty((n, k_n, p))
    chat = np.zeros((n, k_n, p, p))
    e1 = np.empty((n, k_n))
    e2 = np.empty((n, k_n))
    log_pi = np.log(model.weights)

    for part, rows in _pattern_groups(data.mask):
        o, m = part.observed_idx, part.missing_idx
        x_o = data.values[np.ix_(rows, o)]
        for k in range(k_n):
            xi, sigma, delta = model.locations[k], model.scales[k], model.skews[k]
            xi_o, xi_m = xi[o], xi[m]
            d_o, d_m = delta[o], delta[m]
            omega_oo = sigma[np.ix_(o, o)] + np.outer(d_o, d_o)
            chol_oo = spd_cholesky(omega_oo, component=k, pattern=part.key())
            w_o = cho_solve((chol_oo, True), d_o)
            s2 = 1.0 - float(d_o @ w_o)
            if s2 <= 0.0:
                raise ParameterDomainError(
                    f"row {int(rows[0])}, component {k}: skew-feasibility "
                    f"violated on observed pattern {part.key()} (sigma^2 = {s2:g})"
                )
            s2 = max(s2, SIGMA2_CLAMP)
            s = math.sqrt(s2)

            dev = x_o - xi_o
            center = dev @ w_o
            mom = truncated_normal_moments(center, s)
            e1[rows, k] = mom.e1
            e2[rows, k] = mom.e2

            # observed-marginal density: the restricted family is closed
            # under marginalization with parameters (xi_o, Sigma_oo, d_o)
            log_tau[rows, k] = (
                log_pi[k]
                + np.log(2.0)
                + _mn_obs_logpdf(x_o, xi_o, omega_oo, k, part.key())
                + log_ndtr(center / s)
            )

            xh = np.empty((rows.size, p))
            xt = np.empty((rows.size, p))
            xh[:, o] = x_o
            xt[:, o] = x_o
            if m.size:
                blocks = partition_gaussian(xi, sigma, part, component=k)
                reg = blocks.regression
                g1 = mom.e1[:, None]
                g2 = (mom.e2 / mom.e1)[:, None]
                xh[:, m] = xi_m + d_m * g1 + (dev - g1 * d_o) @ reg.T
                xt[:, m] = xi_m + d_m * g2 + (dev - g2 * d_o) @ reg.T
                v = d_m - reg @ d_o
                spread = (mom.e2 - mom.e1**2)[:, None, None]
                chat[np.ix_(rows, [k], m, m)] = (
                    blocks.schur[None] + spread * np.outer(v, v)[None]
                )[:, None]
            xhat[rows, k] = xh
            xtilde[rows, k] = xt

    row_loglik = logsumexp(log_tau, axis=1)
    tau = np.exp(log_tau - row_loglik[:, None])
    return EStepRecord(
        tau=tau,
        xhat=xhat,
        chat=chat,
        loglik=float(row_loglik.sum()),
        row_loglik=row_loglik,
        e1=e1,
        e2=e2,
        xtilde=xtilde,
    )


def _apply_ridge(sigma: np.ndarray) -> np.ndarray:
    p = sigma.shape[0]
    return sigma + (RIDGE_EPS * np.trace(sigma) / p) * np.eye(p)


def _component_totals(tau: np.ndarray) -> np.ndarray:
    n, _ = tau.shape
    totals = tau.sum(axis=0)
    floor = COMPONENT_FLOOR * n
    if np.any(totals < floor):
        k = int(np.argmin(totals))
        raise DegenerateComponentError(
            f"component {k} collapsed (responsibility mass {totals[k]:.3e} "
            f"< {floor:.3e})",
            component=k,
        )
    return totals


def m_step_mn(data: IncompleteDataset, record: EStepRecord) -> MixtureModel:
    """M step for the normal family (means, covariances, weights)."""
    n, p = data.values.shape
    totals = _component_totals(record.tau)
    weights = totals / n
    k_n = totals.size
    locations = np.einsum("ik,ikj->kj", record.tau, record.xhat) / totals[:, None]
    scales = np.empty((k_n, p, p))
    for k in range(k_n):
        xc = record.xhat[:, k, :] - locations[k]
        s = np.einsum("i,ij,il->jl", record.tau[:, k], xc, xc)
        s += np.einsum("i,ijl->jl", record.tau[:, k], record.chat[:, k])
        s /= totals[k]
        scales[k] = _apply_ridge(0.5 * (s + s.T))
    return MixtureModel(MN, weights, locations, scales)


def m_step_msn(
    data: IncompleteDataset,
    record: EStepRecord,
    model: MixtureModel,
    freeze_delta: bool = False,
) -> MixtureModel:
    """Conditional-maximization sweep for the skew-normal family.

    Location update uses the previous skewness; the skewness update uses
    the new location; the scale update uses both new values, with the
    conditional-covariance correction summed over rows. ``freeze_delta``
    pins the skewness at its current value (used to reduce the fitter to
    the normal one when delta = 0).
    """
    n, p = data.values.shape
    totals = _component_totals(record.tau)
    weights = totals / n
    k_n = totals.size
    locations = np.empty((k_n, p))
    skews = np.empty((k_n, p))
    scales = np.empty((k_n, p, p))

    for k in range(k_n):
        tau_k = record.tau[:, k]
        e1_k = record.e1[:, k]
        e2_k = record.e2[:, k]
        xhat_k = record.xhat[:, k, :]
        xtilde_k = record.xtilde[:, k, :]

        xi = (tau_k @ (xhat_k - np.outer(e1_k, model.skews[k]))) / totals[k]
        locations[k] = xi

        if freeze_delta:
            delta = model.skews[k].copy()
        else:
            denom = float(tau_k @ e2_k)
            if denom < SKEW_DENOM_FLOOR:
                raise DegenerateSkewError(
                    f"component {k}: skewness update denominator {denom:.3e} "
                    "below floor",
                    component=k,
                )
            delta = ((tau_k * e1_k) @ (xtilde_k - xi)) / denom
        skews[k] = delta

        xc = xhat_k - xi
        tc = xtilde_k - xi
        s = np.einsum("i,ij,il->jl", tau_k, xc, xc)
        cross = np.outer(delta, (tau_k * e1_k) @ tc)
        s -= cross + cross.T
        s += float(tau_k @ e2_k) * np.outer(delta, delta)
        s += np.einsum("i,ijl->jl", tau_k, record.chat[:, k])
        s /= totals[k]
        scales[k] = _apply_ridge(0.5 * (s + s.T))

    return MixtureModel(MSN, weights, locations, scales, skews)


def observed_loglik(data: IncompleteDataset, model: MixtureModel) -> float:
    """Log-likelihood of the observed cells under the mixture.

    Each row contributes log sum_k pi_k f_k(x_{i,o}) with f_k the
    observed-coordinate marginal of component k (both families are closed
    under marginalization).
    """
    step = e_step_mn if model.family == MN else e_step_msn
    return step(data, model).loglik


def _kmeans_pp(filled: np.ndarray, k: int, rng, n_iter: int = 20):
    """Seeded k-means++ followed by Lloyd iterations; returns (centers, labels)."""
    n = filled.shape[0]
    centers = np.empty((k, filled.shape[1]))
    centers[0] = filled[rng.integers(n)]
    d2 = np.sum((filled - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = filled[rng.integers(n, size=k - j)]
            break
        centers[j] = filled[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((filled - centers[j]) ** 2, axis=1))
    labels = np.full(n, -1, dtype=int)
    for _it in range(n_iter):
        dists = ((filled[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            sel = labels == j
            if sel.any():
                centers[j] = filled[sel].mean(axis=0)
    inertia = float(((filled - centers[labels]) ** 2).sum())
    return centers, labels, inertia


# Third central moment of X = xi + delta|U| + V along one coordinate is
# delta^3 * sqrt(2/pi) * (4/pi - 1); invert it to seed the skewness.
_SKEW_M3_COEFF = SQRT_2_OVER_PI * (4.0 / math.pi - 1.0)


def _kmeans_model(data, filled, family, n_components, seed, n_init):
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC1)))
    best = None
    for _ in range(n_init):
        centers, labels, inertia = _kmeans_pp(filled, n_components, rng)
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia)
    centers, labels, _ = best
    shares = np.bincount(labels, minlength=n_components) / filled.shape[0]
    shares = np.maximum(shares, 1e-3)
    weights = shares / shares.sum()
    pooled = np.diag(np.maximum(filled.var(axis=0), 1e-8))
    scales = np.array([_apply_ridge(pooled.copy()) for _ in range(n_components)])
    skews = np.zeros_like(centers) if family == MSN else None
    return MixtureModel(family, weights, centers.copy(), scales, skews)


def initial_model(
    data: IncompleteDataset,
    family: str,
    n_components: int,
    seed: int = 0,
    n_init: int = 4,
) -> MixtureModel:
    """Default initialization: k-means++ on mean-filled data.

    Component scales start at the pooled diagonal covariance and weights
    at the cluster shares (floored away from zero). For the skew-normal
    family, skewness is then moment-matched per component: a short normal
    EM burn-in supplies responsibilities, and the responsibility-weighted
    third central moment of each observed coordinate is inverted for a
    starting delta. (An exactly zero skewness start would be a fixed point
    of the skewness update; hard cluster assignments would bias the third
    moments by truncating cluster tails toward their neighbors, so soft
    weights are used instead.)
    """
    _check_identifiable(data)
    means = data.column_means()
    filled = np.where(data.mask, data.values, means)
    base = _kmeans_model(data, filled, family, n_components, seed, n_init)
    if family == MN:
        return base

    mn_base = MixtureModel(
        MN, base.weights.copy(), base.locations.copy(), base.scales.copy()
    )
    burn = fit(data, MN, n_components, init=mn_base, max_iter=8, rel_tol=0.0)
    tau = e_step_mn(data, burn).tau

    locations = burn.locations.copy()
    scales = burn.scales.copy()
    skews = np.zeros_like(locations)
    for k in range(n_components):
        for j in range(data.n_cols):
            obs = data.mask[:, j]
            w = tau[obs, k]
            total = w.sum()
            if total < 8.0:
                continue
            x = data.values[obs, j]
            mean_w = float(w @ x) / total
            dev = x - mean_w
            var_w = float(w @ dev**2) / total
            m3_w = float(w @ dev**3) / total
            sd = math.sqrt(max(var_w, 1e-12))
            mag = abs(m3_w) / _SKEW_M3_COEFF
            delta = math.copysign(min(mag ** (1.0 / 3.0), 0.9 * sd), m3_w)
            skews[k, j] = delta
        # moment relations: mean = xi + sqrt(2/pi) delta,
        # cov = Sigma + (1 - 2/pi) delta delta'
        locations[k] = burn.locations[k] - SQRT_2_OVER_PI * skews[k]
        candidate = burn.scales[k] - (1.0 - 2.0 / math.pi) * np.outer(
            skews[k], skews[k]
        )
        try:
            spd_cholesky(candidate)
            scales[k] = _apply_ridge(candidate)
        except Exception:
            scales[k] = burn.scales[k]
    return MixtureModel(MSN, burn.weights.copy(), locations, scales, skews)


def fit(
    data: IncompleteDataset,
    family: str,
    n_components: int,
    init: MixtureModel | None = None,
    seed: int = 0,
    max_iter: int = 500,
    rel_tol: float = 1e-8,
    freeze_delta: bool = False,
    n_init: int = 4,
) -> MixtureModel:
    """Alternate E and M steps until the relative log-likelihood change
    falls below ``rel_tol`` or ``max_iter`` M steps have run.

    Rows with no observed cells are excluded from fitting (they carry no
    observed likelihood); non-convergence is reported via the model's
    ``converged`` flag, not an error. Deterministic given ``seed``.
    """
    if n_components < 1:
        raise ParameterDomainError("n_components must be >= 1")
    if data.n_rows == 0:
        raise ParameterDomainError("cannot fit an empty dataset")
    usable = np.flatnonzero(data.mask.any(axis=1))
    fit_data = data if usable.size == data.n_rows else data.subset(usable)
    if fit_data.n_rows == 0:
        raise ParameterDomainError("every row is entirely missing")
    _check_identifiable(fit_data)

    model = init if init is not None else initial_model(
        fit_data, family, n_components, seed=seed, n_init=n_init
    )
    if model.family != family or model.n_components != n_components:
        raise SchemaMismatchError("init model family/K do not match request")
    if model.n_cols != data.n_cols:
        raise SchemaMismatchError("init model dimension does not match data")

    e_step = e_step_mn if family == MN else e_step_msn
    trace: list[float] = []
    converged = False
    n_m_steps = 0
    while True:
        record = e_step(fit_data, model)
        trace.append(record.loglik)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= rel_tol * (
            abs(trace[-1]) + 1e-12
        ):
            converged = True
            break
        if n_m_steps >= max_iter:
            break
        if family == MN:
            model = m_step_mn(fit_data, record)
        else:
            model = m_step_msn(fit_data, record, model, freeze_delta=freeze_delta)
        n_m_steps += 1

    return replace(
        model,
        loglik=trace[-1],
        n_iter=n_m_steps,
        converged=converged,
        trace=trace,
    )


def component_means(model: MixtureModel) -> np.ndarray:
    """Unconditional component means: mu, or xi + sqrt(2/pi) delta."""
    if model.family == MN:
        return model.locations.copy()
    return model.locations + SQRT_2_OVER_PI * model.skews


def impute(data: IncompleteDataset, model: MixtureModel) -> np.ndarray:
    """Fill missing cells with responsibility-weighted conditional means.

    Observed cells are copied bit-exactly. Rows with no observed cells are
    filled with the weight-averaged unconditional component means.
    """
    if model.n_cols != data.n_cols:
        raise SchemaMismatchError(
            f"model dimension {model.n_cols} != data dimension {data.n_cols}"
        )
    completed = data.values.copy()
    if data.mask.all():
        return completed

    usable = np.flatnonzero(data.mask.any(axis=1))
    if usable.size:
        sub = data.subset(usable) if usable.size != data.n_rows else data
        step = e_step_mn if model.family == MN else e_step_msn
        record = step(sub, model)
        weighted = np.einsum("ik,ikj->ij", record.tau, record.xhat)
        rr, cc = np.nonzero(~sub.mask)
        completed[usable[rr], cc] = weighted[rr, cc]

    empty = np.flatnonzero(~data.mask.any(axis=1))
    if empty.size:
        pooled = model.weights @ component_means(model)
        completed[empty] = pooled
    return completed


def align_components(reference: MixtureModel, other: MixtureModel) -> np.ndarray:
    """Greedy component matching by weight and location proximity.

    Returns the permutation ``perm`` such that component ``perm[k]`` of
    ``other`` corresponds to component ``k`` of ``reference``.
    """
    k_n = reference.n_components
    cost = np.empty((k_n, k_n))
    for a in range(k_n):
        for b in range(k_n):
            cost[a, b] = np.linalg.norm(
                reference.locations[a] - other.locations[b]
            ) + abs(reference.weights[a] - other.weights[b])
    perm = np.full(k_n, -1)
    used = set()
    for a, b in sorted(
        ((a, b) for a in range(k_n) for b in range(k_n)), key=lambda ab: cost[ab]
    ):
        if perm[a] < 0 and b not in used:
            perm[a] = b
            used.add(b)
    return perm


def model_to_dict(model: MixtureModel) -> dict:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "family": model.family,
        "n_components": model.n_components,
        "weights": model.weights.tolist(),
        "locations": model.locations.tolist(),
        "scales": model.scales.tolist(),
        "diagnostics": {
            "loglik": None if math.isnan(model.loglik) else model.loglik,
            "n_iter": model.n_iter,
            "converged": model.converged,
        },
    }
    if model.family == MSN:
        doc["skews"] = model.skews.tolist()
    return doc


def model_from_dict(doc: dict) -> MixtureModel:
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise SchemaMismatchError(f"unsupported model format version {version!r}")
    diag = doc.get("diagnostics", {})
    return MixtureModel(
        family=doc["family"],
        weights=np.array(doc["weights"]),
        locations=np.array(doc["locations"]),
        scales=np.array(doc["scales"]),
        skews=np.array(doc["skews"]) if doc["family"] == MSN else None,
        loglik=diag.get("loglik") if diag.get("loglik") is not None else math.nan,
        n_iter=diag.get("n_iter", 0),
        converged=diag.get("converged", False),
    )


def save_model_json(path, model: MixtureModel, extra: dict | None = None):
    doc = model_to_dict(model)
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model_json(path) -> MixtureModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
