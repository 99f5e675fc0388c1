"""Independent numerical oracles used by the test suite.

These deliberately avoid the closed forms under test: truncated moments
come from adaptive quadrature, marginal likelihoods from quadrature over
the missing coordinate, and conditional expectations from rejection-style
Monte Carlo on the sampling representation.
"""

import mpmath as mp
import numpy as np

mp.mp.dps = 40


def trunc_moments_quadrature(mu, sigma):
    """E[T], E[T^2] for T ~ N(mu, sigma^2) truncated to (0, inf)."""
    mu = mp.mpf(mu)
    sigma = mp.mpf(sigma)
    f = lambda t: mp.exp(-(((t - mu) / sigma) ** 2) / 2)
    z = mp.quad(f, [0, mp.inf])
    e1 = mp.quad(lambda t: t * f(t), [0, mp.inf]) / z
    e2 = mp.quad(lambda t: t * t * f(t), [0, mp.inf]) / z
    return float(e1), float(e2)


def marginal_loglik_quadrature(values, mask, model, span=60.0, n_nodes=4001):
    """Observed-data log-likelihood by integrating the joint density over
    each row's missing coordinate (rows may have at most one missing cell).

    Uses a dense trapezoid grid, entirely independent of the analytic
    observed-marginal formulas.
    """
    from pidimpute.kernels import mn_pdf, msn_pdf

    total = 0.0
    for i in range(values.shape[0]):
        miss = np.flatnonzero(~mask[i])
        if miss.size > 1:
            raise ValueError("oracle handles at most one missing cell per row")
        density = 0.0
        for k in range(model.n_components):
            if model.family == "mn":
                comp = lambda x: mn_pdf(x, model.locations[k], model.scales[k])
            else:
                comp = lambda x: msn_pdf(
                    x, model.locations[k], model.scales[k], model.skews[k]
                )
            if miss.size == 0:
                density += model.weights[k] * comp(values[i])
            else:
                j = miss[0]
                grid = np.linspace(-span / 2, span / 2, n_nodes)
                x = np.tile(values[i], (n_nodes, 1))
                x[:, j] = grid
                vals = np.atleast_1d(comp(x))
                density += model.weights[k] * np.trapezoid(vals, grid)
        total += np.log(density)
    return total


def msn_conditional_mean_mc(xi, sigma, delta, observed_idx, observed_values,
                            n_draws, seed, window=0.05):
    """Monte Carlo E[X_m | X_o ~= x_o] via windowed rejection sampling.

    Draws from the sampling representation X = xi + delta |U| + V and keeps
    draws whose observed coordinates all fall within +-window of the
    conditioning values; returns (mean, standard error, kept count) for the
    missing coordinates.
    """
    rng = np.random.default_rng(seed)
    from pidimpute.kernels import sample_msn

    draws = sample_msn(np.asarray(xi, float), np.asarray(sigma, float),
                       np.asarray(delta, float), n_draws, rng)
    keep = np.ones(n_draws, dtype=bool)
    for pos, j in enumerate(observed_idx):
        keep &= np.abs(draws[:, j] - observed_values[pos]) < window
    kept = draws[keep]
    p = draws.shape[1]
    missing_idx = [j for j in range(p) if j not in set(observed_idx)]
    sel = kept[:, missing_idx]
    mean = sel.mean(axis=0)
    se = sel.std(axis=0, ddof=1) / np.sqrt(sel.shape[0])
    return mean, se, kept.shape[0]
