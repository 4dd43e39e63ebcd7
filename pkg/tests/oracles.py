"""Independent reference implementations used only by the tests."""

import math

import numpy as np
from scipy import integrate


def _t_log_norm(dof):
    return math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2) - 0.5 * math.log(dof * math.pi)


def t_cdf_quad(t, dof):
    c = math.exp(_t_log_norm(dof))

    def pdf(u):
        return c * (1 + u * u / dof) ** (-(dof + 1) / 2)

    half, _ = integrate.quad(pdf, 0.0, abs(t), epsabs=1e-14, epsrel=1e-13, limit=500)
    return 0.5 + half if t >= 0 else 0.5 - half


def f_cdf_quad(x, d1, d2):
    """Integral of the F density on [0, x]; the x^(d1/2-1) factor goes into the quadrature weight."""
    logc = (
        0.5 * d1 * math.log(d1)
        + 0.5 * d2 * math.log(d2)
        - (math.lgamma(d1 / 2) + math.lgamma(d2 / 2) - math.lgamma((d1 + d2) / 2))
    )

    def smooth(u):
        return math.exp(logc - 0.5 * (d1 + d2) * math.log(d2 + d1 * u))

    if x <= 0:
        return 0.0
    if d1 < 2:
        val, _ = integrate.quad(
            smooth, 0.0, x, weight="alg", wvar=(d1 / 2 - 1, 0.0), epsabs=1e-14, epsrel=1e-13, limit=500
        )
        return val
    mode = (d1 - 2) / d1 * d2 / (d2 + 2)
    pts = [mode] if 0 < mode < x else None
    val, _ = integrate.quad(
        lambda u: math.exp(f_logpdf_ref(u, d1, d2)) if u > 0 else 0.0,
        0.0, x, points=pts, epsabs=1e-14, epsrel=1e-13, limit=500,
    )
    return val


def f_logpdf_ref(x, d1, d2):
    return (
        0.5 * d1 * math.log(d1)
        + 0.5 * d2 * math.log(d2)
        + (0.5 * d1 - 1) * math.log(x)
        - 0.5 * (d1 + d2) * math.log(d2 + d1 * x)
        - (math.lgamma(d1 / 2) + math.lgamma(d2 / 2) - math.lgamma((d1 + d2) / 2))
    )


def f_level_set_grid(x0, d1, d2, upper=60.0, n=600_001):
    """Mass of {x: f(x) <= f(x0)} by midpoint integration on a fine grid."""
    edges = np.linspace(0.0, upper, n)
    mid = 0.5 * (edges[1:] + edges[:-1])
    logpdf = np.array([f_logpdf_ref(m, d1, d2) for m in mid]) if n < 1000 else _vec_logpdf(mid, d1, d2)
    dens = np.exp(logpdf)
    keep = logpdf <= f_logpdf_ref(x0, d1, d2)
    return float(np.sum(dens[keep]) * (edges[1] - edges[0]))


def _vec_logpdf(x, d1, d2):
    return (
        0.5 * d1 * math.log(d1)
        + 0.5 * d2 * math.log(d2)
        + (0.5 * d1 - 1) * np.log(x)
        - 0.5 * (d1 + d2) * np.log(d2 + d1 * x)
        - (math.lgamma(d1 / 2) + math.lgamma(d2 / 2) - math.lgamma((d1 + d2) / 2))
    )


def logistic_loglik(b0, b1, x, z):
    eta = b0 + b1 * x
    return np.sum(z * eta - np.logaddexp(0.0, eta), axis=-1)


def logistic_grid_search(x, z, center=(0.0, 0.0), half_width=6.0, points=121, rounds=6):
    """Maximize the 1-covariate logistic log-likelihood by successively finer dense grids."""
    c0, c1 = center
    hw = half_width
    for _ in range(rounds):
        g0 = np.linspace(c0 - hw, c0 + hw, points)
        g1 = np.linspace(c1 - hw, c1 + hw, points)
        B0, B1 = np.meshgrid(g0, g1, indexing="ij")
        ll = logistic_loglik(B0[..., None], B1[..., None], x, z)
        i, j = np.unravel_index(np.argmax(ll), ll.shape)
        c0, c1 = g0[i], g1[j]
        hw = 4 * (g0[1] - g0[0])
    return np.array([c0, c1])


def bpp_log_joint(theta, sigma2, yc, ye, w, a1, a2):
    """Unnormalized log posterior of (theta, sigma^2) for an intercept-only control arm.

    Current likelihood times the weighted external likelihood split into a
    mean part (power a1) and a variance part (power a2), with the
    reference prior 1/sigma^2.
    """
    n_c = len(yc)
    ybar = yc.mean()
    s2c = np.sum((yc - ybar) ** 2) / (n_c - 1)
    ess = w.sum()
    ybar_w = np.sum(w * ye) / ess
    s2w = np.sum(w * (ye - ybar_w) ** 2) / (ess - 1)
    quad = n_c * (theta - ybar) ** 2 + a1 * ess * (theta - ybar_w) ** 2
    return (
        -quad / (2 * sigma2)
        - (n_c + a1) / 2 * np.log(sigma2)
        - (ess - 1) * a2 / 2 * np.log(sigma2)
        - ((n_c - 1) * s2c + (ess - 1) * a2 * s2w) / (2 * sigma2)
        - np.log(sigma2)
    )


def grid_cell_probabilities(logjoint, t_edges, s_edges, sub=40):
    k_t, k_s = len(t_edges) - 1, len(s_edges) - 1
    tf = np.linspace(t_edges[0], t_edges[-1], k_t * sub + 1)
    sf = np.linspace(s_edges[0], s_edges[-1], k_s * sub + 1)
    tm = 0.5 * (tf[:-1] + tf[1:])
    sm = 0.5 * (sf[:-1] + sf[1:])
    TT, SS = np.meshgrid(tm, sm, indexing="ij")
    L = logjoint(TT, SS)
    D = np.exp(L - L.max())
    cells = D.reshape(k_t, sub, k_s, sub).sum(axis=(1, 3))
    return cells / cells.sum()
