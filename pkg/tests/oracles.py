"""Independent reference implementations used only by the tests."""

import itertools
import math

import numpy as np
from scipy import integrate


def exhaustive_ml(H, llrs, target):
    """Syndrome-consistent candidates ranked by log-posterior; returns (best, margin_log).

    ``margin_log`` is log P(best) - log P(second); ``inf`` when unique.
    """
    n = H.shape[1]
    cands = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
    ok = np.all((cands @ H.T.astype(np.int64)) % 2 == target, axis=1)
    cands = cands[ok]
    # log P(x) up to a constant: sum over positions of -x_i * L_i
    scores = -(cands * llrs).sum(axis=1)
    order = np.argsort(-scores, kind="stable")
    best = cands[order[0]]
    margin = math.inf if len(order) == 1 else scores[order[0]] - scores[order[1]]
    return best.astype(np.uint8), margin


def bayes_llr(x, abs_y, sigma):
    """ln P(key=0 | x, |y|) - ln P(key=1 | x, |y|) by integrating Gaussian densities.

    The key bit is the sign of ``y``; conditioning on ``|y|`` picks y = +|y|
    (bit 0) or y = -|y| (bit 1).  Densities are integrated over a small bin
    around each point so the oracle does not merely evaluate the closed form.
    """
    s = sigma / math.sqrt(2.0)
    h = 1e-4

    def mass(centre):
        f = lambda t: math.exp(-0.5 * ((t - x) / s) ** 2)
        return integrate.quad(f, centre - h, centre + h, epsabs=0, epsrel=1e-12)[0]

    return math.log(mass(abs_y)) - math.log(mass(-abs_y))


def dense_spa(H, llrs, target, iterations, clamp=30.0):
    """Textbook flooding SPA on a dense matrix; returns per-iteration hard decisions.

    Stops at the first iteration whose hard decision satisfies the syndrome.
    """
    H = np.asarray(H, dtype=bool)
    m, n = H.shape
    sign = np.where(np.asarray(target) == 1, -1.0, 1.0)
    c2v = np.zeros((m, n))
    history = []
    total = llrs.copy()
    v2c = np.where(H, np.clip(total[None, :] - c2v, -clamp, clamp), 0.0)
    for _ in range(iterations):
        for i in range(m):
            cols = np.flatnonzero(H[i])
            if cols.size == 1:
                c2v[i, cols[0]] = sign[i] * clamp
                continue
            t = np.tanh(v2c[i, cols] / 2.0)
            for a, j in enumerate(cols):
                p = np.prod(np.delete(t, a))
                p = min(max(p, -np.tanh(clamp / 2)), np.tanh(clamp / 2))
                c2v[i, j] = sign[i] * 2.0 * np.arctanh(p)
        total = llrs + c2v.sum(axis=0)
        v2c = np.where(H, np.clip(total[None, :] - c2v, -clamp, clamp), 0.0)
        hard = (total < 0).astype(np.uint8)
        history.append(hard)
        if np.array_equal((H.astype(int) @ hard) % 2, target):
            break
    return history


def wilson_by_root(failures, trials, z):
    """Score-test inversion solved numerically."""
    from scipy.optimize import brentq

    p_hat = failures / trials

    def f(p):
        return abs(p_hat - p) - z * math.sqrt(p * (1 - p) / trials)

    lo = 0.0 if failures == 0 else brentq(f, 1e-15, p_hat)
    hi = 1.0 if failures == trials else brentq(f, max(p_hat, 1e-15), 1 - 1e-15)
    if failures == trials:
        lo = brentq(f, 1e-15, min(p_hat, 1 - 1e-15))
    return lo, hi


def _entropy_thermal(nu):
    if nu <= 1 + 1e-12:
        return 0.0
    a, b = (nu + 1) / 2, (nu - 1) / 2
    return a * math.log2(a) - b * math.log2(b)


def untrusted_heterodyne_chi(V_A, tau, eps):
    """Reverse-reconciliation Holevo bound, heterodyne, all noise attributed to Eve.

    Entangling-cloner picture: two-mode state with a = V, b = tau (V + eps) + 1 - tau,
    c^2 = tau (V^2 - 1); Alice's conditional variance after Bob's heterodyne is
    V - c^2 / (b + 1).
    """
    V = V_A + 1.0
    b = tau * (V + eps) + 1.0 - tau
    c2 = tau * (V * V - 1.0)
    delta = V * V + b * b - 2.0 * c2
    det = V * b - c2
    s = math.sqrt(delta * delta - 4.0 * det * det)
    l1, l2 = math.sqrt((delta + s) / 2), math.sqrt((delta - s) / 2)
    l3 = V - c2 / (b + 1.0)
    return _entropy_thermal(l1) + _entropy_thermal(l2) - _entropy_thermal(l3)
