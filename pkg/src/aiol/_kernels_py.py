"""Pure-numpy implementations of the hot kernels.

Mirrors ``_kernels.pyx`` function for function; used when the compiled
extension is unavailable or ``AIOL_PURE_PYTHON=1`` is set.
"""

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))


def confidence_scores(logits, T):
    z = np.asarray(logits, dtype=np.float64)
    shifted = (z - z.max(axis=1, keepdims=True)) / T
    return 1.0 / np.exp(shifted).sum(axis=1)


def temperature_nll(logits, labels, T):
    z = np.asarray(logits, dtype=np.float64) / T
    zmax = z.max(axis=1)
    lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
    picked = z[np.arange(z.shape[0]), np.asarray(labels, dtype=np.int64)]
    return float((lse - picked).sum())


def _e_step(x, w, mu, var):
    logp = (
        np.log(w)[None, :]
        - 0.5 * (_LOG_2PI + np.log(var))[None, :]
        - (x[:, None] - mu[None, :]) ** 2 / (2.0 * var[None, :])
    )
    m = logp.max(axis=1)
    lse = m + np.log(np.exp(logp - m[:, None]).sum(axis=1))
    resp = np.exp(logp - lse[:, None])
    return resp, float(lse.sum())


def em_gmm_1d(x, w0, mu0, var0, max_iters, tol, var_floor):
    """Two-component EM. Returns (w, mu, var, loglik_history, n_iter)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.array(w0, dtype=np.float64)
    mu = np.array(mu0, dtype=np.float64)
    var = np.array(var0, dtype=np.float64)
    n = x.shape[0]
    resp, ll_prev = _e_step(x, w, mu, var)
    history = [ll_prev]
    n_iter = 0
    for _ in range(max_iters):
        nk = resp.sum(axis=0)
        for k in range(2):
            if nk[k] > 0.0:
                mu[k] = (resp[:, k] * x).sum() / nk[k]
                var[k] = max((resp[:, k] * (x - mu[k]) ** 2).sum() / nk[k], var_floor)
        w = np.maximum(nk / n, 1e-300)
        w = w / w.sum()
        resp, ll = _e_step(x, w, mu, var)
        history.append(ll)
        n_iter += 1
        if ll - ll_prev < tol:
            break
        ll_prev = ll
    return w, mu, var, np.array(history), n_iter
