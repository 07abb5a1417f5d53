"""Pure-numpy versions of the Euler-Maruyama kernels in ``_emkernel.pyx``.

Same signatures and return conventions; used when the extension is not
built or when ``FEPLAB_BACKEND=python`` is set.
"""
import numpy as np


def _blown(x, limit_sq):
    norm_sq = np.einsum("...j,...j->...", x, x)
    return ~(norm_sq <= limit_sq)


def em_linear_path(x0, B, L, z, dt, out, limit_sq):
    n_steps = z.shape[0]
    inc = z @ L.T
    out[0] = x0
    x = np.array(x0, dtype=float)
    Bt = np.ascontiguousarray(B.T)
    last = n_steps
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            x = x + dt * (x @ Bt) + inc[k]
            out[k + 1] = x
            if not np.isfinite(x).all():
                last = k + 1
                break
        bad = np.flatnonzero(_blown(out[: last + 1], limit_sq))
    return int(bad[0]) if bad.size else -1


def em_linear_ensemble(X0, B, L, Z, dt, record, out, limit_sq):
    n_steps = Z.shape[1]
    X = np.array(X0, dtype=float)
    Bt = np.ascontiguousarray(B.T)
    Lt = np.ascontiguousarray(L.T)
    rec = list(np.asarray(record))
    r = 0
    while r < len(rec) and rec[r] == 0:
        out[r] = X
        r += 1
    dead = np.zeros(X.shape[0], dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            X = X + dt * (X @ Bt) + Z[:, k, :] @ Lt
            dead |= _blown(X, limit_sq)
            while r < len(rec) and rec[r] == k + 1:
                out[r] = X
                r += 1
    bad = np.flatnonzero(dead)
    return int(bad[0]) if bad.size else -1
