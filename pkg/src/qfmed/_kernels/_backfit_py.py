"""Pure-NumPy backfitting kernel (fallback backend).

Semantics must stay in lockstep with the compiled kernel in
``_backfit_cy.pyx``: same update order, same centering, same convergence
metric.

The iteration solves, independently for every grid column of the response
matrix, the additive least-squares problem with Nadaraya-Watson smoothers
for continuous covariates and per-arm means for the binary treatment.
Because smoothing and subject interpolation are fixed linear maps, the
Gauss-Seidel sweeps run entirely in eval-space through precomputed
operators (built once per fit by ``build_operators``), so a sweep costs
O(d^2 E^2 G) instead of O(d E n G).
"""

import numpy as np


def build_operators(V, z01, W, fill_lo, fill_hi, fill_w, ij, wj):
    """Precompute the eval-space operators consumed by ``backfit``.

    Parameters mirror the raw smoother setup: ``V`` (n, G) responses,
    ``z01`` (n,) treatment, ``W`` (d, E, n) row-normalized NW weights with
    all-zero rows where the kernel window is empty, ``fill_*`` the blend
    plan for those rows, and ``ij``/``wj`` the linear-interpolation map
    from eval points back to subject positions.

    Returns a dict of arrays:
      A   (d, E, G)  smoothed responses W~_j V
      C   (d, d, E, E)  cross operators W~_j L_k (diagonal unused)
      u1, u0 (d, E)  arm masses W~_j 1_{z=a}
      mu  (d, E)  subject-mean functional of L_j
      nu1, nu0 (d, E)  per-arm mean functionals of L_j
      vbar, vbar1, vbar0 (G,) response means
    plus n0/n1 counts.
    """
    V = np.ascontiguousarray(V, dtype=np.float64)
    n, G = V.shape
    d, E = W.shape[0], W.shape[1]
    arm1 = z01 == 1
    arm0 = ~arm1
    n1 = int(arm1.sum())
    n0 = n - n1

    # Blend empty eval rows into the weight matrices once.
    Wt = np.empty_like(W)
    L = np.zeros((d, n, E))
    rows = np.arange(n)
    for j in range(d):
        lo, hi, w = fill_lo[j], fill_hi[j], fill_w[j]
        Wt[j] = (1.0 - w)[:, None] * W[j][lo] + w[:, None] * W[j][hi]
        L[j, rows, ij[j]] = 1.0 - wj[j]
        L[j, rows, ij[j] + 1] += wj[j]

    A = Wt @ V
    C = np.zeros((d, d, E, E))
    for j in range(d):
        for k in range(d):
            if j != k:
                C[j, k] = Wt[j] @ L[k]
    u1 = Wt[:, :, arm1].sum(axis=2)
    u0 = Wt[:, :, arm0].sum(axis=2)
    mu = L.mean(axis=1)
    nu1 = L[:, arm1].mean(axis=1) if n1 else np.zeros((d, E))
    nu0 = L[:, arm0].mean(axis=1) if n0 else np.zeros((d, E))

    return {
        "A": A,
        "C": C,
        "u1": u1,
        "u0": u0,
        "mu": mu,
        "nu1": nu1,
        "nu0": nu0,
        "vbar": V.mean(axis=0),
        "vbar1": V[arm1].mean(axis=0) if n1 else np.zeros(G),
        "vbar0": V[arm0].mean(axis=0) if n0 else np.zeros(G),
        "n1": n1,
        "n0": n0,
    }


def backfit(ops, tol, max_iter):
    """Run the backfitting loop on precomputed operators.

    Returns (g0, surf, m0, m1, n_iter, final_change) with surf of shape
    (d, E, G) and m0/m1 the centered per-arm treatment curves.
    """
    A = ops["A"]
    C = ops["C"]
    u1, u0 = ops["u1"], ops["u0"]
    mu, nu1, nu0 = ops["mu"], ops["nu1"], ops["nu0"]
    n1, n0 = ops["n1"], ops["n0"]
    n = n1 + n0
    d = A.shape[0]
    G = ops["vbar"].shape[0]

    g0 = ops["vbar"].copy()
    F = np.zeros_like(A)
    m = np.zeros((2, G))

    change = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        change = 0.0
        for j in range(d):
            raw = A[j] - g0
            for k in range(d):
                if k != j:
                    raw -= C[j, k] @ F[k]
            raw -= np.outer(u1[j], m[1])
            raw -= np.outer(u0[j], m[0])
            c = mu[j] @ raw
            raw -= c
            g0 = g0 + c
            denom = np.max(np.abs(F[j])) + 1e-12
            change = max(change, float(np.max(np.abs(raw - F[j]))) / denom)
            F[j] = raw

        m1_raw = ops["vbar1"] - g0
        m0_raw = ops["vbar0"] - g0
        for k in range(d):
            m1_raw -= nu1[k] @ F[k]
            m0_raw -= nu0[k] @ F[k]
        c = (n1 * m1_raw + n0 * m0_raw) / n
        m1_raw -= c
        m0_raw -= c
        g0 = g0 + c
        m_new = np.stack([m0_raw, m1_raw])
        denom = np.max(np.abs(m)) + 1e-12
        change = max(change, float(np.max(np.abs(m_new - m))) / denom)
        m = m_new

        if change <= tol:
            break

    return g0, F, m[0], m[1], it, change
