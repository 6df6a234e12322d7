"""Compiled closed-loop right-hand side and fixed-step RK4 driver.

Used for quadratic games whose regressors have a linear encoding.  The state
layout is described by ``sim_engine.Layout``; channel parameters arrive as a
``KernelParams`` tuple built by ``sim_engine``.
"""
from __future__ import annotations

from collections import namedtuple

import numpy as np
from numba import njit

from .regulators import (
    backstepping_control,
    first_order_control,
    first_order_control_no_uncertainty,
    second_order_control,
)

# controller family codes
FO, FO_NU, SO, BS = 0, 1, 2, 3
# plant kind codes
P_FIRST, P_CHAIN, P_GENERAL = 0, 1, 2

KernelParams = namedtuple(
    "KernelParams",
    [
        "n", "dim", "owner", "has_plants", "offsets",
        "Q", "c", "adj", "nbr_ptr", "nbr_idx",
        "adaptive", "share_channel", "gains",
        # controller view (no hidden parameters)
        "fam", "nkind", "phi_coef", "phi_src", "phi_v", "phi2_coef", "phi2_src", "phi2_v", "dphi1",
        # hidden plant parameters
        "pkind", "b1", "th1", "b2", "th2",
    ],
)


@njit(cache=True)
def _phi_eval(x, v, coef, src, from_v):
    out = np.empty(coef.shape[0])
    for col in range(coef.shape[0]):
        if from_v[col]:
            out[col] = coef[col] * v[src[col]]
        else:
            out[col] = coef[col] * x[src[col]]
    return out


@njit(cache=True)
def _estimator(s, P, ds):
    n, dim = P.n, P.dim
    oy, oz, od = P.offsets[3], P.offsets[4], P.offsets[5]
    owner, Q, c, adj = P.owner, P.Q, P.c, P.adj
    nbr_ptr, nbr_idx = P.nbr_ptr, P.nbr_idx
    y = s[oy:oy + dim]
    z = s[oz:oz + n * dim].reshape((n, dim))
    ydot = np.empty(dim)
    # own-gradient at own estimate: row col of Q applied to z[owner(col)]
    for col in range(dim):
        zi = z[owner[col]]
        acc = c[col]
        for m in range(dim):
            acc += Q[col, m] * zi[m]
        ydot[col] = -acc
        ds[oy + col] = -acc
    err = np.empty(dim)
    for i in range(n):
        zi = z[i]
        for col in range(dim):
            err[col] = adj[i, owner[col]] * (zi[col] - y[col])
        for p in range(nbr_ptr[i], nbr_ptr[i + 1]):
            k = nbr_idx[p]
            a = adj[i, k]
            zk = z[k]
            for col in range(dim):
                err[col] += a * (zi[col] - zk[col])
        base = oz + i * dim
        if P.adaptive:
            for col in range(dim):
                e = err[col]
                if P.share_channel:
                    di = od + i * n + owner[col]
                    ds[di] += e * e
                else:
                    di = od + i * dim + col
                    ds[di] = e * e
                ds[base + col] = -s[di] * e
        else:
            gains = P.gains
            for col in range(dim):
                ds[base + col] = -gains[i, col] * err[col]
    return ydot


@njit(cache=True)
def rhs_full(s, P, u_out, kd_out, kd2_out):
    """Closed-loop derivative; fills control and Nussbaum-argument rates."""
    ds = np.zeros(s.shape[0])
    ydot = _estimator(s, P, ds)
    if not P.has_plants:
        return ds, ydot
    dim = P.dim
    ox, ov, orr, oy = P.offsets[0], P.offsets[1], P.offsets[2], P.offsets[3]
    x = s[ox:ox + dim]
    v = s[ov:ov + dim]
    phi = _phi_eval(x, v, P.phi_coef, P.phi_src, P.phi_v)
    phi2 = _phi_eval(x, v, P.phi2_coef, P.phi2_src, P.phi2_v)
    for col in range(dim):
        y = s[oy + col]
        fam = P.fam[col]
        kind = P.nkind[col]
        k = s[orr + col]
        th = s[orr + dim + col]
        u = 0.0
        if fam == FO:
            u, dk, dth = first_order_control(x[col], y, ydot[col], k, th, phi[col], kind)
            ds[orr + col] = dk
            ds[orr + dim + col] = dth
        elif fam == FO_NU:
            u, dk = first_order_control_no_uncertainty(x[col], y, k, kind)
            ds[orr + col] = dk
        elif fam == SO:
            u, dk, dth = second_order_control(x[col], y, v[col], ydot[col], v[col], k, th, phi[col], kind)
            ds[orr + col] = dk
            ds[orr + dim + col] = dth
        else:
            res = backstepping_control(
                x[col], y, ydot[col], v[col], k, s[orr + 2 * dim + col], th,
                s[orr + 3 * dim + col], s[orr + 4 * dim + col], s[orr + 5 * dim + col],
                phi[col], P.dphi1[col], phi2[col], kind,
            )
            u = res[0]
            ds[orr + col] = res[3]
            ds[orr + dim + col] = res[4]
            ds[orr + 2 * dim + col] = res[5]
            ds[orr + 3 * dim + col] = res[6]
            ds[orr + 4 * dim + col] = res[7]
            ds[orr + 5 * dim + col] = res[8]
        u_out[col] = u
        kd_out[col] = ds[orr + col]
        kd2_out[col] = ds[orr + 2 * dim + col]

        pk = P.pkind[col]
        if pk == P_FIRST:
            ds[ox + col] = P.b1[col] * u + phi[col] * P.th1[col]
        elif pk == P_CHAIN:
            ds[ox + col] = v[col]
            ds[ov + col] = P.b1[col] * u + phi[col] * P.th1[col]
        else:
            ds[ox + col] = P.b1[col] * v[col] + phi[col] * P.th1[col]
            ds[ov + col] = P.b2[col] * u + phi2[col] * P.th2[col]
    return ds, ydot


@njit(cache=True)
def rhs(s, P):
    dim = P.dim
    scratch = np.empty(dim)
    ds, _ = rhs_full(s, P, scratch, np.empty(dim), np.empty(dim))
    return ds


@njit(cache=True)
def _bad_index(s, blowup):
    for i in range(s.shape[0]):
        if not np.isfinite(s[i]) or abs(s[i]) > blowup:
            return i
    return -1


@njit(cache=True)
def integrate(s0, P, h, n_steps, stride, blowup):
    """RK4 from ``s0``; returns samples and the step/index where it diverged (or -1)."""
    dim = P.dim
    n_samples = n_steps // stride + 1
    states = np.empty((n_samples, s0.shape[0]))
    u_log = np.zeros((n_samples, dim))
    kd_log = np.zeros((n_samples, dim))
    kd2_log = np.zeros((n_samples, dim))
    ysq_log = np.zeros(n_samples)
    s = s0.copy()
    u = np.empty(dim)
    kd = np.empty(dim)
    kd2 = np.empty(dim)
    sample = 0
    for step in range(n_steps + 1):
        k1, ydot = rhs_full(s, P, u, kd, kd2)
        if step % stride == 0:
            states[sample] = s
            u_log[sample] = u
            kd_log[sample] = kd
            kd2_log[sample] = kd2
            ysq_log[sample] = np.sum(ydot * ydot)
            sample += 1
        if step == n_steps:
            break
        bad = _bad_index(k1, np.inf)
        if bad >= 0:
            return states, u_log, kd_log, kd2_log, ysq_log, sample, step, bad
        k2 = rhs(s + 0.5 * h * k1, P)
        k3 = rhs(s + 0.5 * h * k2, P)
        k4 = rhs(s + h * k3, P)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        bad = _bad_index(s, blowup)
        if bad >= 0:
            return states, u_log, kd_log, kd2_log, ysq_log, sample, step + 1, bad
    return states, u_log, kd_log, kd2_log, ysq_log, sample, -1, -1
