"""Hot numeric kernels for the interior-point solver, with two backends.

The cone is laid out as one flat slack vector: entries [0, l) are the
nonnegative-orthant part (one per linear inequality), followed by the
second-order cones, cone k occupying [starts[k], starts[k] + dims[k]).

Every kernel is written in numba-compatible form.  The "numba" backend
compiles them with @njit(cache=True); the "numpy" backend runs the same
source interpreted, except for the LDL^T factor/solve pair which gets a
vectorized outer-product variant (the interpreted triple loop would be
unusable).  Select with SPAPC_BACKEND=numpy|numba; default is numba when
importable (NUMBA_DISABLE_JIT=1 also falls back to numpy).

Scaling for a second-order cone follows Nesterov-Todd: with
rho_s^2 = s0^2-||s1||^2, rho_z^2 = z0^2-||z1||^2, sbar = s/rho_s,
zbar = z/rho_z, gamma^2 = (1 + sbar.zbar)/2, the scaling point is
wbar = (sbar + J zbar)/(2 gamma) (J = diag(1, -I)), eta = sqrt(rho_s/rho_z),
and W = eta * [[w0, w1^T], [w1, I + w1 w1^T/(1+w0)]], which satisfies
W z = W^-1 s = lam and W^2 u = eta^2 (2 wbar (wbar.u) - J u).
"""

import math
import os
from types import SimpleNamespace

import numpy as np

__all__ = ["get_backend", "default_backend_name", "available_backends"]

_HUGE_STEP = 1e100


# ---------------------------------------------------------------------------
# shared-source kernels (interpreted for the numpy backend, njit'd for numba)
# ---------------------------------------------------------------------------

def _cone_identity(m, l, dims, starts):
    e = np.zeros(m)
    for i in range(l):
        e[i] = 1.0
    for k in range(dims.shape[0]):
        e[starts[k]] = 1.0
    return e


def _compute_scaling(s, z, l, dims, starts, scal, eta, lam):
    """NT scaling from strictly interior (s, z).

    Fills scal (orthant: sqrt(s/z); cones: wbar), eta (per-cone factor) and
    lam = W z = W^-1 s.  Returns False if an iterate left the cone interior.
    """
    for i in range(l):
        if s[i] <= 0.0 or z[i] <= 0.0:
            return False
        scal[i] = math.sqrt(s[i] / z[i])
        lam[i] = math.sqrt(s[i] * z[i])
    for k in range(dims.shape[0]):
        o = starts[k]
        q = dims[k]
        s0 = s[o]
        z0 = z[o]
        ss = 0.0
        zz = 0.0
        sz = 0.0
        for j in range(o + 1, o + q):
            ss += s[j] * s[j]
            zz += z[j] * z[j]
            sz += s[j] * z[j]
        # difference-of-squares form avoids cancellation near the boundary
        rs2 = (s0 - math.sqrt(ss)) * (s0 + math.sqrt(ss))
        rz2 = (z0 - math.sqrt(zz)) * (z0 + math.sqrt(zz))
        if s0 <= 0.0 or z0 <= 0.0 or rs2 <= 0.0 or rz2 <= 0.0:
            return False
        rs = math.sqrt(rs2)
        rz = math.sqrt(rz2)
        gamma = math.sqrt(0.5 * (1.0 + (s0 * z0 + sz) / (rs * rz)))
        w0 = (s0 / rs + z0 / rz) / (2.0 * gamma)
        scal[o] = w0
        for j in range(o + 1, o + q):
            scal[j] = (s[j] / rs - z[j] / rz) / (2.0 * gamma)
        ek = math.sqrt(rs / rz)
        eta[k] = ek
        # lam = eta * V z with V = [[w0, w1^T], [w1, I + w1 w1^T/(1+w0)]]
        w1z1 = 0.0
        for j in range(o + 1, o + q):
            w1z1 += scal[j] * z[j]
        lam[o] = ek * (w0 * z0 + w1z1)
        coef = z0 + w1z1 / (1.0 + w0)
        for j in range(o + 1, o + q):
            lam[j] = ek * (z[j] + coef * scal[j])
    return True


def _apply_w2(scal, eta, l, dims, starts, u, out):
    """out = W^2 u."""
    for i in range(l):
        out[i] = scal[i] * scal[i] * u[i]
    for k in range(dims.shape[0]):
        o = starts[k]
        q = dims[k]
        e2 = eta[k] * eta[k]
        wu = 0.0
        for j in range(o, o + q):
            wu += scal[j] * u[j]
        out[o] = e2 * (2.0 * scal[o] * wu - u[o])
        for j in range(o + 1, o + q):
            out[j] = e2 * (2.0 * scal[j] * wu + u[j])
    return out


def _corrector_rhs(s, z, ds, dz, lam, scal, eta, sigma_mu, l, dims, starts, out):
    """Slack-block right-hand side of the combined (Mehrotra) step.

    out = W(lam \\ d) with d = lam o lam + (W^-1 ds) o (W dz) - sigma*mu*e,
    where (ds, dz) is the affine direction and o the Jordan product.
    """
    for i in range(l):
        out[i] = (s[i] * z[i] + ds[i] * dz[i] - sigma_mu) / z[i]
    for k in range(dims.shape[0]):
        o = starts[k]
        q = dims[k]
        ek = eta[k]
        w0 = scal[o]
        a = np.empty(q)
        b = np.empty(q)
        dv = np.empty(q)
        # a = W^-1 ds  (V^-1 u = [w0 u0 - w1.u1; u1 + (-u0 + w1.u1/(1+w0)) w1])
        w1u = 0.0
        for j in range(1, q):
            w1u += scal[o + j] * ds[o + j]
        a[0] = (w0 * ds[o] - w1u) / ek
        ca = -ds[o] + w1u / (1.0 + w0)
        for j in range(1, q):
            a[j] = (ds[o + j] + ca * scal[o + j]) / ek
        # b = W dz  (V u = [w0 u0 + w1.u1; u1 + (u0 + w1.u1/(1+w0)) w1])
        w1v = 0.0
        for j in range(1, q):
            w1v += scal[o + j] * dz[o + j]
        b[0] = ek * (w0 * dz[o] + w1v)
        cb = dz[o] + w1v / (1.0 + w0)
        for j in range(1, q):
            b[j] = ek * (dz[o + j] + cb * scal[o + j])
        # d = lam o lam + a o b - sigma_mu * e
        ab = 0.0
        ll = 0.0
        for j in range(q):
            ab += a[j] * b[j]
        for j in range(1, q):
            ll += lam[o + j] * lam[o + j]
        dv[0] = lam[o] * lam[o] + ll + ab - sigma_mu
        for j in range(1, q):
            dv[j] = 2.0 * lam[o] * lam[o + j] + a[0] * b[j] + b[0] * a[j]
        # v = lam \ d; det(lam) = lam0^2 - ||lam1||^2
        det = lam[o] * lam[o] - ll
        l1d1 = 0.0
        for j in range(1, q):
            l1d1 += lam[o + j] * dv[j]
        v0 = (lam[o] * dv[0] - l1d1) / det
        w1v1 = 0.0
        for j in range(1, q):
            dv[j] = (dv[j] - v0 * lam[o + j]) / lam[o]
            w1v1 += scal[o + j] * dv[j]
        # out = eta * V v
        out[o] = ek * (w0 * v0 + w1v1)
        cv = v0 + w1v1 / (1.0 + w0)
        for j in range(1, q):
            out[o + j] = ek * (dv[j] + cv * scal[o + j])
    return out


def _max_step(u, du, l, dims, starts):
    """sup {alpha >= 0 : u + alpha*du stays in the cone}, u strictly interior."""
    alpha = _HUGE_STEP
    for i in range(l):
        if du[i] < 0.0:
            a = -u[i] / du[i]
            if a < alpha:
                alpha = a
    for k in range(dims.shape[0]):
        o = starts[k]
        q = dims[k]
        c0 = u[o] * u[o]
        b2 = u[o] * du[o]
        a2 = du[o] * du[o]
        for j in range(o + 1, o + q):
            c0 -= u[j] * u[j]
            b2 -= u[j] * du[j]
            a2 -= du[j] * du[j]
        b2 *= 2.0
        if c0 <= 0.0:
            return 0.0
        disc = b2 * b2 - 4.0 * a2 * c0
        if disc >= 0.0 and (a2 < 0.0 or b2 < 0.0):
            a = 2.0 * c0 / (math.sqrt(disc) - b2)
            if a < alpha:
                alpha = a
    return alpha


def _cone_infeasibility(v, l, dims, starts):
    """Largest violation of cone membership of v (0 when v is in the cone)."""
    worst = 0.0
    for i in range(l):
        if -v[i] > worst:
            worst = -v[i]
    for k in range(dims.shape[0]):
        o = starts[k]
        q = dims[k]
        nrm = 0.0
        for j in range(o + 1, o + q):
            nrm += v[j] * v[j]
        g = math.sqrt(nrm) - v[o]
        if g > worst:
            worst = g
    return worst


def _fill_w2_block(kkt, off, scal, eta, l, dims, starts, delta):
    """Write the -(W^2 + delta*I) block of the KKT matrix at diagonal offset."""
    for i in range(l):
        kkt[off + i, off + i] = -(scal[i] * scal[i]) - delta
    for k in range(dims.shape[0]):
        o = off + starts[k]
        q = dims[k]
        e2 = eta[k] * eta[k]
        for i in range(q):
            wi = scal[starts[k] + i]
            for j in range(q):
                kkt[o + i, o + j] = -2.0 * e2 * wi * scal[starts[k] + j]
        kkt[o, o] += e2
        for i in range(1, q):
            kkt[o + i, o + i] -= e2
        for i in range(q):
            kkt[o + i, o + i] -= delta
    return kkt


def _ldl_factor(a, d, work, eps):
    """In-place LDL^T of a quasi-definite matrix, no pivoting.

    Lower triangle of `a` is overwritten with the unit-lower factor; `d`
    receives the diagonal.  Returns False when a pivot falls below eps in
    magnitude (singular beyond the static regularization).
    """
    n = a.shape[0]
    for j in range(n):
        dj = a[j, j]
        if not math.isfinite(dj) or abs(dj) < eps:
            return False
        d[j] = dj
        inv = 1.0 / dj
        for i in range(j + 1, n):
            cij = a[i, j]
            work[i] = cij
            a[i, j] = cij * inv
        for i in range(j + 1, n):
            lij = a[i, j]
            if lij != 0.0:
                for t in range(j + 1, i + 1):
                    a[i, t] -= lij * work[t]
    return True


def _ldl_solve(a, d, b):
    """Solve (L D L^T) x = b in place using the output of _ldl_factor."""
    n = a.shape[0]
    for i in range(1, n):
        acc = b[i]
        for t in range(i):
            acc -= a[i, t] * b[t]
        b[i] = acc
    for i in range(n):
        b[i] /= d[i]
    for i in range(n - 2, -1, -1):
        acc = b[i]
        for t in range(i + 1, n):
            acc -= a[t, i] * b[t]
        b[i] = acc
    return b


# ---------------------------------------------------------------------------
# numpy-only vectorized LDL^T (the interpreted loops above would crawl)
# ---------------------------------------------------------------------------

def _ldl_factor_numpy(a, d, work, eps):
    n = a.shape[0]
    for j in range(n):
        dj = a[j, j]
        if not math.isfinite(dj) or abs(dj) < eps:
            return False
        d[j] = dj
        col = a[j + 1:, j] / dj
        a[j + 1:, j + 1:] -= np.outer(col, a[j + 1:, j])
        a[j + 1:, j] = col
    return True


def _ldl_solve_numpy(a, d, b):
    n = a.shape[0]
    for i in range(1, n):
        b[i] -= a[i, :i] @ b[:i]
    b /= d
    for i in range(n - 2, -1, -1):
        b[i] -= a[i + 1:, i] @ b[i + 1:]
    return b


# ---------------------------------------------------------------------------
# backend registry
# ---------------------------------------------------------------------------

_SHARED = dict(
    cone_identity=_cone_identity,
    compute_scaling=_compute_scaling,
    apply_w2=_apply_w2,
    corrector_rhs=_corrector_rhs,
    max_step=_max_step,
    cone_infeasibility=_cone_infeasibility,
    fill_w2_block=_fill_w2_block,
)

_BACKENDS = {
    "numpy": SimpleNamespace(
        name="numpy",
        ldl_factor=_ldl_factor_numpy,
        ldl_solve=_ldl_solve_numpy,
        **_SHARED,
    )
}


def _numba_backend():
    from numba import njit

    plain = dict(cache=True)
    fast = dict(cache=True, fastmath=True)
    return SimpleNamespace(
        name="numba",
        cone_identity=njit(**plain)(_cone_identity),
        compute_scaling=njit(**plain)(_compute_scaling),
        apply_w2=njit(**plain)(_apply_w2),
        corrector_rhs=njit(**plain)(_corrector_rhs),
        max_step=njit(**plain)(_max_step),
        cone_infeasibility=njit(**plain)(_cone_infeasibility),
        fill_w2_block=njit(**fast)(_fill_w2_block),
        ldl_factor=njit(**fast)(_ldl_factor),
        ldl_solve=njit(**fast)(_ldl_solve),
    )


def default_backend_name():
    pick = os.environ.get("SPAPC_BACKEND", "").strip().lower()
    if pick in ("numpy", "numba"):
        return pick
    if pick:
        raise ValueError(f"SPAPC_BACKEND must be 'numpy' or 'numba', got {pick!r}")
    if os.environ.get("NUMBA_DISABLE_JIT", "0") == "1":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        return "numpy"
    return "numba"


def available_backends():
    names = ["numpy"]
    try:
        import numba  # noqa: F401
        names.append("numba")
    except ImportError:
        pass
    return names


def get_backend(name=None):
    """Kernel namespace for `name` (default: the environment's choice)."""
    if name is None:
        name = default_backend_name()
    if name not in _BACKENDS:
        if name == "numba":
            _BACKENDS["numba"] = _numba_backend()
        else:
            raise ValueError(f"unknown backend {name!r}")
    return _BACKENDS[name]
