"""Primal-dual path-following interior-point solver for standard-form SOCPs.

The algorithm is the usual Mehrotra predictor-corrector scheme with
Nesterov-Todd scaling over the product cone (nonnegative orthant for the
linear inequalities, second-order cones otherwise):

* cold start at x = 0, s = z = e (the cone identity);
* each iteration assembles the quasi-definite KKT system
      [[-(W^2 + delta*I), G], [G', delta*I]]
  and factors it with an unpivoted LDL^T (static regularization
  delta = 1e-10), refining each solve once against the unregularized matrix;
* affine step -> centering sigma = (mu_aff/mu)^3 -> combined step with the
  Mehrotra second-order correction, fraction-to-boundary step length;
* termination on max(primal, dual, gap) <= tolerances with the normalized
  residual definitions of :func:`spapc.conic.check_kkt`.

Infeasibility and unboundedness are reported through approximate Farkas
certificates built from the iterates (all problems produced by this package
are feasible by construction; the detection exists for completeness).
Everything is deterministic: same problem + config = bitwise-identical
iterates.
"""

import math

import numpy as np

from .conic import ConicSolution, ConicStatus, SolverConfig, standard_form
from .kernels import get_backend

__all__ = ["solve", "iteration_count_probe"]

_DELTA = 1e-10          # static KKT regularization
_PIVOT_EPS = 1e-14      # LDL pivot magnitude considered singular
_CERT_TOL = 1e-9        # Farkas certificate quality for status declarations
_TINY_STEP = 1e-12
# declare optimality strictly inside the tolerances so an independent
# recomputation of the residuals (different summation order) cannot land
# on the wrong side of the line
_TOL_MARGIN = 0.9


def solve(problem, config=None, backend=None):
    """Solve a :class:`spapc.conic.ConicProblem`.

    Returns a :class:`ConicSolution` whose status is OPTIMAL only when the
    normalized primal/dual residuals and duality gap all meet the configured
    tolerances; the primal/dual iterates are attached for independent KKT
    re-verification.
    """
    cfg = config or SolverConfig()
    kb = get_backend(backend)
    G, h, l, dims, starts = standard_form(problem)
    m, n = G.shape
    c = problem.c
    N = n + m

    e = kb.cone_identity(m, l, dims, starts)
    x = np.zeros(n)
    s = e.copy()
    z = e.copy()
    nu = l + len(dims)

    c_scale = 1.0 + np.linalg.norm(c)
    h_scale = 1.0 + np.linalg.norm(h)

    # KKT system in [dz; dx] ordering: [[-(W^2+delta*I), G], [G', delta*I]].
    # Eliminating the slack block first keeps the element growth tied to the
    # iterate conditioning instead of the 1/delta = 1e10 growth the
    # [dx; dz] ordering would force through its tiny leading pivots.
    template = np.zeros((N, N))
    template[:m, m:] = G
    template[m:, :m] = G.T
    template[m:, m:] = _DELTA * np.eye(n)
    kkt = np.empty((N, N))
    dvec = np.empty(N)
    work = np.empty(N)
    scal = np.empty(m)
    eta = np.empty(max(len(dims), 1))
    lam = np.empty(m)
    w2u = np.empty(m)
    rhs_s = np.empty(m)

    status = ConicStatus.MAX_ITERATIONS
    iterations = 0
    pres = dres = gap_rel = np.inf
    stalled = 0

    for it in range(cfg.max_iterations):
        rp = G @ x + s - h
        rd = c + G.T @ z
        gap = float(s @ z)
        mu = gap / nu
        cx = float(c @ x)
        hz = float(h @ z)
        pres = np.linalg.norm(rp) / h_scale
        dres = np.linalg.norm(rd) / c_scale
        gap_rel = gap / (1.0 + abs(cx) + abs(hz))

        if pres <= _TOL_MARGIN * cfg.feas_tol and dres <= _TOL_MARGIN * cfg.feas_tol \
                and gap_rel <= _TOL_MARGIN * cfg.gap_tol:
            status = ConicStatus.OPTIMAL
            break

        cert = _certificate_status(kb, G, c, x, s, z, cx, hz, l, dims, starts, it)
        if cert is not None:
            status = cert
            break

        if not kb.compute_scaling(s, z, l, dims, starts, scal, eta, lam):
            status = ConicStatus.NUMERICAL_FAILURE
            break

        np.copyto(kkt, template)
        kb.fill_w2_block(kkt, 0, scal, eta, l, dims, starts, _DELTA)
        if not kb.ldl_factor(kkt, dvec, work, _PIVOT_EPS):
            # one escalated-regularization retry before giving up
            np.copyto(kkt, template)
            kkt[m:, m:] += (1e4 - 1.0) * _DELTA * np.eye(n)
            kb.fill_w2_block(kkt, 0, scal, eta, l, dims, starts, 1e4 * _DELTA)
            if not kb.ldl_factor(kkt, dvec, work, _PIVOT_EPS):
                status = ConicStatus.NUMERICAL_FAILURE
                break

        def kkt_solve(top, bot):
            rhs = np.concatenate((bot, top))
            sol = rhs.copy()
            kb.ldl_solve(kkt, dvec, sol)
            # one refinement pass against the unregularized KKT matrix
            dz_, dx_ = sol[:m], sol[m:]
            kb.apply_w2(scal, eta, l, dims, starts, dz_, w2u)
            res = np.concatenate((bot - G @ dx_ + w2u, top - G.T @ dz_))
            kb.ldl_solve(kkt, dvec, res)
            sol += res
            return sol[m:], sol[:m]

        # predictor (affine scaling) direction
        dx, dz = kkt_solve(-rd, -rp + s)
        ds = -rp - G @ dx
        alpha_max = min(kb.max_step(s, ds, l, dims, starts),
                        kb.max_step(z, dz, l, dims, starts))
        alpha_aff = min(1.0, alpha_max)
        mu_aff = float((s + alpha_aff * ds) @ (z + alpha_aff * dz)) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # combined direction with second-order correction
        kb.corrector_rhs(s, z, ds, dz, lam, scal, eta, sigma * mu,
                         l, dims, starts, rhs_s)
        dx, dz = kkt_solve(-rd, -rp + rhs_s)
        ds = -rp - G @ dx
        alpha_max = min(kb.max_step(s, ds, l, dims, starts),
                        kb.max_step(z, dz, l, dims, starts))
        alpha = min(1.0, cfg.step_fraction * alpha_max)
        if not math.isfinite(alpha) or alpha <= _TINY_STEP:
            stalled += 1
            if stalled >= 2:
                status = ConicStatus.NUMERICAL_FAILURE
                iterations = it + 1
                break
            alpha = 0.0     # keep the iterates finite for the second attempt
        else:
            stalled = 0

        x += alpha * dx
        s += alpha * ds
        z += alpha * dz
        iterations = it + 1

        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s)) and np.all(np.isfinite(z))):
            status = ConicStatus.NUMERICAL_FAILURE
            break

    if status in (ConicStatus.NUMERICAL_FAILURE, ConicStatus.MAX_ITERATIONS):
        status = _classify_divergence(kb, G, h, c, x, z, l, dims, starts,
                                      pres, dres, cfg) or status

    return ConicSolution(
        u_opt=x,
        objective_value=float(c @ x),
        status=status,
        iterations=iterations,
        duality_gap=float(gap_rel),
        primal_residual=float(pres),
        dual_residual=float(dres),
        slack=s,
        dual=z,
    )


def _certificate_status(kb, G, c, x, s, z, cx, hz, l, dims, starts, it):
    """Approximate Farkas certificates from the current iterates.

    Primal infeasibility: z in K*, h'z < 0, G'z ~ 0. Dual infeasibility
    (unboundedness): c'x < 0 with -G x in K (so x is a feasible ray of
    decrease).  Quality thresholds are strict so feasible problems can
    never trip them.
    """
    if it < 3:
        return None
    if hz < 0.0:
        q = np.linalg.norm(G.T @ z) / (-hz)
        if q * (1.0 + np.linalg.norm(c)) <= _CERT_TOL:
            return ConicStatus.INFEASIBLE
    if cx < 0.0:
        ray = -G @ x
        viol = kb.cone_infeasibility(ray, l, dims, starts)
        scale = 1.0 + np.linalg.norm(ray)
        if viol / ((-cx) * scale) <= _CERT_TOL and np.linalg.norm(x) > 1e3:
            return ConicStatus.UNBOUNDED
    return None


def _classify_divergence(kb, G, h, c, x, z, l, dims, starts, pres, dres, cfg):
    """Looser certificate check once the iteration has broken down.

    The duality measure diverging while the primal (resp. dual) residual is
    stuck is the classic infeasibility (resp. unboundedness) pattern; accept
    the accumulated iterate as an approximate certificate.
    """
    loose = 1e-6
    hz = float(h @ z)
    if hz < 0.0 and pres > 1e3 * cfg.feas_tol:
        q = np.linalg.norm(G.T @ z) / (-hz)
        if q <= loose * (1.0 + np.abs(G).max()):
            return ConicStatus.INFEASIBLE
    cx = float(c @ x)
    if cx < 0.0 and np.linalg.norm(x) > 10.0:
        ray = -G @ x
        viol = kb.cone_infeasibility(ray, l, dims, starts)
        if viol / ((-cx) * (1.0 + np.linalg.norm(ray))) <= loose:
            return ConicStatus.UNBOUNDED
    return None


def iteration_count_probe(generator, sizes, config=None, backend=None):
    """Record (n, iterations) for feasible problems produced per size.

    `generator(size)` must yield ConicProblem instances; solver errors
    propagate so a broken family is visible immediately.
    """
    records = []
    for size in sizes:
        for problem in generator(size):
            sol = solve(problem, config, backend=backend)
            if sol.status is not ConicStatus.OPTIMAL:
                raise RuntimeError(
                    f"probe instance at size {size} finished {sol.status.value}")
            records.append((problem.n, sol.iterations))
    return records
