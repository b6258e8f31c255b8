"""Transmit-vector designs for the PSK multiuser downlink.

All strict per-antenna power constraint (SPAPC) designs cap every antenna at
|x_m|^2 <= power_limit per symbol slot:

* zf_spapc     - closed form: pseudo-inverse direction scaled so the loudest
                 antenna sits exactly at the cap (zero multiuser interference).
* mmddt_spapc  - maximize the minimum distance of the noiseless receive
                 points to their PSK decision thresholds (equivalently,
                 non-strict constructive-interference precoding), via SOCP.
* mmse_spapc   - minimize E||beta*z - s||^2 jointly over the transmit vector
                 and a receiver-side gain beta >= 0, via SOCP after the
                 x_s = beta*x substitution.  beta is a theoretical automatic
                 gain control; PSK hard detection never needs it.
* lmmse_tpc    - classical transmit Wiener filter under an average *total*
                 power budget; baseline only, not per-antenna constrained.

The SOCP builders return plain :class:`spapc.conic.ConicProblem` objects so
the constructions can be inspected, dumped and cross-checked in isolation.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conic import ConicProblem, ConicSolution, ConicStatus, LinearInequality, SecondOrderCone, SolverConfig
from .embedding import rotate_channel, to_complex, to_real, to_real_channel
from .solver import solve

__all__ = [
    "PrecoderInput",
    "PrecodeResult",
    "ChannelRankError",
    "DegenerateScalingError",
    "SolverFailure",
    "zf_spapc",
    "build_mmddt_socp",
    "mmddt_spapc",
    "build_mmse_socp",
    "mmse_spapc",
    "lmmse_tpc",
    "threshold_margins",
    "mmse_objective",
    "best_gain",
    "antenna_powers",
]

_RANK_CUTOFF = 1e-10    # relative singular-value threshold for the ZF pseudo-inverse
_BETA_FLOOR = 1e-12


class ChannelRankError(ValueError):
    """Channel is numerically rank deficient for zero forcing."""


class DegenerateScalingError(RuntimeError):
    """MMSE gain collapsed below the recovery floor (pathological instance)."""


class SolverFailure(RuntimeError):
    """Embedded SOCP solve did not reach an optimal certificate."""

    def __init__(self, design, solution):
        super().__init__(f"{design} solve finished with status {solution.status.value}")
        self.design = design
        self.solution = solution


@dataclass(frozen=True)
class PrecoderInput:
    """Channel H (K x M), unit-modulus symbol vector s (K), per-antenna power
    cap, complex noise variance per user, and the constellation half-aperture
    theta = pi/order."""
    H: np.ndarray
    s: np.ndarray
    power_limit: float
    noise_var: float
    theta: float

    def __init__(self, H, s, power_limit, noise_var, theta):
        H = np.ascontiguousarray(H, dtype=np.complex128)
        s = np.ascontiguousarray(s, dtype=np.complex128).ravel()
        if H.ndim != 2 or H.shape[0] != s.size or min(H.shape) < 1:
            raise ValueError("channel must be K x M with K matching the symbol count")
        if power_limit <= 0:
            raise ValueError("power_limit must be positive")
        if noise_var < 0:
            raise ValueError("noise_var must be nonnegative")
        if not 0 < theta <= np.pi / 2:
            raise ValueError("theta must lie in (0, pi/2]")
        if np.any(np.abs(np.abs(s) - 1.0) > 1e-9):
            raise ValueError("symbols must be unit modulus (PSK)")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "power_limit", float(power_limit))
        object.__setattr__(self, "noise_var", float(noise_var))
        object.__setattr__(self, "theta", float(theta))

    @property
    def users(self):
        return self.H.shape[0]

    @property
    def antennas(self):
        return self.H.shape[1]


@dataclass
class PrecodeResult:
    x: np.ndarray
    epsilon: Optional[float] = None     # MMDDT minimum threshold distance at x
    beta: Optional[float] = None        # MMSE receiver gain
    objective: Optional[float] = None   # design objective value at the optimum
    solution: Optional[ConicSolution] = None


def antenna_powers(x):
    return np.abs(np.asarray(x)) ** 2


def threshold_margins(H, s, x, theta):
    """Per-user distance of the noiseless receive point to its decision
    threshold: eps_k = Re{w_k} sin(theta) - |Im{w_k}| cos(theta) with
    w = diag(conj(s)) H x."""
    w = rotate_channel(H, s) @ np.asarray(x, dtype=np.complex128).ravel()
    return w.real * np.sin(theta) - np.abs(w.imag) * np.cos(theta)


def mmse_objective(H, s, noise_var, x, beta):
    """Shifted mean squared error beta^2 ||Hx||^2 - 2 beta Re{(Hx)^H s}
    + beta^2 K sigma^2 (the full MSE minus the constant E{s's} = K)."""
    y = np.asarray(H) @ np.asarray(x).ravel()
    s = np.asarray(s).ravel()
    return float(beta ** 2 * (np.vdot(y, y).real + s.size * noise_var)
                 - 2.0 * beta * np.vdot(y, s).real)


def best_gain(H, s, noise_var, x):
    """Gain minimizing :func:`mmse_objective` for a fixed transmit vector."""
    y = np.asarray(H) @ np.asarray(x).ravel()
    s = np.asarray(s).ravel()
    denom = np.vdot(y, y).real + s.size * noise_var
    if denom <= 0.0:
        return 0.0
    return max(0.0, np.vdot(y, s).real / denom)


# ---------------------------------------------------------------------------
# zero forcing
# ---------------------------------------------------------------------------

def zf_spapc(inp):
    """Pseudo-inverse direction scaled to put the loudest antenna at the cap.

    Requires full row rank (singular values below 1e-10 of the largest are
    treated as zero); the received vector is then a positive real multiple
    of s.
    """
    U, sv, Vh = np.linalg.svd(inp.H, full_matrices=False)
    rank = int(np.sum(sv > _RANK_CUTOFF * sv[0]))
    if rank < inp.users:
        raise ChannelRankError(
            f"channel rank {rank} < {inp.users} users; zero forcing undefined")
    w = Vh.conj().T[:, :rank] @ ((U.conj().T @ inp.s)[:rank] / sv[:rank])
    peak = np.abs(w).max()
    x = np.sqrt(inp.power_limit) * w / peak
    eps = float(threshold_margins(inp.H, inp.s, x, inp.theta).min())
    return PrecodeResult(x=x, epsilon=eps)


# ---------------------------------------------------------------------------
# MMDDT (non-strict constructive interference)
# ---------------------------------------------------------------------------

def build_mmddt_socp(inp):
    """Max-min threshold distance as a standard-form SOCP.

    Variable u = [eps, x_r] (dimension 2M+1, x_r interleaved).  For each
    user the |Im| split of the threshold distance gives two rows
        eps - (Re{w_k} sin(theta) -/+ Im{w_k} cos(theta)) <= 0,
    i.e. 2K linear inequalities, plus one power cone per antenna
    ||(x_r[2m], x_r[2m+1])|| <= sqrt(power_limit).
    """
    M = inp.antennas
    n = 2 * M + 1
    rr = to_real_channel(rotate_channel(inp.H, inp.s))
    re_rows, im_rows = rr[0::2], rr[1::2]
    sin_t, cos_t = np.sin(inp.theta), np.cos(inp.theta)

    linear = []
    for sign in (+1.0, -1.0):
        block = -sin_t * re_rows + sign * cos_t * im_rows
        for k in range(inp.users):
            g = np.empty(n)
            g[0] = 1.0
            g[1:] = block[k]
            linear.append(LinearInequality(g, 0.0))

    cones = [_antenna_cone(n, 1 + 2 * m, np.zeros(n), np.sqrt(inp.power_limit))
             for m in range(M)]
    c = np.zeros(n)
    c[0] = -1.0
    return ConicProblem(n, c, cones=cones, linear=linear)


def mmddt_spapc(inp, config=None):
    problem = build_mmddt_socp(inp)
    sol = solve(problem, config or SolverConfig())
    if sol.status is not ConicStatus.OPTIMAL:
        raise SolverFailure("mmddt", sol)
    x = to_complex(sol.u_opt[1:])
    eps = float(threshold_margins(inp.H, inp.s, x, inp.theta).min())
    return PrecodeResult(x=x, epsilon=eps, objective=-sol.objective_value, solution=sol)


# ---------------------------------------------------------------------------
# MMSE under the per-antenna cap
# ---------------------------------------------------------------------------

def build_mmse_socp(inp):
    """MMSE design as a standard-form SOCP in u = [beta, x_s, t] (dim 2M+2).

    After substituting x_s = beta * x_r the shifted MSE is
    v' Q v + p' v with v = [beta, x_s], Q = blkdiag(K*sigma^2, Hr'Hr) and
    p = [0; -2 Hr' s_r]; the epigraph variable t turns the quadratic into
    the rotated cone ||(L v, t)|| <= t + 1 with L the PSD square root of Q
    (objective p'v + 2t, offset by +1 from the true value).  Per-antenna
    cones become ||(x_s[2m], x_s[2m+1])|| <= sqrt(power_limit) * beta and
    one linear row enforces beta >= 0.
    """
    M = inp.antennas
    n = 2 * M + 2
    Hr = to_real_channel(inp.H)
    sr = to_real(inp.s)
    noise_energy = inp.users * inp.noise_var    # E{w_r' w_r}, 2K halves of sigma^2/2

    c = np.empty(n)
    c[0] = 0.0
    c[1:-1] = -2.0 * (Hr.T @ sr)
    c[-1] = 2.0

    b_ant = np.zeros(n)
    b_ant[0] = np.sqrt(inp.power_limit)
    cones = [_antenna_cone(n, 1 + 2 * m, b_ant, 0.0) for m in range(M)]

    A_big = np.zeros((n, n))
    A_big[0, 0] = np.sqrt(noise_energy)
    A_big[1:-1, 1:-1] = _sqrt_psd(Hr.T @ Hr)
    A_big[-1, -1] = 1.0
    b_big = np.zeros(n)
    b_big[-1] = 1.0
    cones.append(SecondOrderCone(A_big, b_big, 1.0))

    g = np.zeros(n)
    g[0] = -1.0
    return ConicProblem(n, c, cones=cones, linear=[LinearInequality(g, 0.0)])


def mmse_spapc(inp, config=None):
    problem = build_mmse_socp(inp)
    sol = solve(problem, config or SolverConfig())
    if sol.status is not ConicStatus.OPTIMAL:
        raise SolverFailure("mmse", sol)
    beta = float(sol.u_opt[0])
    if beta < _BETA_FLOOR:
        raise DegenerateScalingError(f"optimal gain beta = {beta:.3e} below recovery floor")
    x = to_complex(sol.u_opt[1:-1] / beta)
    # epigraph cone is tight at the optimum: shifted MSE = p'v + 2t + 1
    return PrecodeResult(x=x, beta=beta, objective=float(sol.objective_value) + 1.0,
                         solution=sol)


# ---------------------------------------------------------------------------
# linear MMSE baseline (average total power constraint)
# ---------------------------------------------------------------------------

def lmmse_tpc(inp, total_energy):
    """Classical transmit Wiener filter x = g * F s with
    F = H^H (H H^H + (K sigma^2 / E) I)^-1 and g normalizing the *ensemble*
    transmit power E{||x||^2} = E over unit-power symbols.  Baseline only:
    individual antennas may exceed the per-antenna cap.
    """
    if total_energy <= 0:
        raise ValueError("total_energy must be positive")
    K = inp.users
    gram = inp.H @ inp.H.conj().T + (K * inp.noise_var / total_energy) * np.eye(K)
    try:
        F = inp.H.conj().T @ np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"regularized Gram matrix singular (noise_var={inp.noise_var}): {exc}")
    g = np.sqrt(total_energy) / np.linalg.norm(F, "fro")
    return PrecodeResult(x=g * (F @ inp.s))


# ---------------------------------------------------------------------------

def _antenna_cone(n, col, b, d):
    """Cone selecting one antenna's interleaved (Re, Im) pair."""
    A = np.zeros((2, n))
    A[0, col] = 1.0
    A[1, col + 1] = 1.0
    return SecondOrderCone(A, b, d)


def _sqrt_psd(mat):
    """Symmetric PSD square root via eigendecomposition; tiny negative
    eigenvalues from roundoff clamp to zero."""
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T
