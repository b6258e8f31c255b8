import numpy as np
import pytest

from spapc.conic import SolverConfig
from spapc.embedding import rotate_channel, to_real, to_real_channel
from spapc.modulation import bits_to_symbols, make_constellation
from spapc.precoders import (ChannelRankError, DegenerateScalingError, PrecoderInput,
                             antenna_powers, best_gain, build_mmddt_socp, build_mmse_socp,
                             lmmse_tpc, mmddt_spapc, mmse_objective, mmse_spapc,
                             threshold_margins, zf_spapc)

C4 = make_constellation(4)
THETA = C4.half_aperture


def rayleigh(rng, K, M):
    return (rng.normal(size=(K, M)) + 1j * rng.normal(size=(K, M))) / np.sqrt(2)


def qpsk(rng, K):
    return bits_to_symbols(rng.integers(0, 2, 2 * K), C4)


def make_input(rng, K, M, noise_var=0.5, power=1.0):
    return PrecoderInput(rayleigh(rng, K, M), qpsk(rng, K), power, noise_var, THETA)


# ---------------------------------------------------------------------------
# zero forcing
# ---------------------------------------------------------------------------

def test_zf_identity_channel():
    s = qpsk(np.random.default_rng(0), 4)
    inp = PrecoderInput(np.eye(4, dtype=complex), s, 1.0, 0.1, THETA)
    r = zf_spapc(inp)
    assert np.allclose(r.x, s, atol=1e-12)
    assert np.allclose(antenna_powers(r.x), 1.0, atol=1e-12)


def test_zf_peak_power_exact():
    rng = np.random.default_rng(30)
    for _ in range(20):
        inp = make_input(rng, 3, 6, power=1.7)
        r = zf_spapc(inp)
        assert abs(antenna_powers(r.x).max() - 1.7) < 1e-12


def test_zf_direction_matches_symbols():
    rng = np.random.default_rng(31)
    for _ in range(10):
        inp = make_input(rng, 4, 8)
        r = zf_spapc(inp)
        y = inp.H @ r.x
        assert np.linalg.norm(y / np.linalg.norm(y) - inp.s / np.linalg.norm(inp.s)) < 1e-10
        # received vector is a positive real multiple of s
        c = y / inp.s
        assert np.allclose(c.imag, 0.0, atol=1e-10) and np.all(c.real > 0)


def test_zf_rank_deficient_raises():
    rng = np.random.default_rng(32)
    H = rayleigh(rng, 3, 5)
    H[2] = H[0] + H[1]                    # exactly dependent rows
    inp = PrecoderInput(H, qpsk(rng, 3), 1.0, 0.1, THETA)
    with pytest.raises(ChannelRankError):
        zf_spapc(inp)


# ---------------------------------------------------------------------------
# MMDDT
# ---------------------------------------------------------------------------

def test_mmddt_problem_structure():
    rng = np.random.default_rng(33)
    inp = make_input(rng, 3, 4)
    p = build_mmddt_socp(inp)
    assert p.n == 9                       # 2M + 1
    assert len(p.linear) == 6             # two threshold rows per user
    assert len(p.cones) == 4              # one power cone per antenna
    assert np.array_equal(p.c, [-1.0] + [0.0] * 8)
    for m, cone in enumerate(p.cones):
        assert cone.d == np.sqrt(inp.power_limit) and not cone.b.any()
        want = np.zeros((2, 9))
        want[0, 1 + 2 * m] = 1.0
        want[1, 2 + 2 * m] = 1.0
        assert np.array_equal(cone.A, want)


def test_mmddt_rows_reproduce_threshold_geometry():
    # row entries equal the four rotated-channel combinations
    # (Im cos - Re sin | Re cos + Im sin) and (-Im cos - Re sin | Im sin - Re cos)
    # paired per antenna against the interleaved layout
    rng = np.random.default_rng(34)
    inp = make_input(rng, 3, 4)
    p = build_mmddt_socp(inp)
    rot = rotate_channel(inp.H, inp.s)
    sin_t, cos_t = np.sin(THETA), np.cos(THETA)
    K, M = 3, 4
    for k in range(K):
        upper, lower = p.linear[k].g, p.linear[K + k].g
        assert upper[0] == 1.0 and lower[0] == 1.0
        for m in range(M):
            re_h, im_h = rot[k, m].real, rot[k, m].imag
            assert np.isclose(upper[1 + 2 * m], im_h * cos_t - re_h * sin_t)
            assert np.isclose(upper[2 + 2 * m], re_h * cos_t + im_h * sin_t)
            assert np.isclose(lower[1 + 2 * m], -im_h * cos_t - re_h * sin_t)
            assert np.isclose(lower[2 + 2 * m], im_h * sin_t - re_h * cos_t)


def test_mmddt_rows_evaluate_to_margins():
    # B u at a concrete x reproduces -(Re{w}sin +/- Im{w}cos - eps) per user
    rng = np.random.default_rng(35)
    inp = make_input(rng, 3, 4)
    p = build_mmddt_socp(inp)
    x = rng.normal(size=4) + 1j * rng.normal(size=4)
    eps = 0.123
    u = np.concatenate(([eps], to_real(x)))
    w = rotate_channel(inp.H, inp.s) @ x
    for k in range(3):
        d_minus = w[k].real * np.sin(THETA) - w[k].imag * np.cos(THETA)
        d_plus = w[k].real * np.sin(THETA) + w[k].imag * np.cos(THETA)
        assert np.isclose(p.linear[k].g @ u, eps - d_minus)
        assert np.isclose(p.linear[3 + k].g @ u, eps - d_plus)


def test_mmddt_single_antenna_analytic():
    # rotated receive point sits on the real axis at full power
    inp = PrecoderInput(np.array([[1.0 + 0j]]), np.array([np.exp(3j * np.pi / 4)]),
                        1.0, 0.0, THETA)
    r = mmddt_spapc(inp)
    want = np.sin(np.pi / 4)
    assert abs(r.epsilon - want) < 1e-7
    # fine polar grid over the unit disk confirms the optimum
    ang = np.linspace(0, 2 * np.pi, 721)
    rad = np.linspace(0, 1, 201)
    grid = (rad[:, None] * np.exp(1j * ang[None, :])).ravel()
    margins = (rotate_channel(inp.H, inp.s) @ grid[None, :]).ravel()
    eps_grid = margins.real * np.sin(THETA) - np.abs(margins.imag) * np.cos(THETA)
    assert r.epsilon >= eps_grid.max() - 1e-5


def test_mmddt_identity_channel_decouples():
    rng = np.random.default_rng(36)
    for power in (1.0, 2.5):
        s = qpsk(rng, 5)
        inp = PrecoderInput(np.eye(5, dtype=complex), s, power, 0.0, THETA)
        r = mmddt_spapc(inp)
        assert abs(r.epsilon - np.sqrt(power) * np.sin(np.pi / 4)) < 1e-6


def test_mmddt_dominates_zf_margin():
    rng = np.random.default_rng(37)
    for _ in range(50):
        inp = make_input(rng, int(rng.integers(2, 7)), int(rng.integers(6, 11)))
        rz = zf_spapc(inp)
        rd = mmddt_spapc(inp)
        assert rd.epsilon >= rz.epsilon - 1e-7
        assert abs(-rd.solution.objective_value - rd.epsilon) < 1e-6


# ---------------------------------------------------------------------------
# MMSE
# ---------------------------------------------------------------------------

def test_mmse_problem_structure():
    rng = np.random.default_rng(38)
    inp = make_input(rng, 3, 4)
    p = build_mmse_socp(inp)
    assert p.n == 10                      # 2M + 2
    assert len(p.cones) == 5              # 4 antenna cones + 1 epigraph cone
    assert len(p.linear) == 1
    assert np.array_equal(p.linear[0].g, [-1.0] + [0.0] * 9)
    # objective: [0, -2 Hr' s_r, 2]
    Hr = to_real_channel(inp.H)
    assert p.c[0] == 0.0 and p.c[-1] == 2.0
    assert np.allclose(p.c[1:-1], -2.0 * Hr.T @ to_real(inp.s))
    # antenna cones pick sqrt(P) * beta on the right-hand side
    for m in range(4):
        cone = p.cones[m]
        assert cone.d == 0.0
        assert cone.b[0] == np.sqrt(inp.power_limit) and not cone.b[1:].any()
    # epigraph cone reconstructs blkdiag(K sigma^2, Hr'Hr, 1) through A'A
    big = p.cones[-1]
    assert big.d == 1.0 and big.b[-1] == 1.0 and not big.b[:-1].any()
    gram = big.A.T @ big.A
    assert np.isclose(gram[0, 0], 3 * inp.noise_var)
    assert np.allclose(gram[1:-1, 1:-1], Hr.T @ Hr, atol=1e-10)
    assert np.isclose(gram[-1, -1], 1.0)
    L = big.A[:-1, :-1]
    assert np.allclose(L, L.T, atol=1e-12)          # PSD square root is symmetric
    assert np.all(np.linalg.eigvalsh(L) > -1e-10)


def test_mmse_noise_energy_moment():
    # E{w_r' w_r} = K sigma^2: 2K real parts of variance sigma^2/2 each
    rng = np.random.default_rng(39)
    K, sig2 = 3, 0.7
    draws = rng.normal(scale=np.sqrt(sig2 / 2), size=(200_000, 2 * K))
    emp = np.sum(draws ** 2, axis=1).mean()
    assert abs(emp - K * sig2) / (K * sig2) < 0.01


def test_mmse_zero_noise_still_solves():
    rng = np.random.default_rng(40)
    inp = make_input(rng, 2, 4, noise_var=0.0)
    p = build_mmse_socp(inp)
    assert p.cones[-1].A[0, 0] == 0.0
    r = mmse_spapc(inp)
    assert r.beta > 0
    assert antenna_powers(r.x).max() <= inp.power_limit * (1 + 1e-6)


def test_mmse_scalar_golden_section_oracle():
    sig2 = 1.0
    s = np.array([C4.points[0]])
    inp = PrecoderInput(np.array([[1.0 + 0j]]), s, 1.0, sig2, THETA)
    r = mmse_spapc(inp)

    phi = (np.sqrt(5) - 1) / 2
    def value(g):
        beta = max(0.0, g / (g * g + sig2))
        return mmse_objective(inp.H, inp.s, sig2, g * s, beta)
    a, b = 0.0, 1.0
    for _ in range(120):
        c_, d_ = b - phi * (b - a), a + phi * (b - a)
        if value(c_) < value(d_):
            b = d_
        else:
            a = c_
    g_star = 0.5 * (a + b)
    assert abs(abs(r.x[0]) - g_star) < 1e-5
    assert abs(r.objective - value(g_star)) < 1e-6
    assert abs(np.angle(r.x[0]) - np.angle(s[0])) < 1e-6


def test_mmse_objective_consistency_and_dominance():
    rng = np.random.default_rng(41)
    for _ in range(40):
        K = int(rng.integers(2, 7))
        inp = make_input(rng, K, int(rng.integers(K, 11)))
        rm = mmse_spapc(inp)
        direct = mmse_objective(inp.H, inp.s, inp.noise_var, rm.x, rm.beta)
        assert abs(direct - rm.objective) < 1e-6 * (1 + abs(rm.objective))
        for other in (zf_spapc(inp), mmddt_spapc(inp)):
            beta = best_gain(inp.H, inp.s, inp.noise_var, other.x)
            assert rm.objective <= mmse_objective(inp.H, inp.s, inp.noise_var,
                                                  other.x, beta) + 1e-6


def test_mse_shift_identity():
    # full MSE minus E{s_r's_r} = K equals the shifted objective, exactly
    rng = np.random.default_rng(42)
    inp = make_input(rng, 4, 6)
    x = rng.normal(size=6) + 1j * rng.normal(size=6)
    beta = 0.73
    y = inp.H @ x
    full_mse = (beta ** 2 * (np.vdot(y, y).real + 4 * inp.noise_var)
                - 2 * beta * np.vdot(y, inp.s).real + np.vdot(inp.s, inp.s).real)
    shifted = mmse_objective(inp.H, inp.s, inp.noise_var, x, beta)
    assert abs((full_mse - 4.0) - shifted) < 1e-9


def test_mmse_high_snr_approaches_zf_direction():
    rng = np.random.default_rng(43)
    K = 4
    while True:                          # well-conditioned square channel
        H = rayleigh(rng, K, K)
        if np.linalg.cond(H) < 5:
            break
    s = qpsk(rng, K)
    xz = zf_spapc(PrecoderInput(H, s, 1.0, 0.0, THETA)).x
    angles = []
    for sig2 in (1e-2, 1e-4, 1e-6):
        xm = mmse_spapc(PrecoderInput(H, s, 1.0, sig2, THETA)).x
        cos = abs(np.vdot(xm, xz)) / (np.linalg.norm(xm) * np.linalg.norm(xz))
        angles.append(np.arccos(min(1.0, cos)))
    assert angles[0] > angles[1] > angles[2]
    assert angles[2] < 1e-2


def test_mmse_zero_channel_collapses_gain():
    # with H = 0 the optimum is beta* = 0; the solver lands at an interior
    # point with beta ~ sqrt(gap_tol), still above the hard recovery floor,
    # and the recovered x stays inside the power cap
    inp = PrecoderInput(np.zeros((1, 2), dtype=complex), np.array([C4.points[0]]),
                        1.0, 1.0, THETA)
    r = mmse_spapc(inp)
    assert r.beta < 1e-3
    assert antenna_powers(r.x).max() <= inp.power_limit * (1 + 1e-6)


def test_mmse_degenerate_scaling_guard(monkeypatch):
    # the beta >= 1e-12 recovery floor itself, exercised with a forced iterate
    import spapc.precoders as pre
    inp = make_input(np.random.default_rng(50), 2, 3)
    real = pre.solve

    def squashed(problem, config=None, backend=None):
        sol = real(problem, config, backend)
        sol.u_opt = sol.u_opt.copy()
        sol.u_opt[0] = 1e-13
        return sol

    monkeypatch.setattr(pre, "solve", squashed)
    with pytest.raises(DegenerateScalingError):
        mmse_spapc(inp)


def test_symbol_rotation_covariance():
    rng = np.random.default_rng(44)
    inp = make_input(rng, 3, 5)
    phase = np.exp(2j * np.pi / 4)       # one constellation step
    rotated = PrecoderInput(inp.H, phase * inp.s, inp.power_limit, inp.noise_var, THETA)
    assert np.allclose(zf_spapc(rotated).x, phase * zf_spapc(inp).x, atol=1e-10)
    e0, e1 = mmddt_spapc(inp).epsilon, mmddt_spapc(rotated).epsilon
    assert abs(e0 - e1) <= 1e-6 * (1 + abs(e0))
    o0, o1 = mmse_spapc(inp).objective, mmse_spapc(rotated).objective
    assert abs(o0 - o1) <= 1e-6 * (1 + abs(o0))


# ---------------------------------------------------------------------------
# linear MMSE baseline
# ---------------------------------------------------------------------------

def test_lmmse_matched_filter_limit():
    rng = np.random.default_rng(45)
    H = rayleigh(rng, 3, 6)
    s = qpsk(rng, 3)
    inp = PrecoderInput(H, s, 1.0, 1e6, THETA)
    x = lmmse_tpc(inp, 6.0).x
    mf = H.conj().T @ s
    cos = abs(np.vdot(x, mf)) / (np.linalg.norm(x) * np.linalg.norm(mf))
    assert cos > 1 - 1e-6


def test_lmmse_identity_channel_decouples():
    rng = np.random.default_rng(46)
    s = qpsk(rng, 4)
    inp = PrecoderInput(np.eye(4, dtype=complex), s, 1.0, 0.5, THETA)
    x = lmmse_tpc(inp, 4.0).x
    assert np.allclose(x / x[0], s / s[0], atol=1e-10)   # scaled copy of s


def test_lmmse_ensemble_power_normalization():
    rng = np.random.default_rng(47)
    H = rayleigh(rng, 3, 5)
    total = 5.0
    powers = []
    for _ in range(10_000):
        s = qpsk(rng, 3)
        inp = PrecoderInput(H, s, 1.0, 0.4, THETA)
        powers.append(np.linalg.norm(lmmse_tpc(inp, total).x) ** 2)
    assert abs(np.mean(powers) - total) / total < 0.02


def test_lmmse_rejects_bad_budget():
    rng = np.random.default_rng(48)
    inp = make_input(rng, 2, 3)
    with pytest.raises(ValueError):
        lmmse_tpc(inp, 0.0)


# ---------------------------------------------------------------------------
# input validation
# ---------------------------------------------------------------------------

def test_precoder_input_validation():
    H = np.eye(2, dtype=complex)
    s = qpsk(np.random.default_rng(49), 2)
    with pytest.raises(ValueError):
        PrecoderInput(H, s[:1], 1.0, 0.1, THETA)
    with pytest.raises(ValueError):
        PrecoderInput(H, s, 0.0, 0.1, THETA)
    with pytest.raises(ValueError):
        PrecoderInput(H, s, 1.0, -0.1, THETA)
    with pytest.raises(ValueError):
        PrecoderInput(H, 2.0 * s, 1.0, 0.1, THETA)
