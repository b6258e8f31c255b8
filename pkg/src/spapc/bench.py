"""Backend benchmark: same SOCP instances through the numba and numpy kernels.

The hot path of a sweep is the embedded interior-point solve, so the
benchmark times `solve` end to end on representative MMSE and MMDDT
instances (Rayleigh channels, QPSK payloads) and reports per-solve wall
time for each available backend plus the numba speedup.
"""

import time

import numpy as np

from .channel import gen_channel
from .conic import ConicStatus
from .kernels import available_backends
from .modulation import bits_to_symbols, make_constellation
from .precoders import PrecoderInput, build_mmddt_socp, build_mmse_socp
from .solver import solve

__all__ = ["run_benchmark", "format_table"]


def _instances(antennas, seed=1234):
    rng = np.random.default_rng(seed)
    c4 = make_constellation(4)
    users = max(2, antennas // 2)
    H = gen_channel(users, antennas, rng)
    s = bits_to_symbols(rng.integers(0, 2, 2 * users), c4)
    inp = PrecoderInput(H, s, 1.0, antennas / 10.0, c4.half_aperture)
    return (("mmse", build_mmse_socp(inp)), ("mmddt", build_mmddt_socp(inp)))


def run_benchmark(sizes=(8, 16, 32), repeats=5):
    """Rows of (backend, design, antennas, n, ms_per_solve, iterations)."""
    rows = []
    for backend in available_backends():
        for antennas in sizes:
            for design, problem in _instances(antennas):
                sol = solve(problem, backend=backend)   # warm-up / JIT compile
                if sol.status is not ConicStatus.OPTIMAL:
                    raise RuntimeError(f"benchmark instance did not solve: {sol.status}")
                t0 = time.perf_counter()
                for _ in range(repeats):
                    sol = solve(problem, backend=backend)
                ms = (time.perf_counter() - t0) / repeats * 1e3
                rows.append((backend, design, antennas, problem.n, ms, sol.iterations))
    return rows


def format_table(rows):
    lines = [f"{'backend':>8s} {'design':>7s} {'M':>4s} {'n':>5s} "
             f"{'ms/solve':>10s} {'iters':>6s}"]
    for backend, design, antennas, n, ms, iters in rows:
        lines.append(f"{backend:>8s} {design:>7s} {antennas:4d} {n:5d} {ms:10.2f} {iters:6d}")
    numba = {(d, m): ms for b, d, m, _, ms, _ in rows if b == "numba"}
    if numba:
        lines.append("")
        for b, d, m, _, ms, _ in rows:
            if b == "numpy" and (d, m) in numba:
                lines.append(f"numba speedup {d} M={m}: {ms / numba[(d, m)]:.1f}x")
    return "\n".join(lines)
