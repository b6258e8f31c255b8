"""Seeded Rayleigh-fading Monte Carlo BER simulator.

Every trial draws an independent channel, symbol vector and noise vector
from its own counter-based RNG stream: Philox keyed by
SeedSequence(master_seed, spawn_key=(design_index, snr_index, trial_index)).
Streams therefore depend only on the (master_seed, design, snr point, trial)
coordinates, never on execution order, so a sweep aggregates to identical
results for any worker count.  The parallel reduction only sums integers
and maxes floats, keeping the output bitwise reproducible.

Trials whose embedded solve does not certify optimality are excluded from
the BER numerator and denominator and counted as failures; a sweep refuses
to report if failures exceed 0.1% of the requested trials.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicStatus, SolverConfig, check_kkt
from .modulation import bits_to_symbols, count_bit_errors, detect_symbols, make_constellation
from .precoders import (PrecoderInput, SolverFailure, build_mmddt_socp, build_mmse_socp,
                        lmmse_tpc, mmddt_spapc, mmse_spapc, zf_spapc)

__all__ = [
    "DESIGNS",
    "SimConfig",
    "TrialOutcome",
    "BerRecord",
    "SweepError",
    "snr_to_noise_var",
    "gen_channel",
    "add_awgn",
    "trial_rng",
    "run_trial",
    "run_sweep",
]

# fixed design indices so a design's trial streams never depend on which
# other designs a sweep happens to request
DESIGNS = {"zf": 0, "mmddt": 1, "mmse": 2, "lmmse": 3}

_FAILURE_BUDGET = 1e-3


class SweepError(RuntimeError):
    """Solver failures exceeded the sweep's failure budget."""


@dataclass(frozen=True)
class SimConfig:
    users: int
    antennas: int
    psk_order: int
    snr_grid_db: tuple
    trials_per_point: int = 10_000
    power_limit: float = 1.0
    designs: tuple = ("zf", "mmddt", "mmse", "lmmse")
    master_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    verify_kkt: bool = False

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(v) for v in self.snr_grid_db))
        object.__setattr__(self, "designs", tuple(self.designs))
        if self.users < 1 or self.antennas < 1:
            raise ValueError("users and antennas must be >= 1")
        if self.psk_order < 2 or self.psk_order & (self.psk_order - 1):
            raise ValueError("psk_order must be a power of two >= 2")
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if not self.snr_grid_db or not all(math.isfinite(v) for v in self.snr_grid_db):
            raise ValueError("snr_grid_db must be nonempty finite values")
        if self.power_limit <= 0:
            raise ValueError("power_limit must be positive")
        unknown = [d for d in self.designs if d not in DESIGNS]
        if unknown or not self.designs:
            raise ValueError(f"unknown designs {unknown}; choose from {sorted(DESIGNS)}")


@dataclass
class TrialOutcome:
    bit_errors: int
    bits_sent: int
    solver_iterations: int
    solve_status: str
    kkt_max: float = 0.0


@dataclass(frozen=True)
class BerRecord:
    design: str
    snr_db: float
    trials: int          # trials included in the BER (failures excluded)
    bits: int
    bit_errors: int
    ber: float
    mean_iterations: float
    failures: int
    max_kkt_residual: float = 0.0   # diagnostics; not part of the CSV schema


def snr_to_noise_var(snr_db, antennas, power_limit):
    """Noise variance for SNR = antennas * power_limit / sigma_w^2.

    Extreme SNRs saturate gracefully (underflow to exactly 0 rather than
    overflowing), so +inf dB means a noiseless link.
    """
    return float(antennas * power_limit * np.power(10.0, -np.float64(snr_db) / 10.0))


def gen_channel(users, antennas, rng):
    """i.i.d. CN(0,1) Rayleigh-fading channel draw (unit large-scale gain)."""
    scale = np.sqrt(0.5)
    return scale * (rng.standard_normal((users, antennas))
                    + 1j * rng.standard_normal((users, antennas)))


def add_awgn(y, noise_var, rng):
    """y plus i.i.d. CN(0, noise_var) noise (sigma^2/2 per real dimension)."""
    y = np.asarray(y, dtype=np.complex128)
    if noise_var == 0.0:
        return y.copy()
    scale = np.sqrt(noise_var / 2.0)
    return y + scale * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))


def trial_rng(master_seed, design, snr_index, trial_index):
    """Counter-based per-trial stream: Philox seeded by
    SeedSequence(master_seed, spawn_key=(design_index, snr_index, trial_index))."""
    ss = np.random.SeedSequence(master_seed,
                                spawn_key=(DESIGNS[design], snr_index, trial_index))
    return np.random.Generator(np.random.Philox(ss))


def run_trial(cfg, design, snr_index, trial_index):
    """One bits -> precode -> channel -> detect -> count round trip."""
    constellation = make_constellation(cfg.psk_order)
    noise_var = snr_to_noise_var(cfg.snr_grid_db[snr_index], cfg.antennas, cfg.power_limit)
    rng = trial_rng(cfg.master_seed, design, snr_index, trial_index)

    bits = rng.integers(0, 2, cfg.users * constellation.bits_per_symbol)
    s = bits_to_symbols(bits, constellation)
    H = gen_channel(cfg.users, cfg.antennas, rng)
    inp = PrecoderInput(H, s, cfg.power_limit, noise_var, constellation.half_aperture)

    iterations = 0
    kkt_max = 0.0
    try:
        if design == "zf":
            result = zf_spapc(inp)
        elif design == "mmddt":
            result = mmddt_spapc(inp, cfg.solver)
        elif design == "mmse":
            result = mmse_spapc(inp, cfg.solver)
        else:
            result = lmmse_tpc(inp, cfg.antennas * cfg.power_limit)
    except SolverFailure as fail:
        return TrialOutcome(0, 0, fail.solution.iterations, fail.solution.status.value)

    if result.solution is not None:
        iterations = result.solution.iterations
        if cfg.verify_kkt:
            problem = build_mmddt_socp(inp) if design == "mmddt" else build_mmse_socp(inp)
            kkt_max = max(check_kkt(problem, result.solution))

    z = add_awgn(H @ result.x, noise_var, rng)
    detected = detect_symbols(z, constellation)
    errors = count_bit_errors(detected, bits, constellation)
    return TrialOutcome(errors, bits.size, iterations, ConicStatus.OPTIMAL.value, kkt_max)


def _chunk_sums(cfg, design, snr_index, lo, hi):
    """Aggregate [lo, hi) trials; integer sums + float max keep the parallel
    reduction order-independent."""
    errors = bits = iters = ok = failures = 0
    kkt_max = 0.0
    for t in range(lo, hi):
        out = run_trial(cfg, design, snr_index, t)
        if out.bits_sent == 0:
            failures += 1
            continue
        ok += 1
        errors += out.bit_errors
        bits += out.bits_sent
        iters += out.solver_iterations
        kkt_max = max(kkt_max, out.kkt_max)
    return design, snr_index, errors, bits, iters, ok, failures, kkt_max


def run_sweep(cfg, workers=1):
    """BER for every (design, SNR point) of the config.

    Returns one BerRecord per pair, ordered as configured.  Output is
    bitwise identical for any worker count.
    """
    tasks = []
    chunk = max(1, min(cfg.trials_per_point, 512))
    for design in cfg.designs:
        for si in range(len(cfg.snr_grid_db)):
            for lo in range(0, cfg.trials_per_point, chunk):
                tasks.append((cfg, design, si, lo, min(lo + chunk, cfg.trials_per_point)))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_chunk_sums_star, tasks, chunksize=1))
    else:
        partials = [_chunk_sums(*t) for t in tasks]

    acc = {}
    for design, si, errors, bits, iters, ok, failures, kkt_max in partials:
        cur = acc.setdefault((design, si), [0, 0, 0, 0, 0, 0.0])
        cur[0] += errors
        cur[1] += bits
        cur[2] += iters
        cur[3] += ok
        cur[4] += failures
        cur[5] = max(cur[5], kkt_max)

    records = []
    total_failures = 0
    for design in cfg.designs:
        for si, snr_db in enumerate(cfg.snr_grid_db):
            errors, bits, iters, ok, failures, kkt_max = acc[(design, si)]
            total_failures += failures
            records.append(BerRecord(
                design=design,
                snr_db=snr_db,
                trials=ok,
                bits=bits,
                bit_errors=errors,
                ber=errors / bits if bits else math.nan,
                mean_iterations=iters / ok if ok else 0.0,
                failures=failures,
                max_kkt_residual=kkt_max,
            ))

    requested = len(cfg.designs) * len(cfg.snr_grid_db) * cfg.trials_per_point
    if total_failures > _FAILURE_BUDGET * requested:
        raise SweepError(
            f"{total_failures} solver failures out of {requested} trials "
            f"exceeds the {_FAILURE_BUDGET:.1%} budget")
    return records


def _chunk_sums_star(args):
    return _chunk_sums(*args)
