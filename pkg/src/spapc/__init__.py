"""Symbol-level precoding for the PSK multiuser MIMO downlink under strict
per-antenna power constraints: MMSE / MMDDT / ZF designs, an embedded
second-order cone interior-point solver, and a reproducible Monte Carlo BER
simulator."""

__version__ = "0.1.0"

from .channel import (BerRecord, DESIGNS, SimConfig, TrialOutcome, add_awgn, gen_channel,
                      run_sweep, run_trial, snr_to_noise_var, trial_rng)
from .conic import (ConicProblem, ConicSolution, ConicStatus, LinearInequality,
                    SecondOrderCone, SolverConfig, check_kkt, constraint_violations,
                    dump_problem, load_problem)
from .embedding import rotate_channel, to_complex, to_real, to_real_channel
from .kernels import available_backends, default_backend_name
from .modulation import (PskConstellation, bits_to_symbols, count_bit_errors, detect,
                         detect_symbols, make_constellation, symbols_to_bits)
from .precoders import (ChannelRankError, DegenerateScalingError, PrecodeResult,
                        PrecoderInput, SolverFailure, antenna_powers, best_gain,
                        build_mmddt_socp, build_mmse_socp, lmmse_tpc, mmddt_spapc,
                        mmse_objective, mmse_spapc, threshold_margins, zf_spapc)
from .solver import iteration_count_probe, solve
