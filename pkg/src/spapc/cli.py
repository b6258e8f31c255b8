"""Command-line front end.

Subcommands:
  sweep      Monte Carlo BER sweep -> CSV (+ companion gnuplot script)
  solve-one  precode a single instance and print the solution details
  validate   embedded fast invariant suite (exit 0 iff everything passes)
  bench      time the solver kernels on the numba and numpy backends

`sweep` writes rows `design,snr_db,trials,bits,bit_errors,ber,mean_iterations,
failures` after `# run_manifest:` comment lines echoing the full effective
configuration; byte-identical output for a fixed seed regardless of worker
count.  Config may come from a JSON file (--config) with flags overriding
file values.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .channel import DESIGNS, BerRecord, SimConfig, SweepError, run_sweep, snr_to_noise_var, trial_rng, gen_channel
from .conic import ConicProblem, SecondOrderCone, SolverConfig, check_kkt, constraint_violations
from .embedding import to_complex, to_real, to_real_channel
from .modulation import bits_to_symbols, make_constellation
from .precoders import (PrecoderInput, antenna_powers, lmmse_tpc, mmddt_spapc, mmse_spapc,
                        threshold_margins, zf_spapc)
from .solver import solve

CSV_HEADER = "design,snr_db,trials,bits,bit_errors,ber,mean_iterations,failures"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    # let "--snr -10:2.5:20" through argparse, which would otherwise read the
    # leading dash of the grid as an option prefix
    argv = list(argv)
    for i, tok in enumerate(argv[:-1]):
        if tok == "--snr" and argv[i + 1].startswith("-"):
            argv[i: i + 2] = [f"--snr={argv[i + 1]}"]
            break
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _build_parser():
    parser = argparse.ArgumentParser(prog="spapc",
                                     description="Symbol-level SPAPC precoding toolkit")
    parser.add_argument("--version", action="version", version=f"spapc {__version__}")
    sub = parser.add_subparsers(required=True)

    sw = sub.add_parser("sweep", help="run a Monte Carlo BER sweep and write a CSV")
    sw.add_argument("--config", help="JSON file with any of the flag values")
    sw.add_argument("--users", type=int)
    sw.add_argument("--antennas", type=int)
    sw.add_argument("--psk-order", type=int)
    sw.add_argument("--pa", type=float, help="per-antenna power cap (default 1.0)")
    sw.add_argument("--snr", help="SNR grid in dB as start:step:stop (inclusive)")
    sw.add_argument("--trials", type=int, help="trials per (design, SNR) point")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--precoders", help=f"comma list from {sorted(DESIGNS)}")
    sw.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sw.add_argument("--out", required=True, help="output CSV path")
    sw.set_defaults(func=cmd_sweep)

    so = sub.add_parser("solve-one", help="precode one instance and print the solution")
    so.add_argument("--design", required=True, choices=sorted(DESIGNS))
    so.add_argument("--users", type=int)
    so.add_argument("--antennas", type=int)
    so.add_argument("--psk-order", type=int, default=4)
    so.add_argument("--pa", type=float, default=1.0)
    so.add_argument("--seed", type=int, default=0)
    group = so.add_mutually_exclusive_group()
    group.add_argument("--snr", type=float, help="SNR in dB (converted via M*PA/sigma^2)")
    group.add_argument("--noise-var", type=float)
    so.add_argument("--fixture", help="channel/symbol fixture file instead of a seeded draw")
    so.set_defaults(func=cmd_solve_one)

    va = sub.add_parser("validate", help="run the embedded fast invariant suite")
    va.add_argument("--inject-fault", choices=["constellation"], help=argparse.SUPPRESS)
    va.set_defaults(func=cmd_validate)

    be = sub.add_parser("bench", help="compare solver backends (numba vs numpy)")
    be.add_argument("--antennas", default="8,16,32", help="comma list of array sizes")
    be.add_argument("--repeats", type=int, default=5)
    be.set_defaults(func=cmd_bench)
    return parser


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def cmd_sweep(args):
    settings = {}
    if args.config:
        with open(args.config) as f:
            settings.update(json.load(f))
        if "pa" in settings:            # accept the flag spelling in files too
            settings.setdefault("power_limit", settings.pop("pa"))
    overrides = {
        "users": args.users,
        "antennas": args.antennas,
        "psk_order": args.psk_order,
        "power_limit": args.pa,
        "snr": args.snr,
        "trials": args.trials,
        "seed": args.seed,
        "precoders": args.precoders,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})

    missing = [k for k in ("users", "antennas", "psk_order", "snr", "trials") if k not in settings]
    if missing:
        raise ValueError(f"missing required settings: {', '.join(missing)}")
    precoders = settings.get("precoders", "zf,mmddt,mmse,lmmse")
    if isinstance(precoders, str):
        precoders = tuple(p.strip() for p in precoders.split(",") if p.strip())
    cfg = SimConfig(
        users=int(settings["users"]),
        antennas=int(settings["antennas"]),
        psk_order=int(settings["psk_order"]),
        snr_grid_db=parse_snr_grid(str(settings["snr"])),
        trials_per_point=int(settings["trials"]),
        power_limit=float(settings.get("power_limit", 1.0)),
        designs=precoders,
        master_seed=int(settings.get("seed", 0)),
    )

    records = run_sweep(cfg, workers=max(1, args.workers))
    manifest = {
        "version": __version__,
        "users": cfg.users,
        "antennas": cfg.antennas,
        "psk_order": cfg.psk_order,
        "power_limit": cfg.power_limit,
        "snr_grid_db": list(cfg.snr_grid_db),
        "trials_per_point": cfg.trials_per_point,
        "precoders": list(cfg.designs),
        "seed": cfg.master_seed,
    }
    write_csv(args.out, records, manifest)
    write_gnuplot(args.out, cfg.designs)
    print(f"wrote {len(records)} rows to {args.out}")
    return EXIT_OK


def parse_snr_grid(text):
    """Inclusive start:step:stop grid, e.g. '-10:2.5:20' -> 13 points."""
    try:
        start, step, stop = (float(v) for v in text.split(":"))
    except ValueError:
        raise ValueError(f"--snr expects start:step:stop, got {text!r}")
    if step <= 0 or stop < start:
        raise ValueError("--snr requires step > 0 and stop >= start")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return tuple(start + i * step for i in range(count))


def write_csv(path, records, manifest):
    with open(path, "w") as f:
        f.write("# run_manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
        f.write(CSV_HEADER + "\n")
        for r in records:
            f.write(f"{r.design},{r.snr_db!r},{r.trials},{r.bits},{r.bit_errors},"
                    f"{r.ber!r},{r.mean_iterations!r},{r.failures}\n")


def read_csv(path):
    """Parse a sweep CSV back into BerRecord rows (manifest comments skipped)."""
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("design,"):
                continue
            d, snr, trials, bits, errs, ber, mit, fails = line.split(",")
            records.append(BerRecord(d, float(snr), int(trials), int(bits), int(errs),
                                     float(ber), float(mit), int(fails)))
    return records


def write_gnuplot(csv_path, designs):
    """Companion gnuplot script with the log-scale BER axis of the figures."""
    script = csv_path + ".gp"
    lines = [
        f"# gnuplot script for {os.path.basename(csv_path)} (BER vs SNR, log y-axis)",
        'set datafile separator ","',
        'set datafile commentschars "#"',
        "set logscale y",
        'set xlabel "SNR [dB]"',
        'set ylabel "BER"',
        "set grid",
        "set key bottom left",
    ]
    plots = [
        f"  '{os.path.basename(csv_path)}' using 2:(strcol(1) eq \"{d}\" ? column(6) : NaN) "
        f"with linespoints title \"{d}\"" for d in designs
    ]
    lines.append("plot \\\n" + ", \\\n".join(plots))
    with open(script, "w") as f:
        f.write("\n".join(lines) + "\n")
    return script


# ---------------------------------------------------------------------------
# solve-one
# ---------------------------------------------------------------------------

def cmd_solve_one(args):
    constellation = make_constellation(args.psk_order)
    if args.fixture:
        H, s = read_fixture(args.fixture)
        users, antennas = H.shape
    else:
        if not args.users or not args.antennas:
            raise ValueError("--users and --antennas are required without --fixture")
        users, antennas = args.users, args.antennas
        rng = trial_rng(args.seed, args.design, 0, 0)   # stream of sweep trial 0
        bits = rng.integers(0, 2, users * constellation.bits_per_symbol)
        s = bits_to_symbols(bits, constellation)
        H = gen_channel(users, antennas, rng)

    if args.noise_var is not None:
        noise_var = args.noise_var
    elif args.snr is not None:
        noise_var = snr_to_noise_var(args.snr, antennas, args.pa)
    else:
        noise_var = snr_to_noise_var(10.0, antennas, args.pa)

    inp = PrecoderInput(H, s, args.pa, noise_var, constellation.half_aperture)
    try:
        if args.design == "zf":
            result = zf_spapc(inp)
        elif args.design == "mmddt":
            result = mmddt_spapc(inp)
        elif args.design == "mmse":
            result = mmse_spapc(inp)
        else:
            result = lmmse_tpc(inp, antennas * args.pa)
    except Exception as exc:  # solver failure, rank deficiency, ...
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    print(f"design={args.design} users={users} antennas={antennas} "
          f"psk_order={args.psk_order} power_limit={args.pa} noise_var={noise_var:.6g}")
    print(f"{'antenna':>7s} {'|x_m|':>12s} {'phase[rad]':>12s} {'power':>12s}")
    powers = antenna_powers(result.x)
    for m, xm in enumerate(result.x):
        print(f"{m:7d} {abs(xm):12.6f} {np.angle(xm):12.6f} {powers[m]:12.6f}")
    print(f"max antenna power: {powers.max():.9f}")
    margins = threshold_margins(H, s, result.x, constellation.half_aperture)
    print(f"min threshold distance eps(x): {margins.min():.9f}")
    if result.epsilon is not None:
        print(f"epsilon_opt: {result.epsilon:.9f}")
    if result.beta is not None:
        print(f"beta_opt: {result.beta:.9f}")
    if result.solution is not None:
        sol = result.solution
        print(f"solver: status={sol.status.value} iterations={sol.iterations} "
              f"gap={sol.duality_gap:.3e} primal={sol.primal_residual:.3e} "
              f"dual={sol.dual_residual:.3e}")
    return EXIT_OK


def write_fixture(path, H, s):
    """Channel/symbol fixture: 'K M' header, K rows of re/im pairs for H,
    then one row of re/im pairs for s."""
    H = np.asarray(H, dtype=np.complex128)
    s = np.asarray(s, dtype=np.complex128).ravel()
    with open(path, "w") as f:
        f.write(f"{H.shape[0]} {H.shape[1]}\n")
        for row in H:
            f.write(" ".join(f"{float(v.real)!r} {float(v.imag)!r}" for v in row) + "\n")
        f.write(" ".join(f"{float(v.real)!r} {float(v.imag)!r}" for v in s) + "\n")


def read_fixture(path):
    with open(path) as f:
        rows = [ln.split() for ln in f if ln.strip() and not ln.lstrip().startswith("#")]
    K, M = int(rows[0][0]), int(rows[0][1])
    if len(rows) != K + 2:
        raise ValueError(f"fixture must have {K} channel rows plus a symbol row")
    def pairs(tokens, n):
        vals = [float(t) for t in tokens]
        if len(vals) != 2 * n:
            raise ValueError("fixture row has wrong pair count")
        return np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    H = np.array([pairs(rows[1 + k], M) for k in range(K)])
    s = pairs(rows[K + 1], K)
    return H, s


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args):
    failures = run_validation(corrupt_constellation=args.inject_fault == "constellation")
    if failures:
        for item in failures:
            print(f"FAIL {item}")
        print(f"validation failed: {len(failures)} check(s)")
        return EXIT_RUNTIME
    print("validation passed")
    return EXIT_OK


def run_validation(corrupt_constellation=False):
    """Fast invariant suite (seconds, not minutes); returns failure strings."""
    failures = []
    rng = np.random.default_rng(2024)

    # embedding round trips and channel commutation
    for _ in range(200):
        v = rng.normal(size=8) + 1j * rng.normal(size=8)
        if not np.array_equal(to_complex(to_real(v)), v):
            failures.append("embedding round trip")
            break
    for _ in range(50):
        K, M = rng.integers(1, 9, size=2)
        H = rng.normal(size=(K, M)) + 1j * rng.normal(size=(K, M))
        x = rng.normal(size=M) + 1j * rng.normal(size=M)
        if np.abs(to_real_channel(H) @ to_real(x) - to_real(H @ x)).max() > 1e-12:
            failures.append("channel embedding commutation")
            break

    # constellation geometry and Gray adjacency
    for order in (2, 4, 8, 16):
        c = make_constellation(order)
        points = c.points.copy()
        if corrupt_constellation and order == 4:
            points = points * np.exp(1j * np.linspace(0, 0.05, order))  # test hook
        ok = np.all(np.abs(np.abs(points) - 1) < 1e-12)
        spacing = np.angle(points * np.conj(np.roll(points, 1)))
        ok &= np.allclose(np.abs(spacing), 2 * np.pi / order, atol=1e-9)
        adj = c.gray_codes ^ np.roll(c.gray_codes, 1)
        ok &= np.all(np.array([bin(v).count("1") for v in adj]) == 1)
        if not ok:
            failures.append(f"constellation geometry/Gray order={order}")

    # solver on canned problems with independent KKT re-check
    box = ConicProblem(1, [-1.0], cones=[SecondOrderCone(np.eye(1), np.zeros(1), 1.0)])
    disk = ConicProblem(2, [1.0, 0.0], cones=[SecondOrderCone(np.eye(2), np.zeros(2), 1.0)])
    for name, prob, expect in (("box", box, -1.0), ("disk", disk, -1.0)):
        sol = solve(prob)
        residuals = check_kkt(prob, sol)
        if sol.status.value != "optimal" or max(residuals) > 1e-8 \
                or abs(sol.objective_value - expect) > 1e-6:
            failures.append(f"solver canned problem {name}")

    # SPAPC feasibility and MMDDT dominance on random instances
    c4 = make_constellation(4)
    for t in range(50):
        K = int(rng.integers(2, 7))
        M = int(rng.integers(K, 10))
        H = (rng.normal(size=(K, M)) + 1j * rng.normal(size=(K, M))) / np.sqrt(2)
        s = bits_to_symbols(rng.integers(0, 2, 2 * K), c4)
        inp = PrecoderInput(H, s, 1.0, 0.5, c4.half_aperture)
        rz = zf_spapc(inp)
        rd = mmddt_spapc(inp)
        rm = mmse_spapc(inp)
        for nm, res in (("zf", rz), ("mmddt", rd), ("mmse", rm)):
            if antenna_powers(res.x).max() > 1.0 + 1e-6:
                failures.append(f"SPAPC violation {nm} instance {t}")
        if rd.epsilon < rz.epsilon - 1e-8:
            failures.append(f"MMDDT dominance instance {t}")
    return failures


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args):
    from .bench import run_benchmark, format_table
    sizes = tuple(int(v) for v in args.antennas.split(","))
    rows = run_benchmark(sizes, repeats=args.repeats)
    print(format_table(rows))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
