"""Command-line entry point: ``fourier-scattering <subcommand> ...``.

Exit codes: 0 success, 1 failed precondition or check, 2 usage error.
Errors are reported on stderr as one JSON object.
"""

import argparse
import json
import sys
from pathlib import Path


from .analysis import (PreconditionError, WarpField, diffeo_distance, energy_ledger,
                       estimate_decay, threshold_census, translation_distance)
from .frame import (WINDOW_KINDS, ConfigurationError, LatticeSpec, build_frame,
                    build_window_profile, truncation_set, verify_partition)
from .io import FormatError, read_signal, read_tree, write_tree
from .transform import ScatterConfig, ShapeError, scatter

VERIFY_TOL = 1e-9


def _width(value):
    if value.lower() == "full":
        return None
    try:
        M = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'full', got {value!r}")
    if M < 1:
        raise argparse.ArgumentTypeError("M must be >= 1")
    return M


def _shifts(value):
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")


def _frame_args(p, need_n=True):
    p.add_argument("--N", type=int, required=need_n, help="grid points per axis")
    p.add_argument("--a", type=int, required=True, help="lattice spacing in frequency bins")
    p.add_argument("--d", type=int, choices=(1, 2), default=None, help="dimension")
    p.add_argument("--window", choices=WINDOW_KINDS, default="tent")


def _scatter_args(p):
    p.add_argument("--M", type=_width, default=None,
                   help="width (integer, or 'full' for every lattice filter); default full")
    p.add_argument("--depth", type=int, default=2, help="network depth K")
    p.add_argument("--prune-eps", type=float, default=0.0)
    p.add_argument("--mirror-halving", action="store_true",
                   help="compute one path of each mirror pair (real input only)")
    p.add_argument("--threads", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="fourier-scattering",
                                     description="Fourier scattering transform toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scatter", help="compute S_F[M,K] and write a run directory")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("pgm", "raw"), default=None)
    _frame_args(p, need_n=False)
    _scatter_args(p)
    p.add_argument("--downsample", type=int, default=1,
                   help="store every k-th coefficient sample (identities use full resolution)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify-frame", help="check the partition of unity")
    _frame_args(p)
    p.add_argument("--M", type=_width, default=None,
                   help="check the truncated tiling profile for this width")

    p = sub.add_parser("energy", help="energy ledger and decay estimate of a run")
    p.add_argument("--run", required=True)

    p = sub.add_parser("stability", help="translation and warp distances")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("pgm", "raw"), default=None)
    _frame_args(p, need_n=False)
    _scatter_args(p)
    p.add_argument("--shift", type=_shifts, default=[1, 2, 4],
                   help="comma-separated shift lengths along every axis")
    p.add_argument("--warp-amplitude", type=float, default=None,
                   help="amplitude in samples of a sinusoidal warp")
    p.add_argument("--warp-cycles", type=int, default=1)

    p = sub.add_parser("census", help="count coefficients above a norm threshold")
    p.add_argument("--run", required=True)
    p.add_argument("--threshold", type=float, default=0.005)
    p.add_argument("--csv", default=None, help="also write the per-layer table here")
    return parser


def _emit(obj):
    sys.stdout.write(json.dumps(obj, indent=1) + "\n")


def _load_input(args):
    f = read_signal(args.input, args.format)
    d = args.d if args.d is not None else f.ndim
    N = args.N if args.N is not None else f.shape[0]
    if f.ndim != d or any(n != N for n in f.shape):
        raise FormatError(f"{args.input}: dims {list(f.shape)} incompatible with N={N}, d={d}")
    frame = build_frame(LatticeSpec(d, N, args.a), build_window_profile(args.window))
    return f, frame


def _config(args, **extra):
    return ScatterConfig(M=args.M, K=args.depth, prune_eps=args.prune_eps,
                         mirror_halving=args.mirror_halving, threads=args.threads, **extra)


def cmd_scatter(args):
    f, frame = _load_input(args)
    tree = scatter(f, frame, _config(args, downsample=args.downsample))
    manifest = write_tree(tree, args.out, source=args.input)
    _emit({"out": str(Path(args.out)), "nodes": len(manifest["nodes"]),
           "computed_nodes": tree.computed, "layers": args.depth})
    return 0


def cmd_verify_frame(args):
    d = args.d if args.d is not None else 1
    frame = build_frame(LatticeSpec(d, args.N, args.a), build_window_profile(args.window))
    members = None if args.M is None else truncation_set(frame.lattice, args.M)
    report = verify_partition(frame, members)
    _emit({**report.to_json(), "frame": frame.to_json(), "tolerance": VERIFY_TOL})
    return 0 if report.max_deviation <= VERIFY_TOL else 1


def cmd_energy(args):
    tree = read_tree(args.run)
    ledger = energy_ledger(tree)
    frame = build_frame(LatticeSpec(tree.frame_spec["d"], tree.frame_spec["N"],
                                    tree.frame_spec["a"]),
                        tree.frame_spec.get("window_kind", "tent"))
    decay = estimate_decay(ledger, frame)
    _emit({"ledger": ledger.to_json(), "decay": decay.to_json()})
    return 0


def cmd_stability(args):
    f, frame = _load_input(args)
    config = _config(args)
    out = {"translation": []}
    base = scatter(f, frame, config)
    for y in args.shift:
        vec = [y] * frame.lattice.d
        out["translation"].append(translation_distance(f, vec, frame, config, reference=base))
    if args.warp_amplitude is not None:
        field = WarpField.sinusoidal(f.shape, args.warp_amplitude, args.warp_cycles)
        out["warp"] = diffeo_distance(f, field, frame, config)
    _emit(out)
    return 0


def cmd_census(args):
    tree = read_tree(args.run)
    census = threshold_census(tree, args.threshold)
    if args.csv:
        Path(args.csv).write_text(census.to_csv())
    sys.stdout.write(str(census) + "\n")
    return 0


COMMANDS = {
    "scatter": cmd_scatter,
    "verify-frame": cmd_verify_frame,
    "energy": cmd_energy,
    "stability": cmd_stability,
    "census": cmd_census,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, PreconditionError, FormatError, ShapeError,
            FileNotFoundError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
