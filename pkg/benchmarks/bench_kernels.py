"""Compare the numba kernels with their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is timed on inputs shaped like one layer of a 2-D scatter
(N=256, a=16, M=4). A second section times a whole ``scatter`` call under
each backend; that needs a fresh interpreter per backend because the choice
is made at import time, so it runs through ``subprocess``.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from fourier_scattering import _kernels as k
from fourier_scattering.frame import LatticeSpec, build_frame, truncation_set

_SCATTER = """
import json, time, numpy as np
from fourier_scattering import LatticeSpec, build_frame, scatter, _kernels
f = np.random.default_rng(0).standard_normal((128, 128))
frame = build_frame(LatticeSpec(2, 128, 16))
scatter(f, frame, M=2, K=1)
t = time.perf_counter()
scatter(f, frame, M=2, K=2, mirror_halving=True, keep_coefficients=False)
print(json.dumps({"backend": _kernels.BACKEND, "seconds": time.perf_counter() - t}))
"""


def _inputs():
    rng = np.random.default_rng(0)
    frame = build_frame(LatticeSpec(2, 256, 16))
    members = truncation_set(frame.lattice, 4).members
    centers = np.array([frame.block_center(p) for p in members], dtype=np.int64)
    orr, occ = frame.block_offsets
    src, flip, dest = k.block_tables((256, 256), centers, orr, occ, True)
    spec = rng.standard_normal(256 * 129) + 1j * rng.standard_normal(256 * 129)
    power = np.abs(spec.reshape(1, -1)) ** 2
    power = np.repeat(power, 8, axis=0)
    weights = frame.block.ravel()
    qidxs = np.arange(len(members), dtype=np.int64)
    out = np.zeros((len(members), 256 * 256), complex)
    img = rng.standard_normal((256, 256))
    disp = 3 * rng.standard_normal((2, 256, 256))
    return dict(power=power, src=src, flip=flip, dest=dest, spec=spec, weights=weights,
                qidxs=qidxs, out=out, img=img, disp=disp)


def bench_kernels(repeat):
    x = _inputs()
    cases = {
        "block_energies": lambda impl: impl(x["power"], x["src"], x["weights"] ** 2),
        "gather_blocks": lambda impl: impl(x["spec"], x["src"], x["flip"], x["dest"],
                                           x["weights"], x["qidxs"], x["out"]),
        "bilinear_warp": lambda impl: impl(x["img"], x["disp"][0], x["disp"][1]),
    }
    rows = []
    for name, call in cases.items():
        numpy_impl = getattr(k, f"{name}_numpy")
        t_np = min(timeit.repeat(lambda: call(numpy_impl), number=1, repeat=repeat))
        if k._HAVE_NUMBA:
            numba_impl = getattr(k, f"{name}_numba")
            call(numba_impl)  # compile
            t_nb = min(timeit.repeat(lambda: call(numba_impl), number=1, repeat=repeat))
        else:
            t_nb = float("nan")
        rows.append((name, t_np, t_nb))
    return rows


def bench_scatter():
    out = {}
    for label, flag in (("numba", None), ("numpy", "1")):
        env = dict(os.environ)
        env.pop("FOURIER_SCATTERING_DISABLE_NUMBA", None)
        if flag:
            env["FOURIER_SCATTERING_DISABLE_NUMBA"] = flag
        res = subprocess.run([sys.executable, "-c", _SCATTER], env=env, check=True,
                             capture_output=True, text=True)
        out[label] = json.loads(res.stdout)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}")
    for name, t_np, t_nb in bench_kernels(args.repeat):
        print(f"{name:<16}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}")
    print()
    res = bench_scatter()
    for label in ("numba", "numpy"):
        print(f"scatter 128x128, a=16, M=2, K=2 [{res[label]['backend']}]: "
              f"{res[label]['seconds']:.2f}s")


if __name__ == "__main__":
    main()
