"""Inner loops of the scattering pipeline.

Every kernel has a numba implementation and a pure-numpy twin with the same
signature. The numba path is used when numba imports cleanly, unless the
environment variable ``FOURIER_SCATTERING_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``. Both paths agree up to summation order.

Filter supports are addressed through flat index tables (see
:func:`block_tables`) so the kernels never do modular arithmetic. Spectra
may be full (``fftn`` layout) or half (``rfftn`` layout); a half-spectrum
table carries a flag for entries read through ``X[-k] = conj(X[k])``.
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "block_tables",
    "block_energies",
    "gather_blocks",
    "bilinear_warp",
    "block_energies_numpy",
    "gather_blocks_numpy",
    "bilinear_warp_numpy",
]


def _numba_requested():
    flag = os.environ.get("FOURIER_SCATTERING_DISABLE_NUMBA", "")
    return flag in ("", "0")


def block_tables(shape2d, centers, offsets_r, offsets_c, half):
    """Flat indices of every filter block on a 2-D grid.

    Returns ``(src, flip, dest)``, each of shape ``(len(centers), B)``:
    ``dest`` indexes the full grid, ``src`` the (possibly half) spectrum,
    ``flip`` marks entries that must be conjugated when read from ``src``.
    """
    n0, n1 = shape2d
    centers = np.asarray(centers, dtype=np.int64)
    rows = (centers[:, 0, None, None] + offsets_r[None, :, None]) % n0
    cols = (centers[:, 1, None, None] + offsets_c[None, None, :]) % n1
    rows, cols = np.broadcast_arrays(rows, cols)
    dest = (rows * n1 + cols).reshape(len(centers), -1)
    if not half:
        return dest.copy(), np.zeros(dest.shape, dtype=np.bool_), dest
    width = n1 // 2 + 1
    flip = cols > n1 // 2
    hr = np.where(flip, (-rows) % n0, rows)
    hc = np.where(flip, n1 - cols, cols)
    src = (hr * width + hc).reshape(len(centers), -1)
    return src, flip.reshape(len(centers), -1), dest


# --------------------------------------------------------------------------
# numpy path


def block_energies_numpy(power, index, weights):
    """``out[m, k] = sum_b power[m, index[k, b]] * weights[b]``."""
    return power[:, index] @ weights


def gather_blocks_numpy(spec, src, flip, dest, weights, qidxs, out):
    """Write ``spec`` restricted to block ``qidxs[m]`` (times weights) into ``out[m]``."""
    vals = spec[src[qidxs]]
    vals = np.where(flip[qidxs], np.conj(vals), vals) * weights
    rows = np.arange(len(qidxs))[:, None]
    out[rows, dest[qidxs]] = vals
    return out


def bilinear_warp_numpy(f, disp_r, disp_c):
    n0, n1 = f.shape
    r = np.arange(n0)[:, None] - disp_r
    c = np.arange(n1)[None, :] - disp_c
    r0 = np.floor(r)
    c0 = np.floor(c)
    fr = r - r0
    fc = c - c0
    r0 = r0.astype(np.int64) % n0
    c0 = c0.astype(np.int64) % n1
    r1 = (r0 + 1) % n0
    c1 = (c0 + 1) % n1
    return ((1.0 - fr) * (1.0 - fc) * f[r0, c0]
            + (1.0 - fr) * fc * f[r0, c1]
            + fr * (1.0 - fc) * f[r1, c0]
            + fr * fc * f[r1, c1])


# --------------------------------------------------------------------------
# numba path

_HAVE_NUMBA = False
if _numba_requested():
    try:
        import numba as nb
        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @nb.njit(cache=True)
    def block_energies_numba(power, index, weights):
        n_nodes = power.shape[0]
        n_blocks, width = index.shape
        out = np.empty((n_nodes, n_blocks))
        for m in range(n_nodes):
            for k in range(n_blocks):
                acc = 0.0
                for b in range(width):
                    acc += power[m, index[k, b]] * weights[b]
                out[m, k] = acc
        return out

    @nb.njit(cache=True)
    def gather_blocks_numba(spec, src, flip, dest, weights, qidxs, out):
        width = src.shape[1]
        for m in range(qidxs.shape[0]):
            q = qidxs[m]
            for b in range(width):
                v = spec[src[q, b]]
                if flip[q, b]:
                    v = np.conj(v)
                out[m, dest[q, b]] = v * weights[b]
        return out

    @nb.njit(cache=True)
    def bilinear_warp_numba(f, disp_r, disp_c):
        n0, n1 = f.shape
        out = np.empty((n0, n1))
        for x in range(n0):
            for y in range(n1):
                r = x - disp_r[x, y]
                c = y - disp_c[x, y]
                r0 = np.floor(r)
                c0 = np.floor(c)
                fr = r - r0
                fc = c - c0
                i0 = int(r0) % n0
                j0 = int(c0) % n1
                i1 = (i0 + 1) % n0
                j1 = (j0 + 1) % n1
                out[x, y] = ((1.0 - fr) * (1.0 - fc) * f[i0, j0]
                             + (1.0 - fr) * fc * f[i0, j1]
                             + fr * (1.0 - fc) * f[i1, j0]
                             + fr * fc * f[i1, j1])
        return out

    BACKEND = "numba"
    block_energies = block_energies_numba
    gather_blocks = gather_blocks_numba
    bilinear_warp = bilinear_warp_numba
else:
    BACKEND = "numpy"
    block_energies = block_energies_numpy
    gather_blocks = gather_blocks_numpy
    bilinear_warp = bilinear_warp_numpy
