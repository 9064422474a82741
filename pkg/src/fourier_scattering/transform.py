"""Fourier scattering propagator and the fast truncated transform.

A node of the scattering tree is a path ``p = (p_1, ..., p_k)`` of lattice
indices. Its signal is ``U[p]f = |...|f * f_{p_1}| * ... * f_{p_k}|`` and its
exported coefficient is ``U[p]f * f_0``. Convolutions are pointwise products
on the unnormalised DFT grid, so every energy below is an exact finite sum.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from . import _kernels as kernels
from .frame import ConfigurationError, FrequencyFilter, full_lattice_set, truncation_set

__all__ = [
    "ShapeError",
    "ScatterConfig",
    "ScatteringNode",
    "ScatteringTree",
    "filter_convolve",
    "propagate",
    "node_signal",
    "scatter",
    "mirror_path",
    "normalize_path",
    "tree_norm",
    "tree_distance",
]

# elements per batched FFT chunk (complex128): 2**21 -> 32 MiB
_CHUNK_ELEMENTS = 2 ** 21


class ShapeError(ValueError):
    """Signal shape does not match the frame grid."""


def _mask_of(frame_filter):
    if isinstance(frame_filter, FrequencyFilter):
        return frame_filter.mask
    return np.asarray(frame_filter, dtype=float)


def _check_signal(f, shape):
    f = np.asarray(f)
    if f.shape != tuple(shape):
        raise ShapeError(f"signal shape {f.shape} does not match grid {tuple(shape)}")
    if not np.all(np.isfinite(f)):
        raise ValueError("signal has non-finite entries")
    if not np.iscomplexobj(f):
        f = f.astype(np.float64, copy=False)
    else:
        f = f.astype(np.complex128, copy=False)
    return f


def filter_convolve(f, frame_filter):
    """Circular convolution ``f * f_p`` computed as DFT, mask, inverse DFT."""
    mask = _mask_of(frame_filter)
    f = _check_signal(f, mask.shape)
    return sfft.ifftn(sfft.fftn(f) * mask)


def propagate(u, frame_filter):
    """One scattering step ``|u * f_p|``."""
    return np.abs(filter_convolve(u, frame_filter))


def normalize_path(path, d=None):
    """Coerce a path to a tuple of index tuples; bare ints are 1-D indices."""
    out = []
    for step in path:
        if isinstance(step, (int, np.integer)):
            out.append((int(step),))
        else:
            out.append(tuple(int(c) for c in step))
    if d is not None and any(len(s) != d for s in out):
        raise ConfigurationError(f"path {tuple(out)} is not {d}-dimensional")
    return tuple(out)


def mirror_path(path, L=None):
    """Flip the sign of every step. With ``L`` given, Nyquist entries stay fixed."""
    path = normalize_path(path)
    out = []
    for step in path:
        flipped = []
        for c in step:
            m = -c
            if L is not None:
                m %= L
                if m > L // 2:
                    m -= L
            flipped.append(m)
        out.append(tuple(flipped))
    return tuple(out)


def node_signal(f, frame, path):
    """``U[p]f`` evaluated directly along ``path`` with full-grid masks."""
    u = _check_signal(f, frame.lattice.shape)
    for step in normalize_path(path, frame.lattice.d):
        u = propagate(u, frame.mask(step))
    return u


@dataclass(frozen=True)
class ScatterConfig:
    """Parameters of the truncated transform.

    ``M=None`` selects the full lattice (every band filter of the torus),
    for which the layer energy identity is exact.
    """

    M: "int | None" = None
    K: int = 2
    prune_eps: float = 0.0
    mirror_halving: bool = False
    keep_coefficients: bool = True
    downsample: int = 1
    threads: int = 1

    def validate(self, frame):
        if self.K < 0:
            raise ConfigurationError(f"K must be >= 0, got {self.K}")
        if not self.prune_eps >= 0:
            raise ConfigurationError(f"prune_eps must be >= 0, got {self.prune_eps}")
        if self.downsample < 1 or frame.lattice.N % self.downsample:
            raise ConfigurationError(
                f"downsample={self.downsample} must divide N={frame.lattice.N}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")
        return self.members(frame)

    def members(self, frame):
        if self.M is None:
            return full_lattice_set(frame)
        return truncation_set(frame.lattice, self.M)

    def to_json(self):
        return {
            "M": self.M,
            "K": self.K,
            "prune_eps": self.prune_eps,
            "mirror_halving": self.mirror_halving,
            "downsample": self.downsample,
        }


@dataclass(eq=False)
class ScatteringNode:
    """One path of the tree with its energies and (optionally) its coefficient.

    ``children_energy`` is ``sum_q ||U[p]f * f_q||^2`` over the width set,
    i.e. the total node energy of the children whether or not they were
    expanded. ``mirror_of`` names the computed twin when this node was
    materialised by real-input reflection.
    """

    path: tuple
    node_energy: float
    coefficient_energy: float
    children_energy: float
    expanded: bool = False
    mirror_of: "tuple | None" = None
    _coefficient: "np.ndarray | None" = field(default=None, repr=False)
    _loader: "object | None" = field(default=None, repr=False)

    @property
    def depth(self):
        return len(self.path)

    @property
    def coefficient(self):
        if self._coefficient is None and self._loader is not None:
            self._coefficient = self._loader()
        return self._coefficient


class ScatteringTree:
    """Nodes of ``S_F[M, K](f)`` keyed by path, iterated in lexicographic order."""

    def __init__(self, frame_spec, config, input_norm_sq, nodes, input_dtype="float64",
                 computed=None):
        self.frame_spec = dict(frame_spec)
        self.config = config
        self.input_norm_sq = float(input_norm_sq)
        self._nodes = {p: nodes[p] for p in sorted(nodes)}
        self.input_dtype = input_dtype
        self.computed = computed if computed is not None else len(self._nodes)

    def __len__(self):
        return len(self._nodes)

    def __iter__(self):
        return iter(self._nodes.values())

    def __getitem__(self, path):
        return self._nodes[normalize_path(path)]

    def __contains__(self, path):
        return normalize_path(path) in self._nodes

    @property
    def paths(self):
        return list(self._nodes)

    @property
    def depth(self):
        return self.config.K

    def layer(self, k):
        return [n for n in self._nodes.values() if n.depth == k]

    @property
    def pruned(self):
        """True when some node above the last layer was left unexpanded."""
        return any(n.depth < self.config.K and not n.expanded for n in self)

    def norm(self):
        return tree_norm(self)


def tree_norm(tree):
    """l2 sum over paths of the coefficient L2 norms."""
    return math.sqrt(math.fsum(n.coefficient_energy for n in tree))


def tree_distance(t1, t2):
    """``||S(f) - S(g)||`` comparing coefficients path by path."""
    if set(t1.paths) != set(t2.paths):
        raise ValueError("trees have different path sets")
    parts = []
    for node in t1:
        c1 = node.coefficient
        c2 = t2[node.path].coefficient
        if c1 is None or c2 is None:
            raise ValueError("tree distance needs stored coefficients")
        diff = c1 - c2
        parts.append(float(np.sum(diff.real ** 2 + diff.imag ** 2)))
    return math.sqrt(math.fsum(parts))


class _Engine:
    """Batched node evaluation against one frame and width set."""

    def __init__(self, frame, members, config):
        self.config = config
        lat = frame.lattice
        self.d, self.N, self.size = lat.d, lat.N, lat.size
        self.shape = lat.shape
        self.axes = tuple(range(-self.d, 0))
        self.members = list(members)
        shape2d = (1, self.N) if self.d == 1 else (self.N, self.N)
        off_r, off_c = frame.block_offsets
        self.off_r, self.off_c = off_r, off_c
        self.block_shape = frame.block.shape
        self.block_width = frame.block.size
        self.weights = np.ascontiguousarray(frame.block).ravel()
        self.w2 = self.weights ** 2
        zero = (0,) * self.d
        centers = [frame.block_center(zero)] + [frame.block_center(q) for q in self.members]
        self.centers = np.asarray(centers, dtype=np.int64)
        # index 0 is the low-pass block, member i sits at i + 1
        self.tables = {
            half: kernels.block_tables(shape2d, self.centers, off_r, off_c, half)
            for half in (True, False)
        }
        m0 = frame.low_pass_mask
        self.m0_full = m0
        self.m0_half = np.ascontiguousarray(m0[..., : self.N // 2 + 1])
        # a child spectrum is one small block; transform it separably when it is narrow
        self.band_rows = self.d == 2 and 2 * len(off_r) <= self.N
        self.compact_dest = np.ascontiguousarray(np.broadcast_to(
            np.arange(self.block_width, dtype=np.int64), (len(self.centers), self.block_width)))

    def evaluate(self, specs, half):
        """Energies and coefficients for a batch of node spectra.

        Returns ``(energies, coefs)`` where ``energies[:, 0]`` is the
        coefficient energy and ``energies[:, 1 + i]`` the energy passed to
        child ``members[i]``.
        """
        n = specs.shape[0]
        flat = specs.reshape(n, -1)
        power = flat.real ** 2 + flat.imag ** 2
        src = self.tables[half][0]
        energies = kernels.block_energies(power, src, self.w2) / self.size
        coefs = None
        if self.config.keep_coefficients:
            if half:
                coefs = sfft.irfftn(specs * self.m0_half, s=self.shape, axes=self.axes)
            else:
                coefs = sfft.ifftn(specs * self.m0_full, axes=self.axes)
            ds = self.config.downsample
            if ds > 1:
                coefs = coefs[(slice(None),) + (slice(None, None, ds),) * self.d]
        return energies, coefs

    def _inverse_compact(self, blocks, qidxs):
        """Inverse DFT of children whose spectra are the given 2-D blocks.

        The column pass runs only over the block's columns; the row pass is
        a contiguous transform of the full grid.
        """
        n, br, bc = blocks.shape
        rows = (self.centers[qidxs + 1, 0][:, None] + self.off_r[None, :]) % self.N
        cols = (self.centers[qidxs + 1, 1][:, None] + self.off_c[None, :]) % self.N
        A = np.zeros((n, self.N, bc), dtype=np.complex128)
        A[np.arange(n)[:, None], rows] = blocks
        A = sfft.ifft(A, axis=1)
        G = np.zeros((n, self.N, self.N), dtype=np.complex128)
        for m in range(n):
            G[m][:, cols[m]] = A[m]
        return sfft.ifft(G, axis=-1, overwrite_x=True)

    def children(self, spec, half, qidxs):
        """Yield ``(qidx_chunk, U_chunk)``: half spectra of ``|U * f_q|``."""
        src, flip, dest = self.tables[half]
        flat = np.ascontiguousarray(spec).ravel()
        chunk = max(1, _CHUNK_ELEMENTS // self.size)
        for start in range(0, len(qidxs), chunk):
            part = np.asarray(qidxs[start:start + chunk], dtype=np.int64)
            if self.band_rows:
                blocks = np.zeros((len(part), self.block_width), dtype=np.complex128)
                kernels.gather_blocks(flat, src, flip, self.compact_dest, self.weights,
                                      part + 1, blocks)
                h = self._inverse_compact(blocks.reshape(len(part), *self.block_shape), part)
            else:
                H = np.zeros((len(part), self.size), dtype=np.complex128)
                kernels.gather_blocks(flat, src, flip, dest, self.weights, part + 1, H)
                h = sfft.ifftn(H.reshape((len(part),) + self.shape), axes=self.axes,
                               overwrite_x=True)
            yield part, sfft.rfftn(np.abs(h), axes=self.axes)


def _is_canonical(path, L):
    return path <= mirror_path(path, L)


def scatter(f, frame, config=None, **kwargs):
    """Compute the truncated Fourier scattering tree of ``f``.

    Layers are evaluated breadth-first. A node whose energy falls below
    ``prune_eps**2 * ||f||**2`` is kept but not expanded. With
    ``mirror_halving`` (real input only) a path is computed only if it does
    not exceed its mirror lexicographically; the mirror node shares the
    computed coefficient.
    """
    if config is None:
        config = ScatterConfig(**kwargs)
    elif kwargs:
        config = replace(config, **kwargs)
    members = config.validate(frame)
    f = _check_signal(f, frame.lattice.shape)
    is_real = not np.iscomplexobj(f)
    if config.mirror_halving and not is_real:
        raise ConfigurationError("mirror_halving requires a real-valued input")
    eng = _Engine(frame, members, config)
    L = frame.lattice.L
    norm_sq = float(np.sum(f.real ** 2 + f.imag ** 2))
    threshold = config.prune_eps ** 2 * norm_sq

    if is_real:
        spec0, half0 = sfft.rfftn(f), True
    else:
        spec0, half0 = sfft.fftn(f), False
    energies, coefs = eng.evaluate(spec0[None], half0)
    root = ScatteringNode((), norm_sq, float(energies[0, 0]), math.fsum(energies[0, 1:]),
                          _coefficient=None if coefs is None else coefs[0])
    nodes = {(): root}
    computed = 1
    frontier = [(root, spec0, half0, energies[0, 1:])]

    def expand(item, last):
        parent, spec, half, child_energy = item
        qidxs = [qi for qi, q in enumerate(eng.members)
                 if not config.mirror_halving
                 or _is_canonical(parent.path + (q,), L)]
        out = []
        for part, U in eng.children(spec, half, qidxs):
            energies, coefs = eng.evaluate(U, True)
            for i, qi in enumerate(part):
                node = ScatteringNode(
                    parent.path + (eng.members[qi],), float(child_energy[qi]),
                    float(energies[i, 0]), math.fsum(energies[i, 1:]),
                    _coefficient=None if coefs is None else np.ascontiguousarray(coefs[i]))
                out.append((node, None if last else U[i], energies[i, 1:]))
        return out

    for k in range(1, config.K + 1):
        todo = []
        for item in frontier:
            if item[0].node_energy < threshold:
                continue
            item[0].expanded = True
            todo.append(item)
        last = k == config.K
        if config.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                results = list(pool.map(lambda it: expand(it, last), todo))
        else:
            results = [expand(it, last) for it in todo]
        frontier = []
        for batch in results:
            for node, U, child_energy in batch:
                nodes[node.path] = node
                computed += 1
                if not last:
                    frontier.append((node, U, True, child_energy))
        del results, todo

    if config.mirror_halving:
        for path, node in list(nodes.items()):
            twin_path = mirror_path(path, L)
            if twin_path == path or twin_path in nodes:
                continue
            nodes[twin_path] = ScatteringNode(
                twin_path, node.node_energy, node.coefficient_energy,
                node.children_energy, expanded=node.expanded, mirror_of=path,
                _coefficient=node._coefficient)

    return ScatteringTree(frame.to_json(), config, norm_sq, nodes,
                          input_dtype="float64" if is_real else "complex128",
                          computed=computed)
