"""Gabor-type uniform covering frames on the discrete torus.

The frame lives on the ``N**d`` DFT grid. The low-pass filter ``f_0`` is a
separable window whose squared profile has half-width ``a`` bins; band
filters are its translates to the lattice centres ``p * a`` (mod ``N``).
Because the squared profile is an integer-shift partition of unity, the
squared masks of the full (periodised) family sum to one at every bin.
"""

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "ConfigurationError",
    "LatticeSpec",
    "WindowProfile",
    "FrequencyFilter",
    "UniformCoveringFrame",
    "TruncationSet",
    "VerificationReport",
    "WINDOW_KINDS",
    "build_window_profile",
    "build_frame",
    "verify_partition",
    "truncation_set",
    "full_lattice_set",
    "gradient_l1_norm",
    "signed_bins",
]

PARTITION_TOL = 1e-12


class ConfigurationError(ValueError):
    """Invalid frame, lattice or scattering configuration."""


def signed_bins(n):
    """Signed DFT bin indices in numpy FFT order, Nyquist kept positive."""
    k = np.arange(n)
    return np.where(k <= n // 2, k, k - n)


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic grid of ``N`` samples per axis with lattice spacing ``a`` bins."""

    d: int
    N: int
    a: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigurationError(f"d must be 1 or 2, got {self.d}")
        if self.N < 4:
            raise ConfigurationError(f"N must be >= 4, got {self.N}")
        if self.a < 1:
            raise ConfigurationError(f"a must be >= 1, got {self.a}")
        if self.N % self.a:
            raise ConfigurationError(
                f"a={self.a} does not divide N={self.N}")
        if self.N // self.a < 2:
            raise ConfigurationError(
                f"need at least 2 lattice points per axis, got N/a={self.N // self.a}")

    @property
    def L(self):
        """Lattice points per axis."""
        return self.N // self.a

    @property
    def C1(self):
        return self.a

    @property
    def shape(self):
        return (self.N,) * self.d

    @property
    def size(self):
        return self.N ** self.d

    def canonical(self, p):
        """Signed representative of a lattice index, each entry in (-L/2, L/2]."""
        L = self.L
        out = []
        for c in p:
            c = int(c) % L
            if c > L // 2:
                c -= L
            out.append(c)
        return tuple(out)

    def is_nyquist(self, c):
        return self.L % 2 == 0 and int(c) == self.L // 2

    def to_json(self):
        return {"d": self.d, "N": self.N, "a": self.a}


@dataclass(frozen=True)
class WindowProfile:
    """Separable squared window ``|g^|^2`` in lattice units.

    Per axis the profile is supported on ``[-1, 1]``, equals 1 at 0 and its
    integer translates sum to 1.
    """

    kind: str

    def profile_1d(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        inside = x < 1.0
        if self.kind == "tent":
            return np.where(inside, 1.0 - x, 0.0)
        return np.where(inside, np.cos(0.5 * np.pi * x) ** 2, 0.0)

    def __call__(self, *coords):
        """Evaluate ``|g^|^2`` at a point given one coordinate per axis."""
        out = 1.0
        for x in coords:
            out = out * self.profile_1d(x)
        return out

    def amplitude_1d(self, x):
        return np.sqrt(self.profile_1d(x))


WINDOW_KINDS = ("tent", "raised-cosine")


def build_window_profile(kind="tent"):
    if kind not in WINDOW_KINDS:
        raise ConfigurationError(
            f"unknown window kind {kind!r}; expected one of {WINDOW_KINDS}")
    return WindowProfile(kind)


@dataclass(frozen=True, eq=False)
class FrequencyFilter:
    """One filter ``f^_p`` of the frame; the full-grid mask is built on demand."""

    center: tuple
    frame: "UniformCoveringFrame" = field(repr=False)

    @property
    def bin_center(self):
        return tuple((c * self.frame.lattice.a) % self.frame.lattice.N
                     for c in self.center)

    @cached_property
    def mask(self):
        return self.frame.mask(self.center)


@dataclass(frozen=True)
class TruncationSet:
    """Lattice indices ``0 < |p|_inf <= M``; ``M is None`` means the whole lattice."""

    M: "int | None"
    members: tuple

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, p):
        return tuple(p) in self._lookup

    @cached_property
    def _lookup(self):
        return frozenset(self.members)


@dataclass
class VerificationReport:
    max_deviation: float
    argmax_frequency: tuple
    M: "int | None" = None

    def to_json(self):
        return {
            "max_deviation": self.max_deviation,
            "argmax_frequency": list(self.argmax_frequency),
            "M": self.M,
        }


class UniformCoveringFrame:
    """Gabor frame ``{f_0} u {f_p}`` sampled on the periodic frequency grid.

    Instances are immutable after construction and safe to share between
    threads. Masks are real and nonnegative (``g^`` is taken as the square
    root of the squared profile).
    """

    def __init__(self, lattice, window):
        self.lattice = lattice
        self.window = window
        a, N = lattice.a, lattice.N
        # per-axis amplitude on the interior block; the endpoints +-a are zero
        offsets = np.arange(-(a - 1), a, dtype=np.int64)
        self._offsets = offsets
        amp = window.amplitude_1d(offsets / a)
        self._amp_1d = amp
        if lattice.d == 1:
            self._block = amp[None, :]
            self._offsets_r = np.zeros(1, dtype=np.int64)
        else:
            self._block = np.outer(amp, amp)
            self._offsets_r = offsets
        self._offsets_c = offsets
        self._block.setflags(write=False)
        self._bins = signed_bins(N)

    def __repr__(self):
        return (f"UniformCoveringFrame(d={self.lattice.d}, N={self.lattice.N}, "
                f"a={self.lattice.a}, window={self.window.kind!r})")

    # ---- filters

    def mask_1d(self, c):
        """Amplitude along one axis for lattice coordinate ``c``, with wrap-around."""
        N, a = self.lattice.N, self.lattice.a
        delta = (self._bins - c * a + N // 2) % N - N // 2
        return self.window.amplitude_1d(delta / a)

    def mask(self, p):
        """Full-grid mask ``|f^_p|`` for lattice index ``p``."""
        p = tuple(int(c) for c in p)
        if len(p) != self.lattice.d:
            raise ConfigurationError(f"index {p} has wrong dimension")
        out = self.mask_1d(p[0])
        for c in p[1:]:
            out = np.multiply.outer(out, self.mask_1d(c))
        return out

    @cached_property
    def low_pass(self):
        return FrequencyFilter((0,) * self.lattice.d, self)

    @cached_property
    def low_pass_mask(self):
        m = self.mask((0,) * self.lattice.d)
        m.setflags(write=False)
        return m

    @cached_property
    def lattice_indices(self):
        """All lattice indices (including 0) in signed form, sorted."""
        L = self.lattice.L
        axis = sorted({self.lattice.canonical((c,))[0] for c in range(L)})
        return tuple(itertools.product(axis, repeat=self.lattice.d))

    @cached_property
    def band_filters(self):
        zero = (0,) * self.lattice.d
        return {p: FrequencyFilter(p, self) for p in self.lattice_indices
                if p != zero}

    def filter(self, p):
        p = self.lattice.canonical(p)
        if not any(p):
            return self.low_pass
        return self.band_filters[p]

    # ---- block form used by the scattering engine

    @property
    def block(self):
        """Window amplitude on its support block, shape ``(rows, cols)``."""
        return self._block

    @property
    def block_offsets(self):
        return self._offsets_r, self._offsets_c

    def block_center(self, p):
        """Bin centre of ``f^_p`` as a (row, col) pair for the 2-D kernels."""
        a, N = self.lattice.a, self.lattice.N
        c = [(int(x) * a) % N for x in p]
        if self.lattice.d == 1:
            return (0, c[0])
        return (c[0], c[1])

    # ---- sums of squared masks

    def squared_sum(self, members=None, include_low_pass=True):
        """``|f^_0|^2 + sum |f^_p|^2`` over ``members`` (default: whole frame)."""
        if members is None:
            members = self.band_filters.keys()
        points = [tuple(p) for p in members]
        if include_low_pass:
            points.append((0,) * self.lattice.d)
        N = self.lattice.N
        n0 = 1 if self.lattice.d == 1 else N
        if not points:
            return np.zeros(self.lattice.shape)
        # Each mask vanishes outside its block, so summing the squared
        # blocks at their wrapped positions gives the full-grid sum.
        centers = np.array([self.block_center(p) for p in points], dtype=np.int64)
        rows = (centers[:, 0, None, None] + self._offsets_r[None, :, None]) % n0
        cols = (centers[:, 1, None, None] + self._offsets_c[None, None, :]) % N
        flat = (rows * N + cols).ravel()
        weights = np.broadcast_to(self._block ** 2, (len(points),) + self._block.shape)
        total = np.bincount(flat, weights=weights.ravel(), minlength=n0 * N)
        return total.reshape(self.lattice.shape)

    def to_json(self):
        return {**self.lattice.to_json(), "window_kind": self.window.kind}

    @classmethod
    def from_json(cls, doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        lattice = LatticeSpec(int(doc["d"]), int(doc["N"]), int(doc["a"]))
        return build_frame(lattice, build_window_profile(doc.get("window_kind", "tent")))


def build_frame(lattice, window=None):
    """Sample the Gabor frame for ``lattice`` on its DFT grid."""
    if not isinstance(lattice, LatticeSpec):
        d, N, a = lattice
        lattice = LatticeSpec(d, N, a)
    if window is None:
        window = build_window_profile("tent")
    elif isinstance(window, str):
        window = build_window_profile(window)
    return UniformCoveringFrame(lattice, window)


def truncation_set(lattice, M):
    """Indices ``p != 0`` with ``|p|_inf <= M``.

    ``M`` must stay below ``L/2`` so that no two members alias on the torus.
    """
    if isinstance(lattice, UniformCoveringFrame):
        lattice = lattice.lattice
    M = int(M)
    if M < 1:
        raise ConfigurationError(f"M must be >= 1, got {M}")
    if 2 * M >= lattice.L:
        raise ConfigurationError(
            f"M={M} must be < L/2={lattice.L / 2} (filters would alias)")
    axis = range(-M, M + 1)
    zero = (0,) * lattice.d
    members = tuple(p for p in itertools.product(axis, repeat=lattice.d)
                    if p != zero)
    return TruncationSet(M, members)


def full_lattice_set(lattice):
    """Every nonzero lattice index of the torus (the untruncated frame)."""
    if isinstance(lattice, UniformCoveringFrame):
        frame = lattice
    else:
        frame = build_frame(lattice)
    zero = (0,) * frame.lattice.d
    return TruncationSet(None, tuple(p for p in frame.lattice_indices if p != zero))


def _deviation_report(dev, frame, M):
    idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
    bins = signed_bins(frame.lattice.N)
    return VerificationReport(float(dev[idx]), tuple(int(bins[i]) for i in idx), M)


def verify_partition(frame, members=None):
    """Measure how far the squared masks are from a partition of unity.

    Without ``members`` the whole frame is checked against 1 at every bin.
    With a :class:`TruncationSet` the truncated sum is checked against 1 on
    ``|xi|_inf <= a*M`` and against 0 on ``|xi|_inf >= a*(M+1)``; bins in the
    transition shell are not constrained.
    """
    if members is None:
        total = frame.squared_sum()
        return _deviation_report(np.abs(1.0 - total), frame, None)
    if members.M is None:
        total = frame.squared_sum(members.members)
        return _deviation_report(np.abs(1.0 - total), frame, None)
    total = frame.squared_sum(members.members)
    a, M = frame.lattice.a, members.M
    bins = np.abs(signed_bins(frame.lattice.N))
    radius = bins
    for _ in range(frame.lattice.d - 1):
        radius = np.maximum.outer(radius, bins)
    dev = np.zeros_like(total)
    inner = radius <= a * M
    outer = radius >= a * (M + 1)
    dev[inner] = np.abs(1.0 - total[inner])
    dev[outer] = np.abs(total[outer])
    return _deviation_report(dev, frame, M)


def gradient_l1_norm(frame, mask=None):
    """``||grad f_0||_{L^1}`` on the grid (cell measure 1), via spectral derivatives."""
    if mask is None:
        mask = frame.low_pass_mask
    N, d = frame.lattice.N, frame.lattice.d
    freqs = sfft.fftfreq(N)
    grads = []
    for axis in range(d):
        shape = [1] * d
        shape[axis] = N
        xi = freqs.reshape(shape)
        grads.append(sfft.ifftn(2j * math.pi * xi * mask).real)
    magnitude = np.sqrt(sum(g ** 2 for g in grads))
    return float(np.sum(magnitude))
