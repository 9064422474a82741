"""Measurements on scattering trees: energy ledgers, decay, concentration,
truncation lower bound, translation/warp stability and threshold censuses.

Everything here is a pure function of its inputs. Reports are plain
dataclasses with a ``to_json`` method so the CLI can emit them directly.
"""

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from . import _kernels as kernels
from .frame import ConfigurationError, gradient_l1_norm, signed_bins, truncation_set
from .transform import (ScatterConfig, _check_signal, node_signal, normalize_path,
                        scatter, tree_distance)

__all__ = [
    "PreconditionError",
    "EnergyLedger",
    "DecayEstimate",
    "BandLimitSpec",
    "WarpField",
    "energy_ledger",
    "estimate_decay",
    "proof_decay_bound",
    "concentration_constant",
    "brute_force_concentration_constant",
    "path_concentration",
    "band_limit",
    "lower_bound_check",
    "translation_distance",
    "warp",
    "diffeo_distance",
    "threshold_census",
]

# slack on inequalities that hold exactly in exact arithmetic
ATOL = 1e-9
# Layer energies below this fraction of ||f||^2 are round-off, not signal.
ENERGY_FLOOR = 1e-20


class PreconditionError(ValueError):
    """An analysis operation was called outside its hypotheses."""


def _tree_width_is_full(tree):
    return tree.config.M is None


# ---------------------------------------------------------------- energy


@dataclass
class EnergyLedger:
    """Per-layer energy sums of one tree.

    ``node[k]`` is the total ``||U[p]f||^2`` over layer ``k`` for
    ``k = 0..K``, and ``node[K+1]`` is the frontier energy handed to the
    children of the last layer. ``coef[k]`` sums ``||U[p]f * f_0||^2``.
    """

    coef: list
    node: list
    input_norm_sq: float
    pruned: bool = False
    full_width: bool = True

    @property
    def depth(self):
        return len(self.coef) - 1

    @property
    def identity_applicable(self):
        return self.full_width and not self.pruned

    @property
    def residual(self):
        return self.input_norm_sq - math.fsum(self.coef + [self.node[-1]])

    @property
    def relative_residual(self):
        if self.input_norm_sq == 0:
            return abs(self.residual)
        return abs(self.residual) / self.input_norm_sq

    def layer_parseval_slack(self):
        """``node[k] - node[k+1] - coef[k]`` for each layer; never below ``-ATOL``."""
        return [self.node[k] - self.node[k + 1] - self.coef[k]
                for k in range(len(self.coef))]

    def to_json(self):
        return {
            "coef": self.coef,
            "node": self.node,
            "input_norm_sq": self.input_norm_sq,
            "pruned": self.pruned,
            "full_width": self.full_width,
            "identity_applicable": self.identity_applicable,
            "residual": self.residual if self.identity_applicable else None,
            "relative_residual": self.relative_residual if self.identity_applicable else None,
        }


def energy_ledger(tree):
    K = tree.config.K
    coef = [[] for _ in range(K + 1)]
    node = [[] for _ in range(K + 2)]
    for n in tree:
        coef[n.depth].append(n.coefficient_energy)
        node[n.depth].append(n.node_energy)
        if n.depth == K:
            node[K + 1].append(n.children_energy)
    return EnergyLedger(
        coef=[math.fsum(c) for c in coef],
        node=[math.fsum(e) for e in node],
        input_norm_sq=tree.input_norm_sq,
        pruned=tree.pruned,
        full_width=_tree_width_is_full(tree),
    )


@dataclass
class DecayEstimate:
    """Layer-to-layer energy ratios and a fitted geometric rate.

    The rate is fitted on layers ``k >= 1``, where the per-layer contraction
    applies; the first ratio mostly reflects how much of ``f`` sits outside
    the low-pass band.
    """

    ratios: list
    rate: float
    degenerate: bool = False
    violation: bool = False
    proof_bound: "float | None" = None
    notes: list = field(default_factory=list)

    def to_json(self):
        return asdict(self)


def proof_decay_bound(frame, n_grid=2000):
    """``1 - max_R C(R)/N(R)`` for the tent minorant of ``f^_0``.

    ``C(R)`` is the minimum of the squared minorant ``prod tent(xi_j/a)^2``
    over the cube of half-width ``R`` and ``N(R) = ceil(a/R)^d`` counts the
    cubes of side ``2R`` covering one filter support (side ``2a``).
    Returns ``(bound, R, C, N)`` with ``R`` in bins.
    """
    a, d = frame.lattice.a, frame.lattice.d
    best = (-1.0, None, None, None)
    candidates = set(a / n for n in range(1, 257))
    candidates.update(a * t for t in np.linspace(0.0, 1.0, n_grid + 1)[1:-1])
    for R in sorted(candidates):
        if not 0 < R < a:
            continue
        C = (1.0 - R / a) ** (2 * d)
        N = math.ceil(a / R - 1e-12) ** d
        if C / N > best[0]:
            best = (C / N, R, C, N)
    ratio, R, C, N = best
    return 1.0 - ratio, R, C, N


def estimate_decay(ledger, frame=None):
    nodes = ledger.node
    ratios = [nodes[k + 1] / nodes[k] if nodes[k] > 0 else 0.0
              for k in range(len(nodes) - 1)]
    est = DecayEstimate(ratios=ratios, rate=0.0)
    if frame is not None:
        est.proof_bound = proof_decay_bound(frame)[0]
    if ledger.full_width and not ledger.pruned:
        est.violation = any(r > 1 + ATOL for r in ratios)
    floor = ENERGY_FLOOR * nodes[0]
    ks = [k for k in range(1, len(nodes)) if nodes[k] > floor]
    if not ks or nodes[1] <= floor:
        est.degenerate = True
        est.notes.append("no energy past layer 0")
        return est
    if len(ks) < 2:
        est.notes.append("energy vanishes after layer 1; rate set to 0")
        return est
    slope = np.polyfit(np.asarray(ks, float), np.log([nodes[k] for k in ks]), 1)[0]
    est.rate = float(math.exp(slope))
    if est.proof_bound is not None:
        est.notes.append("rate is an empirical surrogate for C_0; proof_bound is the covering bound")
    return est


# ---------------------------------------------------------------- concentration


def concentration_constant(M, d):
    """Squared scaled tent at the half-cell corner: ``(1 - 1/(2M))**(2d)``."""
    return (1.0 - 0.5 / M) ** (2 * d)


def _radius(frame):
    bins = np.abs(signed_bins(frame.lattice.N)).astype(float)
    r = bins
    for _ in range(frame.lattice.d - 1):
        r = np.maximum.outer(r, bins)
    return r


def brute_force_concentration_constant(frame, M):
    """Grid search for the concentration constant.

    For every ``s`` in ``P[M]`` the squared minorant ``phi_M^2`` (tent of
    half-width ``a*M``) is minimised over the grid bins of the half-cell cube
    around ``s*a``. Also returns the largest amount by which ``phi_M^2``
    exceeds the truncated squared-mask sum anywhere on the grid (should be
    ``<= 0``).
    """
    a, N, d = frame.lattice.a, frame.lattice.N, frame.lattice.d
    members = truncation_set(frame.lattice, M)
    span = np.arange(-(a // 2), a // 2 + 1)
    best = math.inf
    for s in members:
        grids = np.meshgrid(*[s_j * a + span for s_j in s], indexing="ij")
        val = np.ones(grids[0].shape)
        for j, g in enumerate(grids):
            val = val * np.maximum(0.0, 1.0 - np.abs(g - s[j] * a) / (a * M)) ** 2
        best = min(best, float(val.min()))
    bins = signed_bins(N).astype(float)
    phi = np.maximum(0.0, 1.0 - np.abs(bins) / (a * M)) ** 2
    phi_grid = phi
    for _ in range(d - 1):
        phi_grid = np.multiply.outer(phi_grid, phi)
    excess = float(np.max(phi_grid - frame.squared_sum(members.members)))
    return best, excess


def _spectral_power(u):
    U = sfft.fftn(u)
    return U.real ** 2 + U.imag ** 2


def path_concentration(f, frame, M, sample_paths):
    """Fraction of each node's energy kept by ``f_0`` and the width-``M`` band filters."""
    members = truncation_set(frame.lattice, M)
    weight = frame.squared_sum(members.members)
    C_M = concentration_constant(M, frame.lattice.d)
    rows = []
    for path in sample_paths:
        path = normalize_path(path, frame.lattice.d)
        if not path:
            raise PreconditionError("path concentration needs nonempty paths")
        u = node_signal(f, frame, path)
        energy = float(np.sum(u * u))
        lhs = float(np.sum(_spectral_power(u) * weight)) / frame.lattice.size
        zero = energy == 0.0
        ratio = 1.0 if zero else lhs / energy
        rows.append({
            "path": [list(s) for s in path],
            "lhs": lhs,
            "node_energy": energy,
            "ratio": ratio,
            "zero_energy": zero,
            "ok": ratio >= C_M - ATOL,
        })
    return {"M": M, "C_M": C_M, "rows": rows,
            "min_ratio": min((r["ratio"] for r in rows), default=1.0),
            "passed": all(r["ok"] for r in rows)}


# ---------------------------------------------------------------- lower bound


@dataclass(frozen=True)
class BandLimitSpec:
    """``(eps, R)``: at least ``(1-eps)||f||`` of the norm inside ``|xi|_inf < R`` bins."""

    eps: float
    R: float

    def __post_init__(self):
        if not 0 <= self.eps < 1:
            raise ConfigurationError(f"eps must lie in [0, 1), got {self.eps}")
        if self.R < 0:
            raise ConfigurationError(f"R must be >= 0, got {self.R}")

    def inside_fraction(self, f):
        power = _spectral_power(np.asarray(f))
        total = float(np.sum(power))
        if total == 0:
            return 1.0
        r = _radius_for_shape(power.shape)
        return float(np.sum(power[r < self.R])) / total

    def satisfied_by(self, f):
        return self.inside_fraction(f) >= (1.0 - self.eps) ** 2 - 1e-12


def _radius_for_shape(shape):
    r = None
    for n in shape:
        b = np.abs(signed_bins(n)).astype(float)
        r = b if r is None else np.maximum.outer(r, b)
    return r


def band_limit(f, R):
    """Zero every DFT bin with ``|xi|_inf >= R`` (keeps real inputs real)."""
    f = np.asarray(f)
    F = sfft.fftn(f)
    F[_radius_for_shape(f.shape) >= R] = 0
    out = sfft.ifftn(F)
    return out.real if not np.iscomplexobj(f) else out


def lower_bound_check(f, frame, M, K, spec, config=None):
    """Compare ``||S_F[M,K] f||^2 / ||f||^2`` with ``C_M^K (1-eps^2) - r^(K-1)``.

    ``r`` is the fitted decay rate of the same tree, standing in for the
    unknown decay constant.
    """
    if not spec.satisfied_by(f):
        raise PreconditionError(f"signal is not ({spec.eps}, {spec.R}) band-limited")
    if frame.lattice.a * M < spec.R:
        raise PreconditionError(f"need a*M >= R, got a*M={frame.lattice.a * M}, R={spec.R}")
    config = replace(config or ScatterConfig(), M=M, K=K, prune_eps=0.0,
                     keep_coefficients=False)
    tree = scatter(f, frame, config)
    ledger = energy_ledger(tree)
    decay = estimate_decay(ledger)
    norm_sq = tree.input_norm_sq
    measured = 1.0 if norm_sq == 0 else math.fsum(ledger.coef) / norm_sq
    C_M = concentration_constant(M, frame.lattice.d)
    floor = C_M ** K * (1.0 - spec.eps ** 2) - decay.rate ** (K - 1)
    skipped = floor <= 0
    return {
        "M": M, "K": K, "eps": spec.eps, "R": spec.R,
        "measured": measured, "C_M": C_M, "rate": decay.rate, "floor": floor,
        "skipped": skipped,
        "note": "nonpositive floor, check skipped" if skipped else "",
        "passed": skipped or measured >= floor - ATOL,
    }


# ---------------------------------------------------------------- stability


def _shift(f, y):
    f = np.asarray(f)
    y = np.broadcast_to(np.asarray(y, dtype=np.int64).ravel(), (f.ndim,))
    return np.roll(f, tuple(int(v) for v in y), axis=tuple(range(f.ndim)))


def _stability_config(config):
    return replace(config or ScatterConfig(), keep_coefficients=True, downsample=1,
                   prune_eps=0.0)


def translation_distance(f, y, frame, config=None, reference=None):
    """``D(y) = ||S(T_y f) - S(f)||`` with the translation bound of the tree.

    The bound is ``sqrt(1 + 1/(1-r)) |y| ||grad f_0||_1 ||f||`` with ``r``
    the fitted decay rate standing in for the decay constant.
    """
    f = _check_signal(f, frame.lattice.shape)
    config = _stability_config(config)
    base = reference if reference is not None else scatter(f, frame, config)
    moved = scatter(_shift(f, y), frame, config)
    D = tree_distance(moved, base)
    rate = estimate_decay(energy_ledger(base)).rate
    C = math.sqrt(1.0 + 1.0 / (1.0 - rate))
    grad = gradient_l1_norm(frame)
    y_norm = float(np.linalg.norm(np.asarray(y, dtype=float)))
    norm = math.sqrt(base.input_norm_sq)
    bound = C * y_norm * grad * norm
    return {
        "shift": np.atleast_1d(np.asarray(y)).tolist(),
        "distance": D,
        "bound": bound,
        "constant": C,
        "rate": rate,
        "grad_l1": grad,
        "ratio": D / (y_norm * norm) if y_norm > 0 and norm > 0 else 0.0,
        "passed": D <= bound + ATOL,
    }


@dataclass
class WarpField:
    """Displacement field ``tau`` in samples, shape ``(d, N, ..., N)``."""

    tau: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        if self.tau.ndim != self.tau.shape[0] + 1:
            raise ConfigurationError("tau must have shape (d, N, ..., N)")

    @property
    def d(self):
        return self.tau.shape[0]

    @property
    def sup_norm(self):
        """``sup_x |tau(x)|`` (Euclidean length of the displacement)."""
        return float(np.sqrt(np.sum(self.tau ** 2, axis=0)).max())

    @property
    def grad_sup_norm(self):
        """Largest Jacobian entry, periodic central differences."""
        worst = 0.0
        for comp in self.tau:
            for axis in range(self.d):
                g = 0.5 * (np.roll(comp, -1, axis) - np.roll(comp, 1, axis))
                worst = max(worst, float(np.abs(g).max()))
        return worst

    def scaled(self, t):
        return WarpField(self.tau * t)

    @classmethod
    def constant(cls, shape, y):
        y = np.broadcast_to(np.asarray(y, dtype=float).ravel(), (len(shape),))
        return cls(np.stack([np.full(shape, v) for v in y]))

    @classmethod
    def sinusoidal(cls, shape, amplitude, cycles=1):
        """``tau_j(x) = amplitude * sin(2 pi cycles x_j / N)`` along each axis."""
        grids = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
        return cls(np.stack([amplitude * np.sin(2 * np.pi * cycles * g / n)
                             for g, n in zip(grids, shape)]))


def warp(f, field):
    """``T_tau f(x) = f(x - tau(x))`` with periodic (bi)linear interpolation."""
    f = np.asarray(f)
    if field.tau.shape[1:] != f.shape:
        raise ConfigurationError("warp field does not match the signal grid")
    if f.ndim == 1:
        disp_r = np.zeros((1, f.size))
        disp_c = np.ascontiguousarray(field.tau[0][None, :])
        parts = lambda g: g[None, :]
        unwrap = lambda g: g[0]
    else:
        disp_r = np.ascontiguousarray(field.tau[0])
        disp_c = np.ascontiguousarray(field.tau[1])
        parts = lambda g: g
        unwrap = lambda g: g
    run = lambda g: unwrap(kernels.bilinear_warp(
        np.ascontiguousarray(parts(g), dtype=float), disp_r, disp_c))
    if np.iscomplexobj(f):
        return run(f.real) + 1j * run(f.imag)
    return run(f)


def diffeo_distance(f, field, frame, config=None, scales=(1.0, 0.5, 0.25, 0.125),
                    spec=None):
    """``D(t tau) = ||S(T_{t tau} f) - S(f)||`` over ``scales`` with a linear fit.

    The fit is ``D ~ c t`` through the origin; ``residual`` is the largest
    absolute deviation ``|D(t) - c t|``.
    """
    f = _check_signal(f, frame.lattice.shape)
    cap = 1.0 / (2 * frame.lattice.d)
    if field.grad_sup_norm > cap + 1e-12:
        raise PreconditionError(
            f"warp gradient {field.grad_sup_norm:.4g} exceeds 1/(2d) = {cap:.4g}")
    config = _stability_config(config)
    base = scatter(f, frame, config)
    ts = np.asarray(scales, dtype=float)
    D = np.array([tree_distance(scatter(warp(f, field.scaled(t)), frame, config), base)
                  for t in ts])
    c = float(np.dot(ts, D) / np.dot(ts, ts)) if np.any(ts) else 0.0
    residual = float(np.max(np.abs(D - c * ts))) if len(ts) else 0.0
    out = {
        "scales": ts.tolist(),
        "distances": D.tolist(),
        "slope": c,
        "residual": residual,
        "relative_residual": residual / c if c > 0 else 0.0,
        "tau_sup": field.sup_norm,
        "grad_tau_sup": field.grad_sup_norm,
        "norm": math.sqrt(base.input_norm_sq),
    }
    if spec is not None:
        out["band_limit"] = {"eps": spec.eps, "R": spec.R,
                             "scale": spec.R * field.sup_norm + spec.eps}
    return out


# ---------------------------------------------------------------- census


@dataclass
class Census:
    theta: float
    counts: list
    totals: list

    def __str__(self):
        return ",".join(str(c) for c in self.counts)

    def to_json(self):
        return {"theta": self.theta, "counts": self.counts, "totals": self.totals}

    def to_csv(self):
        lines = ["layer,survivors,total"]
        lines += [f"{k},{c},{t}" for k, (c, t) in enumerate(zip(self.counts, self.totals))]
        return "\n".join(lines) + "\n"


def threshold_census(tree, theta=0.005):
    """Count coefficients with ``||U[p]f * f_0|| >= theta ||f||``, per layer."""
    if not 0 < theta < 1:
        raise ConfigurationError(f"theta must lie in (0, 1), got {theta}")
    K = tree.config.K
    counts = [0] * (K + 1)
    totals = [0] * (K + 1)
    cut = (theta ** 2) * tree.input_norm_sq
    for n in tree:
        totals[n.depth] += 1
        if tree.input_norm_sq > 0 and n.coefficient_energy >= cut:
            counts[n.depth] += 1
    return Census(theta, counts, totals)
