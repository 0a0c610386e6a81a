"""Empirical-versus-analytic comparison tools.

Histogramming with explicit out-of-range accounting, Kolmogorov-Smirnov and
L1 distances against the closed-form laws, and moment tables with standard
errors. The analytic CDF is tabulated once per (density, eta, t) on a
4096-knot grid in the rate variable omega, where the law is smooth; the q
and tau axes inherit the tabulation through their monotone transforms, so
the boundary spikes of the q density cost nothing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import analytic
from .ensemble import EnsembleSnapshot

CDF_GRID_KNOTS = 4096
_CDF_REFINE = 8


@dataclass
class Histogram:
    """Bin counts plus the density normalized by total sample count.

    ``normalized_density`` is counts / (n_samples * bin_width), so it
    integrates to the in-range fraction; out-of-range samples are counted in
    ``n_out_of_range``, never folded into edge bins.
    """

    edges: np.ndarray
    counts: np.ndarray
    normalized_density: np.ndarray
    n_samples: int
    n_out_of_range: int


def build_histogram(samples, edges) -> Histogram:
    """Histogram with half-open bins [e_i, e_{i+1}); deterministic."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2:
        raise ValueError("need at least two bin edges")
    if np.any(np.diff(edges) <= 0.0):
        raise ValueError("bin edges must be strictly increasing")
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    idx = np.searchsorted(edges, samples, side="right") - 1
    in_range = (idx >= 0) & (idx < len(edges) - 1) & (samples < edges[-1])
    counts = np.bincount(idx[in_range], minlength=len(edges) - 1).astype(np.int64)
    widths = np.diff(edges)
    density = counts / (n * widths) if n else np.zeros(len(edges) - 1)
    return Histogram(
        edges=edges,
        counts=counts,
        normalized_density=density,
        n_samples=int(n),
        n_out_of_range=int(n - in_range.sum()),
    )


class AnalyticCdf:
    """Tabulated CDF of one of the closed-form densities.

    The table is built by trapezoid integration of the omega density on a
    refined uniform grid over the truncation window, then renormalized so
    the last knot is exactly 1. Evaluation clamps to {0, 1} outside the
    window (tail mass below 1e-25).
    """

    def __init__(self, which: str, eta: float, t: float, knots: int = CDF_GRID_KNOTS):
        if which not in analytic.DENSITY_NAMES:
            raise ValueError(
                f"unknown density {which!r}, expected one of {analytic.DENSITY_NAMES}"
            )
        if not (t > 0.0 and eta > 0.0):
            raise ValueError("t and eta must be positive")
        self.which = which
        self.eta = eta
        self.t = t
        L = analytic.omega_truncation(t, eta)
        fine = np.linspace(-L, L, knots * _CDF_REFINE + 1)
        dens = analytic.p_Omega(fine, t, eta)
        cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(fine))]
        )
        cum /= cum[-1]
        self._omega = fine[::_CDF_REFINE]
        self._cdf = cum[::_CDF_REFINE]

    def _to_omega(self, x):
        x = np.asarray(x, dtype=float)
        if self.which == "P_Omega":
            return x
        if self.which == "P_Q":
            return x / self.t
        # P_q and P_tau pass through q; clip so atanh stays finite
        if self.which == "P_q":
            q = x
        else:
            if np.any(x < 0.5) or np.any(x > 1.0):
                raise ValueError("purity arguments must lie in [1/2, 1]")
            q = np.sqrt(np.clip(2.0 * x - 1.0, 0.0, 1.0))
        edge = np.nextafter(1.0, 0.0)
        q = np.clip(q, -edge, edge)
        return np.arctanh(q) / self.t

    def __call__(self, x):
        w = self._to_omega(x)
        F = np.interp(w, self._omega, self._cdf, left=0.0, right=1.0)
        if self.which == "P_tau":
            # tau folds +-q onto one axis: F_tau = 2 F_q(sqrt(2 tau - 1)) - 1
            F = 2.0 * F - 1.0
        out = np.clip(F, 0.0, 1.0)
        return float(out) if np.ndim(x) == 0 else out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draws on the axis of ``which``."""
        keep = np.concatenate([[True], np.diff(self._cdf) > 0.0])
        grid, cdf = self._omega[keep], self._cdf[keep]
        w = np.interp(rng.random(n), cdf, grid)
        if self.which == "P_Omega":
            return w
        if self.which == "P_Q":
            return w * self.t
        q = np.tanh(w * self.t)
        if self.which == "P_q":
            return q
        return (1.0 + q * q) / 2.0


def ks_distance(samples, cdf) -> float:
    """Sup-norm distance between the empirical CDF and ``cdf`` (a callable)."""
    samples = np.sort(np.asarray(samples, dtype=float))
    n = samples.size
    if n == 0:
        raise ValueError("need at least one sample")
    F = np.asarray(cdf(samples), dtype=float)
    i = np.arange(n)
    return float(np.max(np.maximum(F - i / n, (i + 1) / n - F)))


def ks_distance_two_sample(a, b) -> float:
    """Sup-norm distance between two empirical CDFs."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("need at least one sample on each side")
    grid = np.concatenate([a, b])
    Fa = np.searchsorted(a, grid, side="right") / a.size
    Fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(Fa - Fb).max())


def l1_distance(hist: Histogram, cdf) -> float:
    """Total variation style L1 between binned empirical and analytic mass.

    Sums |empirical bin probability - analytic bin probability| over the
    bins plus the mismatch of the out-of-range mass; lies in [0, 2].
    """
    if hist.n_samples == 0:
        raise ValueError("histogram is empty")
    emp = hist.counts / hist.n_samples
    F = np.asarray(cdf(hist.edges), dtype=float)
    ana = np.diff(F)
    out_emp = hist.n_out_of_range / hist.n_samples
    out_ana = 1.0 - (F[-1] - F[0])
    return float(np.abs(emp - ana).sum() + abs(out_emp - out_ana))


@dataclass
class ComparisonReport:
    """Distances and moments of one snapshot against the closed-form law."""

    time: float
    eta: float
    backend: str
    ks_statistic: float
    l1_distance: float
    n_samples: int
    moment_table: list

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "eta": self.eta,
            "eta_t": self.eta * self.time,
            "backend": self.backend,
            "ks_statistic": self.ks_statistic,
            "l1_distance": self.l1_distance,
            "n_samples": self.n_samples,
            "moments": [
                {"name": n, "empirical": e, "analytic": a, "stderr": s}
                for n, e, a, s in self.moment_table
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def default_edges(which: str, eta: float, t: float) -> np.ndarray:
    """House binning: 101 uniform bins on [-1, 1] for q, 100 on (1/2, 1] for tau."""
    if which == "P_q":
        return np.linspace(-1.0, 1.0, 102)
    if which == "P_tau":
        return np.linspace(0.5, 1.0, 101)
    s = eta * t
    half = s + 6.0 * math.sqrt(s)
    if which == "P_Omega":
        half /= t
    return np.linspace(-half, half, 102)


def moment_report(snapshot: EnsembleSnapshot, eta: float) -> ComparisonReport:
    """Mean q, mean tau and Var q with standard errors against quadrature values.

    langevin_Q snapshots are mapped through tanh first, so all backends are
    compared on the q axis.
    """
    vals = np.asarray(snapshot.values, dtype=float)
    if vals.size == 0:
        raise ValueError("snapshot holds no values")
    q = np.tanh(vals) if snapshot.backend == "langevin_Q" else vals
    n = q.size
    t = snapshot.time

    tau = (1.0 + q * q) / 2.0
    mean_q = float(q.mean())
    se_q = float(q.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    mean_tau = float(tau.mean())
    se_tau = float(tau.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    var_q = float(q.var(ddof=1)) if n > 1 else 0.0
    # delta-method error bar for the variance estimator
    centered = q - mean_q
    m2 = float((centered**2).mean())
    m4 = float((centered**4).mean())
    se_var = math.sqrt(max(m4 - m2 * m2, 0.0) / n)

    ana_second = analytic.q_second_moment(t, eta)
    table = [
        ("mean_q", mean_q, 0.0, se_q),
        ("mean_tau", mean_tau, 0.5 + 0.5 * ana_second, se_tau),
        ("var_q", var_q, ana_second, se_var),
    ]
    if t > 0.0:
        cdf = AnalyticCdf("P_q", eta, t)
        ks = ks_distance(q, cdf)
        l1 = l1_distance(build_histogram(q, default_edges("P_q", eta, t)), cdf)
    else:
        ks = float("nan")
        l1 = float("nan")
    return ComparisonReport(
        time=t,
        eta=eta,
        backend=snapshot.backend,
        ks_statistic=ks,
        l1_distance=l1,
        n_samples=int(n),
        moment_table=table,
    )
