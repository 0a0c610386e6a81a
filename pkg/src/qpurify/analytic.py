"""Closed-form trajectory statistics of the monitored qubit.

Everything in this module derives from one exact transition density. In the
coordinate Q = atanh(q), the monitored diffusion dQ = eta*tanh(Q)*dt + dW
(with dW^2 = eta*dt) started at Q=0 has

    p_Q(Q, t) = (2*pi*eta*t)^(-1/2) * exp(-Q^2/(2*eta*t) + ln cosh Q - eta*t/2)

The time-averaged rate omega = Q/t carries the same law reparameterized,
and the bounded coordinate q = tanh(Q) and the purity tau = (1+q^2)/2
follow by change of variables:

    p_omega(w, t) = t * p_Q(w*t, t)
    p_q(q, t)     = p_omega(atanh(q)/t, t) / (t*(1-q^2))
    p_tau(tau, t) = 2 * p_q(sqrt(2*tau-1), t) / sqrt(2*tau-1)

The large-deviation action S(w, t) = w^2*t/(2*eta) - ln cosh(w*t) governs the
shape of p_omega: below eta*t = 1 it has a single minimum at w = 0; above,
two symmetric minima at +-w* with w*/eta = tanh(w* t) appear and the law
turns bimodal, concentrating on +-eta as t grows.

Numerical conventions:
  - exponents are assembled in log space and exponentiated once; ln cosh is
    computed overflow-free as |x| + log1p(exp(-2|x|)) - ln 2
  - quadrature is adaptive (scipy.integrate.quad) with absolute tolerance
    1e-10, truncated to |omega| <= eta + 12*sqrt(eta/t); the Gaussian
    envelope exp(-(|omega|-eta)^2 * t/(2*eta)) bounds the discarded tail
    below 1e-25
  - integrals over q and tau are always computed by substituting
    q = tanh(omega*t), which removes the boundary layers at |q| = 1 and the
    endpoint singularities of the tau density
  - the extremal equation is solved by bracketing bisection on
    (1e-15*eta, eta], never by Newton steps, so the near-threshold regime
    cannot diverge
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

LN2 = math.log(2.0)

TRUNCATION_SIGMAS = 12.0
QUAD_ABS_TOL = 1e-10
QUAD_LIMIT = 200

DENSITY_NAMES = ("P_Q", "P_Omega", "P_q", "P_tau")


def _check_t_eta(t, eta: float, allow_zero_t: bool = False) -> None:
    if not eta > 0.0:
        raise ValueError(f"rate eta must be positive, got {eta!r}")
    ta = np.asarray(t, dtype=float)
    if allow_zero_t:
        if np.any(ta < 0.0):
            raise ValueError(f"time must be nonnegative, got {t!r}")
    elif not np.all(ta > 0.0):
        raise ValueError(f"time must be positive, got {t!r}")


def log_cosh(x):
    """ln cosh(x) without overflow: |x| + log1p(exp(-2|x|)) - ln 2."""
    ax = np.abs(np.asarray(x, dtype=float))
    # exp(-2|x|) underflows to 0 beyond |x| ~ 372; capping the argument keeps
    # the product -2*|x| itself from overflowing at |x| near the float max
    e = np.exp(-2.0 * np.minimum(ax, 400.0))
    out = ax + np.log1p(e) - LN2
    return float(out) if np.ndim(x) == 0 else out


def sech_sq(x):
    """sech(x)^2 without overflow, via exp(-2|x|)."""
    ax = np.abs(np.asarray(x, dtype=float))
    e = np.exp(-2.0 * np.minimum(ax, 400.0))
    out = 4.0 * e / (1.0 + e) ** 2
    return float(out) if np.ndim(x) == 0 else out


def p_Q(Q, t: float, eta: float):
    """Transition density of Q = atanh(q) at time t, started from Q = 0."""
    _check_t_eta(t, eta)
    Qa = np.asarray(Q, dtype=float)
    s = eta * t
    log_p = -0.5 * np.log(2.0 * np.pi * s) - Qa * Qa / (2.0 * s) + log_cosh(Qa) - s / 2.0
    out = np.exp(log_p)
    return float(out) if np.ndim(Q) == 0 else out


def p_Omega(omega, t: float, eta: float):
    """Density of the time-averaged rate omega = Q/t; equals t * p_Q(omega*t, t)."""
    _check_t_eta(t, eta)
    w = np.asarray(omega, dtype=float)
    s = eta * t
    log_p = (
        0.5 * np.log(t / (2.0 * np.pi * eta))
        - w * w * t / (2.0 * eta)
        + log_cosh(w * t)
        - s / 2.0
    )
    out = np.exp(log_p)
    return float(out) if np.ndim(omega) == 0 else out


def p_q(q, t: float, eta: float):
    """Density of the state coordinate q = tanh(Q) on (-1, 1).

    Uses ln cosh(atanh q) = -0.5*ln(1 - q^2), with 1 - q^2 factored as
    (1 - q)(1 + q) so the boundary spikes near |q| = 1 keep full relative
    precision (q*q loses it catastrophically there).
    """
    _check_t_eta(t, eta)
    qa = np.asarray(q, dtype=float)
    if np.any(np.abs(qa) >= 1.0):
        raise ValueError("state coordinate density requires |q| < 1")
    s = eta * t
    log_p = (
        -0.5 * np.log(2.0 * np.pi * s)
        - np.arctanh(qa) ** 2 / (2.0 * s)
        - 1.5 * np.log((1.0 - qa) * (1.0 + qa))
        - s / 2.0
    )
    out = np.exp(log_p)
    return float(out) if np.ndim(q) == 0 else out


def p_tau(tau, t: float, eta: float):
    """Density of the purity tau = (1 + q^2)/2 on the open interval (1/2, 1).

    Both endpoint singularities are integrable; integrals over tau should be
    taken through ``density_mass`` (or any substitution q = tanh(omega*t)),
    never by naive quadrature on the tau axis.
    """
    _check_t_eta(t, eta)
    ta = np.asarray(tau, dtype=float)
    if np.any(ta <= 0.5) or np.any(ta >= 1.0):
        raise ValueError("purity density requires 1/2 < tau < 1")
    qa = np.sqrt(2.0 * ta - 1.0)
    out = 2.0 * p_q(qa, t, eta) / qa
    return float(out) if np.ndim(tau) == 0 else out


def action(omega, t: float, eta: float):
    """Large-deviation action S(omega, t) = omega^2*t/(2*eta) - ln cosh(omega*t)."""
    _check_t_eta(t, eta, allow_zero_t=True)
    w = np.asarray(omega, dtype=float)
    out = w * w * t / (2.0 * eta) - log_cosh(w * t)
    return float(out) if np.ndim(omega) == 0 else out


@dataclass
class ExtremaReport:
    """Extrema of the action over omega at fixed time.

    ``extrema`` holds (omega, kind) pairs sorted by omega, kind in
    {"min", "max"}; ``threshold_flag`` is True when eta*t > 1 and the two
    symmetric nonzero minima exist.
    """

    time: float
    eta: float
    extrema: tuple[tuple[float, str], ...]
    threshold_flag: bool

    @property
    def nonzero_root(self) -> float | None:
        for w, kind in self.extrema:
            if w > 0.0 and kind == "min":
                return w
        return None


def extremal_roots(t: float, eta: float) -> ExtremaReport:
    """Solve omega/eta = tanh(omega*t) for the action's extrema.

    For eta*t <= 1 the only extremum is the minimum at omega = 0. For
    eta*t > 1 the origin turns into a maximum and two symmetric minima
    appear at +-omega*, found by bisection on (1e-15*eta, eta]: the
    residual omega*/eta - tanh(omega* t) vanishes to better than 1e-12.
    """
    _check_t_eta(t, eta)
    if eta * t <= 1.0:
        return ExtremaReport(t, eta, ((0.0, "min"),), False)

    def f(x: float) -> float:
        return x / eta - math.tanh(x * t)

    lo, hi = 1e-15 * eta, eta
    # f(lo) < 0 whenever eta*t > 1; f(hi) = 1 - tanh(eta*t) >= 0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    return ExtremaReport(
        t, eta, ((-root, "min"), (0.0, "max"), (root, "min")), True
    )


def omega_truncation(t: float, eta: float) -> float:
    """Half-width of the omega quadrature window, eta + 12*sqrt(eta/t)."""
    return eta + TRUNCATION_SIGMAS * math.sqrt(eta / t)


def _quad(f, a: float, b: float, inner_points=()) -> float:
    pts = [p for p in inner_points if a < p < b]
    val, _ = integrate.quad(
        f, a, b, points=pts or None, epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=QUAD_LIMIT
    )
    return val


def q_second_moment(t: float, eta: float) -> float:
    """E[q^2] at time t, by quadrature of tanh(omega*t)^2 against p_Omega."""
    _check_t_eta(t, eta, allow_zero_t=True)
    if t == 0.0:
        return 0.0
    L = omega_truncation(t, eta)

    def f(w: float) -> float:
        return p_Omega(w, t, eta) * math.tanh(w * t) ** 2

    return _quad(f, -L, L, (-eta, 0.0, eta))


def mean_purity(t: float, eta: float) -> float:
    """Mean purity 1/2 + (1/2) * integral of p_Omega(w, t) * tanh(w*t)^2 dw.

    Equals 1/2 at t = 0 and increases toward 1 as eta*t grows.
    """
    return 0.5 + 0.5 * q_second_moment(t, eta)


def density_mass(which: str, t: float, eta: float) -> float:
    """Integral of one of the implemented densities over its truncated support.

    The q and tau masses are computed by pushing the integral forward to the
    omega axis with q = tanh(omega*t); this evaluates the densities pointwise
    on their own axes while integrating in a singularity-free variable.
    """
    _check_t_eta(t, eta)
    if which not in DENSITY_NAMES:
        raise ValueError(f"unknown density {which!r}, expected one of {DENSITY_NAMES}")
    L = omega_truncation(t, eta)
    if which == "P_Q":
        s = eta * t
        LQ = L * t
        return _quad(lambda x: p_Q(x, t, eta), -LQ, LQ, (-s, 0.0, s))
    if which == "P_Omega":
        return _quad(lambda w: p_Omega(w, t, eta), -L, L, (-eta, 0.0, eta))
    # Pointwise evaluation of p_q at a float q near the boundary reconstructs
    # 1 - q^2 with relative error ~eps/(1 - q^2); once 1 - q^2 drops below
    # 1e-9 the integrand p_q(tanh(w*t)) * t * sech(w*t)^2 is taken through
    # its exact analytic continuation p_Omega(w) instead (2*p_Omega for the
    # folded tau integrand). The handover keeps the quadrature error below
    # ~1e-9 while exercising the q and tau densities on all representable mass.
    switch = 1e-9

    if which == "P_q":

        def f_q(w: float) -> float:
            x = w * t
            q = math.tanh(x)
            if sech_sq(x) < switch or abs(q) >= 1.0:
                return p_Omega(w, t, eta)
            return p_q(q, t, eta) * t * sech_sq(x)

        return _quad(f_q, -L, L, (-eta, 0.0, eta))

    def f_tau(w: float) -> float:
        x = w * t
        th = math.tanh(x)
        tau = (1.0 + th * th) / 2.0
        if sech_sq(x) < switch or tau <= 0.5 or tau >= 1.0:
            return 2.0 * p_Omega(w, t, eta)
        return p_tau(tau, t, eta) * t * th * sech_sq(x)

    return _quad(f_tau, 0.0, L, (eta,))


def fokker_planck_residual(Q, t: float, eta: float):
    """Defect of p_Q in its forward equation, normalized by p_Q.

    The time derivative, drift term and diffusion term of the forward
    equation dP/dt = -d/dQ[eta*tanh(Q)*P] + (eta/2)*d^2P/dQ^2 each reduce to
    a closed-form factor times p_Q:

        time:      Q^2/(2*eta*t^2) - 1/(2*t) - eta/2
        drift:     Q*tanh(Q)/t - eta
        diffusion: -Q*tanh(Q)/t + eta/2 - 1/(2*t) + Q^2/(2*eta*t^2)

    The returned value is time - (drift + diffusion); it vanishes
    identically in exact arithmetic, so anything beyond roundoff indicates
    a transcription error in one of the factors.
    """
    _check_t_eta(t, eta)
    Qa = np.asarray(Q, dtype=float)
    ta = np.asarray(t, dtype=float)
    time_factor = Qa * Qa / (2.0 * eta * ta * ta) - 1.0 / (2.0 * ta) - eta / 2.0
    drift_factor = Qa * np.tanh(Qa) / ta - eta
    diffusion_factor = (
        -Qa * np.tanh(Qa) / ta
        + eta / 2.0
        - 1.0 / (2.0 * ta)
        + Qa * Qa / (2.0 * eta * ta * ta)
    )
    out = time_factor - (drift_factor + diffusion_factor)
    return float(out) if np.ndim(Q) == 0 and np.ndim(t) == 0 else out


def fp_residual_max(eta: float, Q_grid, t_grid) -> float:
    """Max |fokker_planck_residual| over the outer product of the two grids."""
    Qg = np.asarray(Q_grid, dtype=float)
    tg = np.asarray(t_grid, dtype=float)
    if np.any(tg <= 0.0):
        raise ValueError("time grid must be strictly positive")
    res = fokker_planck_residual(Qg[:, None], tg[None, :], eta)
    return float(np.max(np.abs(res)))


@dataclass
class DensityCurve:
    """A density sampled on a grid, ready for CSV emission."""

    which: str
    eta: float
    time: float
    x: np.ndarray
    density: np.ndarray

    def mass(self) -> float:
        """Trapezoidal mass over the sampled grid."""
        return float(np.trapezoid(self.density, self.x))

    @property
    def points(self):
        return list(zip(self.x.tolist(), self.density.tolist()))


_DENSITY_FUNCS = {"P_Q": p_Q, "P_Omega": p_Omega, "P_q": p_q, "P_tau": p_tau}


def density_curve(which: str, eta: float, t: float, x) -> DensityCurve:
    """Evaluate the named density on a grid; grid must respect its domain."""
    if which not in DENSITY_NAMES:
        raise ValueError(f"unknown density {which!r}, expected one of {DENSITY_NAMES}")
    xa = np.asarray(x, dtype=float)
    dens = np.asarray(_DENSITY_FUNCS[which](xa, t, eta), dtype=float)
    return DensityCurve(which=which, eta=eta, time=t, x=xa, density=dens)
