"""Mean-field interference and the expected-rate quadrature engine.

In the mean-field limit the aggregate interference seen anywhere in the
network collapses to a constant times the population-average transmit power:

    I_mean = 2 pi lambda_bs (1/2 + 1/(alpha - 2)) * E[p],

the factor coming from integrating the bounded path gain min(1, r^-alpha)
over a plane of transmitters. Expected link rates then reduce to the double
integral

    Phi(s) = int_{omega>0} int_{r>0} exp(-(e^omega - 1) * s * r^alpha)
             * 2 pi lambda_bs r exp(-lambda_bs pi r^2) dr domega,

where r is the nearest-station distance, fading is unit-mean exponential,
and s is the interference-plus-noise level divided by the desired signal
power. The downlink rate phi1 uses s = (i + n0)/p; the uplink rate phi2 adds
the self-interference of full-duplex operation to the numerator of s.

Substituting u = lambda_bs pi r^2 makes the radial weight exp(-u) and turns
the exponent into A(omega) * u^(alpha/2) with A = (e^omega - 1) * s * k and
k = (lambda_bs pi)^(-alpha/2). The integrand then has two awkward features:
the omega integrand varies over decades near zero, and in u it develops a
boundary layer of width A^(-2/alpha) whenever A is large. The scheme below
handles both with a fixed node budget: omega is split into a logarithmic
panel on [1e-9, 1] and a linear panel up to the cutoff, and the u rule is
rescaled per omega by 1 + A^(2/alpha) so the nodes track the layer. Doubling
the node counts moves the result by less than 1e-6 relative across the whole
operating range, which plain tensorized Gauss-Legendre at the same budget
does not achieve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .core import (
    MASS_TOLERANCE,
    ConfigurationError,
    DivergenceError,
    NetworkParams,
)

__all__ = [
    "InterferenceConstant",
    "MeanInterference",
    "QuadratureSpec",
    "UtilityTable",
    "DEFAULT_QUADRATURE",
    "interference_constant",
    "expected_power",
    "mean_interference",
    "phi1",
    "phi2",
    "weighted_utility",
    "utility_profile",
    "utility_table",
]

#: Contribution of rate levels omega below this point is bounded by the
#: point itself (the integrand is at most 1), so it is negligible.
_OMEGA_FLOOR = 1e-9


@dataclass(frozen=True)
class InterferenceConstant:
    """Geometric factor multiplying E[p] in the mean interference."""

    value: float


def interference_constant(lambda_bs: float, alpha: float) -> InterferenceConstant:
    """Return 2 pi lambda_bs (1/2 + 1/(alpha - 2)).

    This is the planar integral of the bounded path gain min(1, r^-alpha):
    the unit disc contributes 1/2, the rest contributes 1/(alpha - 2).
    """
    if not alpha > 2:
        raise DivergenceError(
            f"aggregate interference integral diverges for alpha <= 2, got {alpha!r}")
    if lambda_bs < 0:
        raise ConfigurationError(f"lambda_bs must be non-negative, got {lambda_bs!r}")
    return InterferenceConstant(2.0 * math.pi * lambda_bs * (0.5 + 1.0 / (alpha - 2.0)))


def expected_power(policy_row: np.ndarray, m_row: np.ndarray) -> float:
    """Population-average transmit power sum_y p(y) m(y) for one time row."""
    p = np.asarray(policy_row, dtype=float)
    m = np.asarray(m_row, dtype=float)
    if p.shape != m.shape:
        raise ConfigurationError(
            f"policy row and mass row lengths differ: {p.shape} vs {m.shape}")
    mass = m.sum()
    if abs(mass - 1.0) > MASS_TOLERANCE:
        raise ConfigurationError(f"mass row sums to {mass!r}, expected 1")
    return float(p @ m)


@dataclass(frozen=True)
class MeanInterference:
    """Mean interference at a base-station receiver and at a downlink user.

    Both equal the geometric constant times the average transmit power, so
    the two fields are always identical; keeping them separate preserves the
    distinct roles they play in the two link directions.
    """

    i_rru: float
    i_ue: float
    expected_power: float


def mean_interference(policy_row: np.ndarray, m_row: np.ndarray,
                      const: InterferenceConstant) -> MeanInterference:
    ep = expected_power(policy_row, m_row)
    i = const.value * ep
    return MeanInterference(i_rru=i, i_ue=i, expected_power=ep)


@dataclass(frozen=True)
class QuadratureSpec:
    """Node budget and truncation of the expected-rate double integral.

    ``omega_cutoff`` truncates the rate variable (nats); ``r_cutoff``
    truncates the radial integral in the transformed coordinate
    u = lambda_bs pi r^2, where the truncation error is intensity-independent.
    """

    omega_nodes: int = 64
    r_nodes: int = 64
    omega_cutoff: float = 30.0
    r_cutoff: float = 40.0
    scheme: str = "gl-split-log-omega-scaled-u"

    def __post_init__(self):
        if self.omega_nodes < 8 or self.r_nodes < 8:
            raise ConfigurationError(
                f"need at least 8 nodes per dimension, got "
                f"({self.omega_nodes}, {self.r_nodes})")
        if not (self.omega_cutoff > 0 and self.r_cutoff > 0):
            raise ConfigurationError("quadrature cutoffs must be positive")


DEFAULT_QUADRATURE = QuadratureSpec()


@lru_cache(maxsize=32)
def _nodes(omega_nodes: int, r_nodes: int, omega_cutoff: float, r_cutoff: float):
    """Precompute quadrature nodes and weights for a spec, cached."""
    n1 = omega_nodes // 2
    n2 = omega_nodes - n1
    xg1, wg1 = np.polynomial.legendre.leggauss(n1)
    # log panel: tau = ln(omega) on [ln floor, 0]
    t_lo = math.log(_OMEGA_FLOOR)
    tau = 0.5 * (xg1 + 1.0) * (0.0 - t_lo) + t_lo
    om_log = np.exp(tau)
    w_log = 0.5 * (0.0 - t_lo) * wg1 * om_log
    # linear panel: omega on [1, cutoff]
    xg2, wg2 = np.polynomial.legendre.leggauss(n2)
    om_lin = 0.5 * (xg2 + 1.0) * (omega_cutoff - 1.0) + 1.0
    w_lin = 0.5 * (omega_cutoff - 1.0) * wg2
    om = np.concatenate([om_log, om_lin])
    w_om = np.concatenate([w_log, w_lin])
    expm1_om = np.expm1(om)
    xu, wu = np.polynomial.legendre.leggauss(r_nodes)
    u_base = 0.5 * r_cutoff * (xu + 1.0)
    w_base = 0.5 * r_cutoff * wu
    for arr in (om, w_om, expm1_om, u_base, w_base):
        arr.setflags(write=False)
    return om, w_om, expm1_om, u_base, w_base


def _phi_core(s: np.ndarray, alpha: float, lambda_bs: float,
              quad: QuadratureSpec) -> np.ndarray:
    """Evaluate Phi at an array of interference-to-signal levels s.

    Vectorized over s with one (omega, s, u) tensor pass. The per-omega
    rescaling gamma = 1 + A^(2/alpha) compresses the u rule into the decay
    layer of exp(-A u^(alpha/2)) while keeping exp(-u) resolved.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ConfigurationError("interference-to-signal level must be non-negative")
    om, w_om, expm1_om, u_base, w_base = _nodes(
        quad.omega_nodes, quad.r_nodes, quad.omega_cutoff, quad.r_cutoff)
    k_geom = (lambda_bs * math.pi) ** (-alpha / 2.0)
    a = expm1_om[:, None] * s[None, :] * k_geom          # (W, S)
    gamma = 1.0 + a ** (2.0 / alpha)
    u = u_base[None, None, :] / gamma[:, :, None]        # (W, S, U)
    integrand = np.exp(-u - a[:, :, None] * u ** (alpha / 2.0))
    inner = (integrand @ w_base) / gamma                  # (W, S)
    return w_om @ inner


def phi1(p: float, i_ue: float, params: NetworkParams,
         quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Expected downlink rate (nats) at transmit power p and mean interference i_ue.

    Zero power carries no signal, so phi1(0, .) = 0. With both noise and
    interference zero the rate integral has no finite value.
    """
    if p < 0:
        raise ConfigurationError(f"transmit power must be non-negative, got {p!r}")
    if i_ue < 0:
        raise ConfigurationError(f"interference must be non-negative, got {i_ue!r}")
    if p == 0.0:
        return 0.0
    denom = i_ue + params.n0
    if denom <= 0.0:
        raise DivergenceError(
            "downlink rate integral diverges with zero noise and zero interference")
    return float(_phi_core(np.array([denom / p]), params.alpha, params.lambda_bs, quad)[0])


def _phi2_level(p: float, i_rru: float, params: NetworkParams) -> float | None:
    """Interference-to-signal level for the uplink, or None when the rate is 0."""
    numer = i_rru + params.n0 + p * params.h_self
    if params.uplink_signal == "ue-power":
        if params.p_t_ue <= 0.0:
            raise ConfigurationError(
                "uplink desired-signal power p_t_ue is zero; no uplink rate exists")
        return numer / params.p_t_ue
    # own-power convention: the station's own transmit power carries the signal
    if p == 0.0:
        return None
    return numer / p


def phi2(p: float, i_rru: float, params: NetworkParams,
         quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Expected uplink rate (nats) under full-duplex self-interference.

    The receiving station's own transmit power p enters the interference
    numerator as p * h_self, so the rate is decreasing in p at fixed
    everything else.
    """
    if p < 0:
        raise ConfigurationError(f"transmit power must be non-negative, got {p!r}")
    if i_rru < 0:
        raise ConfigurationError(f"interference must be non-negative, got {i_rru!r}")
    level = _phi2_level(p, i_rru, params)
    if level is None:
        return 0.0
    if level <= 0.0:
        raise DivergenceError(
            "uplink rate integral diverges with zero noise and zero interference")
    return float(_phi_core(np.array([level]), params.alpha, params.lambda_bs, quad)[0])


def utility_profile(p_values: np.ndarray, i: MeanInterference, params: NetworkParams,
                    quad: QuadratureSpec = DEFAULT_QUADRATURE) -> np.ndarray:
    """Weighted energy efficiency at each power in ``p_values``.

    U(p) = phi1(p, i_ue) / (p + p_static) + beta * phi2(p, i_rru) / (p_t_ue + p_ue_static),
    evaluated with one vectorized quadrature pass per link direction.
    """
    p = np.asarray(p_values, dtype=float)
    if np.any(p < 0) or np.any(p > params.p_max):
        raise ConfigurationError("powers must lie in [0, p_max]")
    out = np.zeros_like(p)

    pos = p > 0
    if np.any(pos):
        denom = i.i_ue + params.n0
        if denom <= 0.0:
            raise DivergenceError(
                "downlink rate integral diverges with zero noise and zero interference")
        phi1_vals = _phi_core(denom / p[pos], params.alpha, params.lambda_bs, quad)
        out[pos] = phi1_vals / (p[pos] + params.p_static)

    if params.beta > 0:
        ul_denom = params.p_t_ue + params.p_ue_static
        if ul_denom <= 0.0:
            raise ConfigurationError(
                "uplink energy denominator p_t_ue + p_ue_static must be positive "
                "when beta > 0")
        numer = i.i_rru + params.n0 + p * params.h_self
        if params.uplink_signal == "ue-power":
            if params.p_t_ue <= 0.0:
                raise ConfigurationError(
                    "uplink desired-signal power p_t_ue is zero; no uplink rate exists")
            levels = numer / params.p_t_ue
            phi2_vals = _phi_core(levels, params.alpha, params.lambda_bs, quad)
        else:
            phi2_vals = np.zeros_like(p)
            if np.any(pos):
                phi2_vals[pos] = _phi_core(
                    numer[pos] / p[pos], params.alpha, params.lambda_bs, quad)
        if np.any(phi2_vals < 0) or np.any(~np.isfinite(phi2_vals)):
            raise DivergenceError("uplink rate quadrature produced a non-finite value")
        out += params.beta * phi2_vals / ul_denom
    return out


def weighted_utility(p: float, i: MeanInterference, params: NetworkParams,
                     quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Weighted energy efficiency of one station at power p against the mean field."""
    return float(utility_profile(np.array([p]), i, params, quad)[0])


@dataclass(frozen=True)
class UtilityTable:
    """Memoized utility over a uniform power scan at fixed mean interference.

    The utility depends on the population only through the interference pair,
    so one table serves every energy level of a time row. A cubic spline over
    the scan supports continuous refinement of the argmax; a shape-preserving
    interpolant would be useless here because it can never rise above the
    best sampled node, while the spline recovers smooth interior peaks (it is
    exact on cubics) and degenerates to an exact constant on flat data, which
    keeps tie-breaking toward smaller power intact.
    """

    p_grid: np.ndarray
    u_values: np.ndarray
    interference: MeanInterference

    def __post_init__(self):
        p = np.asarray(self.p_grid, dtype=float)
        u = np.asarray(self.u_values, dtype=float)
        if p.shape != u.shape or p.ndim != 1 or p.size < 2:
            raise ConfigurationError("utility table needs matching 1-d grids of size >= 2")
        if not np.all(np.isfinite(u)):
            raise ConfigurationError("utility table contains non-finite values")
        p = p.copy()
        u = u.copy()
        p.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "p_grid", p)
        object.__setattr__(self, "u_values", u)
        object.__setattr__(
            self, "_interp",
            CubicSpline(p, u, bc_type="not-a-knot", extrapolate=False))

    def interpolant(self) -> CubicSpline:
        return self._interp


def utility_table(i: MeanInterference, params: NetworkParams,
                  quad: QuadratureSpec = DEFAULT_QUADRATURE,
                  num_scan_points: int = 128,
                  profile_fn=utility_profile) -> UtilityTable:
    """Tabulate the weighted utility on num_scan_points+1 powers over [0, p_max].

    ``profile_fn`` is an injection point for tests that need a synthetic
    utility; it must have the signature of :func:`utility_profile`.
    """
    if num_scan_points < 16:
        raise ConfigurationError(f"need at least 16 scan points, got {num_scan_points}")
    p_grid = np.linspace(0.0, params.p_max, num_scan_points + 1)
    u_values = profile_fn(p_grid, i, params, quad)
    return UtilityTable(p_grid=p_grid, u_values=u_values, interference=i)
