"""Monte Carlo network simulator for validating the mean-field solution.

Base stations and users are drawn from independent planar Poisson processes
on a square observation window; interferers are sampled out to a guard margin
beyond the window so edge cells see a full interference field, but only
stations inside the window are scored. Each station starts with a uniformly
drawn battery level and drains it under a policy (an equilibrium policy field
or a fixed power), with block Rayleigh fading redrawn independently every
time step.

Per step and per station the simulator records the weighted energy
efficiency of its served links, downlink coverage indicators at the
configured SINR thresholds, and the battery level. Realizations are
independent given their spawned seeds; aggregation reduces partial sums in a
fixed realization order inside fixed-size chunks, so results are bitwise
identical for any worker count.

Conventions the statistics depend on:
  - association is nearest-station, ties to the lower index;
  - each associated user independently serves downlink or uplink each step
    (fair coin);
  - a station with an empty battery cannot serve: its uplink SINR is zero
    and its users count as outage;
  - the drawn power is truncated to battery/dt on the step that would
    overdraw, and that truncated power is what radiates.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import ConfigurationError, Field2D, GridSpec, NetworkParams

__all__ = [
    "SimWindow",
    "NetworkRealization",
    "PolicySource",
    "StepDraws",
    "TrajectoryStats",
    "sample_network",
    "path_gain",
    "downlink_sinr",
    "uplink_sinr",
    "weighted_bs_ee",
    "step_batteries",
    "coverage_probability",
    "simulate_trajectory",
]

#: Realizations per reduction chunk. Constant on purpose: chunk composition
#: must not depend on the worker count or determinism across pools breaks.
_CHUNK = 16


@dataclass(frozen=True)
class SimWindow:
    """Square observation window [-L, L]^2 with an interference guard margin."""

    half_width: float = 200.0
    guard: float = 100.0

    def __post_init__(self):
        if not self.half_width > 0:
            raise ConfigurationError(f"window half width must be positive, got {self.half_width!r}")
        if self.guard < 0:
            raise ConfigurationError(f"guard margin must be non-negative, got {self.guard!r}")


@dataclass(frozen=True)
class NetworkRealization:
    """One sampled deployment: positions, association, batteries, seed.

    ``scored`` marks base stations inside the observation window proper;
    stations in the guard ring only generate interference.
    """

    bs_positions: np.ndarray
    ue_positions: np.ndarray
    association: np.ndarray
    batteries: np.ndarray
    rng_seed: object
    scored: np.ndarray

    @property
    def valid(self) -> bool:
        """False when no station landed inside the scored window (resample)."""
        return bool(self.scored.any())

    def with_batteries(self, batteries: np.ndarray) -> "NetworkRealization":
        return replace(self, batteries=batteries)


def sample_network(params: NetworkParams, window: SimWindow, rng_seed,
                   e_max: float = 2.0) -> NetworkRealization:
    """Draw one deployment; deterministic given the seed.

    Station count is Poisson over the guarded square, user count Poisson over
    the inner window, positions uniform, batteries uniform on [0, e_max].
    ``rng_seed`` may be an integer, a SeedSequence, or an existing Generator
    (the latter lets a caller keep one stream across the whole trajectory).
    """
    if isinstance(rng_seed, np.random.Generator):
        rng = rng_seed
    else:
        rng = np.random.default_rng(rng_seed)
    outer = window.half_width + window.guard
    n_bs = rng.poisson(params.lambda_bs * (2.0 * outer) ** 2)
    bs = rng.uniform(-outer, outer, (n_bs, 2))
    n_ue = rng.poisson(params.lambda_ue * (2.0 * window.half_width) ** 2)
    ue = rng.uniform(-window.half_width, window.half_width, (n_ue, 2))
    batteries = rng.uniform(0.0, e_max, n_bs)
    if n_bs > 0 and n_ue > 0:
        d = np.hypot(ue[:, None, 0] - bs[None, :, 0], ue[:, None, 1] - bs[None, :, 1])
        association = np.argmin(d, axis=1)
    else:
        association = np.zeros(n_ue, dtype=int)
    scored = (np.abs(bs[:, 0]) <= window.half_width) & (np.abs(bs[:, 1]) <= window.half_width)
    return NetworkRealization(
        bs_positions=bs, ue_positions=ue, association=association,
        batteries=batteries, rng_seed=rng_seed, scored=scored)


def path_gain(distance, alpha: float):
    """Bounded power-law gain min(1, r^-alpha); clamped inside unit distance."""
    d = np.asarray(distance, dtype=float)
    out = np.ones_like(d)
    far = d > 1.0
    out[far] = d[far] ** (-alpha)
    if out.ndim == 0:
        return float(out)
    return out


def _distance(a: np.ndarray, b: np.ndarray) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class StepDraws:
    """Randomness of one time step: service coins and all link fadings.

    ``dl_mask`` is True where a user is served downlink this step.
    ``ue_fading`` has one unit-mean exponential per (user, station) downlink
    path; ``ul_fading`` one per user for its uplink desired path;
    ``bs_fading`` one per (station, station) cross-interference path.
    """

    dl_mask: np.ndarray
    ue_fading: np.ndarray
    ul_fading: np.ndarray
    bs_fading: np.ndarray


def draw_step(rng: np.random.Generator, n_ue: int, n_bs: int) -> StepDraws:
    """Draw one step's randomness in the fixed order the trajectory uses."""
    return StepDraws(
        dl_mask=rng.random(n_ue) < 0.5,
        ue_fading=rng.exponential(size=(n_ue, n_bs)),
        ul_fading=rng.exponential(size=n_ue),
        bs_fading=rng.exponential(size=(n_bs, n_bs)),
    )


def downlink_sinr(realization: NetworkRealization, ue_index: int,
                  powers: np.ndarray, fading: np.ndarray,
                  params: NetworkParams) -> float:
    """Downlink SINR of one user: serving signal over other-station power plus noise.

    ``fading`` holds this user's per-station channel draws.
    """
    ue = realization.ue_positions[ue_index]
    serving = int(realization.association[ue_index])
    received = np.empty(len(powers))
    for k in range(len(powers)):
        received[k] = powers[k] * fading[k] * path_gain(
            _distance(ue, realization.bs_positions[k]), params.alpha)
    signal = received[serving]
    interference = received.sum() - signal
    return float(signal / (interference + params.n0))


def uplink_sinr(realization: NetworkRealization, ue_index: int,
                powers: np.ndarray, fading_ue: float, fading_bs: np.ndarray,
                params: NetworkParams) -> float:
    """Uplink SINR at the serving station under full-duplex self-interference.

    Interference comes from the station's own transmission (h_self) and from
    the other stations' downlink transmissions over station-to-station paths.
    A station with an empty battery cannot receive; the link is outage (0).
    """
    serving = int(realization.association[ue_index])
    if realization.batteries[serving] <= 0.0:
        return 0.0
    ue = realization.ue_positions[ue_index]
    signal = params.p_t_ue * fading_ue * path_gain(
        _distance(ue, realization.bs_positions[serving]), params.alpha)
    cross = 0.0
    for m in range(len(powers)):
        if m == serving:
            continue
        cross += powers[m] * fading_bs[m] * path_gain(
            _distance(realization.bs_positions[m], realization.bs_positions[serving]),
            params.alpha)
    denom = powers[serving] * params.h_self + cross + params.n0
    return float(signal / denom)


def weighted_bs_ee(realization: NetworkRealization, bs_index: int,
                   powers: np.ndarray, draws: StepDraws,
                   params: NetworkParams) -> float:
    """Weighted energy efficiency of one station over its served links.

    Mean downlink rate over its downlink users divided by (p + p_static),
    plus beta times the mean uplink rate over its uplink users divided by
    (p_t_ue + p_ue_static). A direction with no users contributes zero.
    """
    mine = np.flatnonzero(realization.association == bs_index)
    dl = mine[draws.dl_mask[mine]]
    ul = mine[~draws.dl_mask[mine]]
    total = 0.0
    if dl.size:
        rates = [math.log1p(downlink_sinr(realization, u, powers,
                                          draws.ue_fading[u], params))
                 for u in dl]
        total += (sum(rates) / dl.size) / (powers[bs_index] + params.p_static)
    if params.beta > 0 and ul.size:
        rates = [math.log1p(uplink_sinr(realization, u, powers,
                                        draws.ul_fading[u],
                                        draws.bs_fading[:, bs_index], params))
                 for u in ul]
        total += params.beta * (sum(rates) / ul.size) / (params.p_t_ue + params.p_ue_static)
    return total


class PolicySource:
    """Maps (time, battery level) to transmit power for every station.

    Two variants: bilinear lookup into an equilibrium policy field (clamped
    at the grid edges), or a constant power until the battery runs out.
    Either way the emitted power is 0 at an empty battery and never exceeds
    p_max.
    """

    def __init__(self, kind: str, field: Optional[Field2D] = None,
                 fixed: float = 0.0, p_max: float = 1.0):
        if kind not in ("equilibrium", "fixed"):
            raise ConfigurationError(f"unknown policy source kind {kind!r}")
        if kind == "equilibrium" and field is None:
            raise ConfigurationError("equilibrium policy source needs a policy field")
        if kind == "fixed" and not (0.0 <= fixed <= p_max):
            raise ConfigurationError(
                f"fixed power {fixed!r} outside [0, {p_max!r}]")
        self.kind = kind
        self.field = field
        self.fixed = float(fixed)
        self.p_max = float(p_max)

    @classmethod
    def from_equilibrium(cls, policy_field: Field2D, p_max: float) -> "PolicySource":
        return cls("equilibrium", field=policy_field, p_max=p_max)

    @classmethod
    def fixed_power(cls, p0: float, p_max: float) -> "PolicySource":
        return cls("fixed", fixed=p0, p_max=p_max)

    def power(self, t: float, batteries: np.ndarray) -> np.ndarray:
        e = np.asarray(batteries, dtype=float)
        if self.kind == "fixed":
            out = np.where(e > 0.0, self.fixed, 0.0)
            return out
        grid = self.field.grid
        vals = self.field.values
        tc = min(max(t / grid.dt, 0.0), float(grid.num_time_steps))
        ix = min(int(tc), grid.num_time_steps - 1)
        wt = tc - ix
        ec = np.clip(e / grid.de, 0.0, float(grid.num_energy_steps))
        iy = np.minimum(ec.astype(int), grid.num_energy_steps - 1)
        we = ec - iy
        row0 = vals[ix, iy] * (1.0 - we) + vals[ix, iy + 1] * we
        row1 = vals[ix + 1, iy] * (1.0 - we) + vals[ix + 1, iy + 1] * we
        out = row0 * (1.0 - wt) + row1 * wt
        out = np.clip(out, 0.0, self.p_max)
        return np.where(e > 0.0, out, 0.0)


def step_batteries(realization: NetworkRealization, policy: PolicySource,
                   t: float, dt: float):
    """Advance every battery one step; returns (new realization, powers used).

    The drain is min(p*dt, battery), so no battery goes negative and the
    power that actually radiated this step is drain/dt.
    """
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt!r}")
    requested = policy.power(t, realization.batteries)
    drain = np.minimum(requested * dt, realization.batteries)
    powers = drain / dt
    new_batteries = realization.batteries - drain
    return realization.with_batteries(new_batteries), powers


@dataclass(frozen=True)
class TrajectoryStats:
    """Per-time-step aggregates over realizations.

    ``mean_ee`` averages the per-station weighted EE over all scored stations
    (empty service directions counting zero); ``mean_ee_link`` averages the
    per-link EE over served links, the estimator that matches the mean-field
    rate formulas. ``coverage[x, i]`` is the downlink coverage at
    ``thresholds_db[i]``, averaged per station and then over stations and
    realizations. ``battery_histogram[x, y]`` counts scored stations whose
    battery rounds to energy grid point y. Confidence half-widths are normal
    95% intervals over the realization sample.
    """

    times: np.ndarray
    thresholds_db: np.ndarray
    mean_ee: np.ndarray
    ee_halfwidth: np.ndarray
    mean_ee_link: np.ndarray
    coverage: np.ndarray
    coverage_halfwidth: np.ndarray
    mean_energy: np.ndarray
    dead_fraction: np.ndarray
    battery_histogram: np.ndarray
    n_realizations: int
    n_discarded: int
    n_bs_scored: int


def coverage_probability(stats: TrajectoryStats, threshold_db: float):
    """Coverage series and half-widths at one of the recorded thresholds."""
    match = np.flatnonzero(np.isclose(stats.thresholds_db, threshold_db))
    if match.size == 0:
        raise ConfigurationError(
            f"threshold {threshold_db!r} dB not among recorded {stats.thresholds_db}")
    i = int(match[0])
    return stats.coverage[:, i], stats.coverage_halfwidth[:, i]


def _run_realization(seed: np.random.SeedSequence, policy: PolicySource,
                     params: NetworkParams, grid: GridSpec, window: SimWindow,
                     thresholds_lin: np.ndarray):
    """Simulate one deployment across the period; returns partial sums."""
    rng = np.random.default_rng(seed)
    real = sample_network(params, window, rng, e_max=grid.e_max)
    if not real.valid:
        return None
    n_bs = real.bs_positions.shape[0]
    n_ue = real.ue_positions.shape[0]
    n_t = grid.time_points
    n_d = thresholds_lin.size

    d_ub = np.hypot(real.ue_positions[:, None, 0] - real.bs_positions[None, :, 0],
                    real.ue_positions[:, None, 1] - real.bs_positions[None, :, 1])
    g_ub = path_gain(d_ub, params.alpha)
    d_bb = np.hypot(real.bs_positions[:, None, 0] - real.bs_positions[None, :, 0],
                    real.bs_positions[:, None, 1] - real.bs_positions[None, :, 1])
    g_bb = path_gain(d_bb, params.alpha)
    np.fill_diagonal(g_bb, 0.0)

    assoc = real.association
    scored = real.scored
    n_scored = int(scored.sum())
    ue_scored = scored[assoc] if n_ue else np.zeros(0, dtype=bool)
    g_serv = g_ub[np.arange(n_ue), assoc] if n_ue else np.zeros(0)
    ul_energy_den = params.p_t_ue + params.p_ue_static

    ee = np.zeros(n_t)
    ee_link = np.zeros(n_t)
    cov = np.zeros((n_t, n_d))
    cov_ok = np.zeros(n_t)              # 1 when a coverage sample existed
    energy = np.zeros(n_t)
    dead = np.zeros(n_t)
    hist = np.zeros((n_t, grid.energy_points))

    batteries = real.batteries
    for x in range(n_t):
        t = x * grid.dt
        requested = policy.power(t, batteries)
        drain = np.minimum(requested * grid.dt, batteries)
        powers = drain / grid.dt

        draws = draw_step(rng, n_ue, n_bs)
        received = draws.ue_fading * g_ub * powers[None, :]
        total_rx = received.sum(axis=1)
        signal = received[np.arange(n_ue), assoc] if n_ue else np.zeros(0)
        sinr_dl = signal / (total_rx - signal + params.n0)
        rate_dl = np.log1p(sinr_dl)

        cross_at_bs = (draws.bs_fading * g_bb * powers[:, None]).sum(axis=0)
        sig_ul = params.p_t_ue * draws.ul_fading * g_serv
        den_ul = powers[assoc] * params.h_self + cross_at_bs[assoc] + params.n0
        alive = batteries[assoc] > 0.0
        sinr_ul = np.where(alive, sig_ul / den_ul, 0.0)
        rate_ul = np.log1p(sinr_ul)

        dl = draws.dl_mask
        ul = ~dl
        cnt_dl = np.bincount(assoc[dl], minlength=n_bs)
        sum_dl = np.bincount(assoc[dl], weights=rate_dl[dl], minlength=n_bs)
        cnt_ul = np.bincount(assoc[ul], minlength=n_bs)
        sum_ul = np.bincount(assoc[ul], weights=rate_ul[ul], minlength=n_bs)
        ee_dl = np.divide(sum_dl, cnt_dl, out=np.zeros(n_bs), where=cnt_dl > 0)
        ee_dl /= powers + params.p_static
        ee_ul = np.divide(sum_ul, cnt_ul, out=np.zeros(n_bs), where=cnt_ul > 0)
        ee_ul *= params.beta / ul_energy_den
        ee[x] = (ee_dl + ee_ul)[scored].mean()

        # link-level estimator: per-direction average over served links,
        # direction means summed, mirroring the two terms of the utility
        dl_s = dl & ue_scored
        ul_s = ul & ue_scored
        link = 0.0
        if dl_s.any():
            link += float((rate_dl[dl_s] / (powers[assoc[dl_s]] + params.p_static)).mean())
        if ul_s.any():
            link += params.beta * float(rate_ul[ul_s].mean()) / ul_energy_den
        ee_link[x] = link

        covered_bs = (cnt_dl > 0) & scored
        if covered_bs.any():
            cov_ok[x] = 1.0
            for i in range(n_d):
                hits = np.bincount(assoc[dl], weights=(sinr_dl[dl] > thresholds_lin[i]),
                                   minlength=n_bs)
                frac = hits[covered_bs] / cnt_dl[covered_bs]
                cov[x, i] = frac.mean()

        eb = batteries[scored]
        energy[x] = eb.mean()
        dead[x] = (eb <= 0.0).mean()
        bins = np.clip(np.rint(eb / grid.de).astype(int), 0, grid.num_energy_steps)
        hist[x] = np.bincount(bins, minlength=grid.energy_points)

        if x < n_t - 1:
            batteries = batteries - drain

    return {
        "ee": ee, "ee_sq": ee * ee, "ee_link": ee_link,
        "cov": cov, "cov_sq": cov * cov, "cov_ok": cov_ok,
        "energy": energy, "dead": dead, "hist": hist,
        "n_scored": n_scored, "valid": 1,
    }


def _run_chunk(args):
    """Reduce a consecutive block of realizations in index order."""
    seeds, policy, params, grid, window, thresholds_lin = args
    acc = None
    discarded = 0
    for seed in seeds:
        part = _run_realization(seed, policy, params, grid, window, thresholds_lin)
        if part is None:
            discarded += 1
            continue
        if acc is None:
            acc = part
        else:
            for key, value in part.items():
                acc[key] = acc[key] + value
    return acc, discarded


def simulate_trajectory(policy: PolicySource, params: NetworkParams,
                        grid: GridSpec, window: SimWindow,
                        n_realizations: int, thresholds_db: Sequence[float],
                        rng_seed: int, workers: int = 1) -> TrajectoryStats:
    """Aggregate EE, coverage, and battery statistics over many deployments.

    Realization i draws from the i-th spawn of ``rng_seed``, so results do
    not depend on scheduling; with ``workers`` > 1 the fixed-size chunks are
    farmed to a process pool and reduced in chunk order.
    """
    if n_realizations < 1:
        raise ConfigurationError(f"need at least one realization, got {n_realizations}")
    thresholds_db = np.asarray(list(thresholds_db), dtype=float)
    if thresholds_db.size == 0:
        raise ConfigurationError("need at least one coverage threshold")
    thresholds_lin = 10.0 ** (thresholds_db / 10.0)

    seeds = np.random.SeedSequence(rng_seed).spawn(n_realizations)
    chunks = [(seeds[i:i + _CHUNK], policy, params, grid, window, thresholds_lin)
              for i in range(0, n_realizations, _CHUNK)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, chunks))
    else:
        results = [_run_chunk(c) for c in chunks]

    acc = None
    discarded = 0
    for part, part_discarded in results:
        discarded += part_discarded
        if part is None:
            continue
        if acc is None:
            acc = part
        else:
            for key, value in part.items():
                acc[key] = acc[key] + value
    if acc is None:
        raise ConfigurationError(
            "every realization was discarded (no stations in the window); "
            "increase the window size or the station intensity")

    n = acc["valid"]
    mean_ee = acc["ee"] / n
    ee_var = np.maximum(acc["ee_sq"] / n - mean_ee ** 2, 0.0)
    ee_hw = 1.96 * np.sqrt(ee_var / n)
    n_cov = np.maximum(acc["cov_ok"], 1.0)
    cov = acc["cov"] / n_cov[:, None]
    cov_var = np.maximum(acc["cov_sq"] / n_cov[:, None] - cov ** 2, 0.0)
    cov_hw = 1.96 * np.sqrt(cov_var / n_cov[:, None])
    return TrajectoryStats(
        times=grid.times(),
        thresholds_db=thresholds_db,
        mean_ee=mean_ee,
        ee_halfwidth=ee_hw,
        mean_ee_link=acc["ee_link"] / n,
        coverage=cov,
        coverage_halfwidth=cov_hw,
        mean_energy=acc["energy"] / n,
        dead_fraction=acc["dead"] / n,
        battery_histogram=acc["hist"],
        n_realizations=n,
        n_discarded=discarded,
        n_bs_scored=int(acc["n_scored"]),
    )
