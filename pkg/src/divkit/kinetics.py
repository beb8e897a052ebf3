"""Monte Carlo wealth-exchange model with divergence-instrumented relaxation.

Binary trades v* = (1 - lam) v + lam w + eta v (and symmetrically for
the partner, with an independent risk draw) exchange a fraction lam and
add a mean-zero multiplicative shock of variance sigma.  In the grazing
regime (small lam and sigma at fixed ratio) the wealth law relaxes to a
mean-one inverse-Gamma distribution with Pareto index 1 + 2 lam / sigma.

Away from that regime the binary dynamics have their own tail behavior:
the second moment is stationary only when sigma < 2 lam (1 - lam), and
negative post-trade wealth forces a boundary policy, every variant of
which either biases the mean (redraw, truncate) or admits debt (allow).
The simulator is faithful to the trade rule; the divergence probes
report whatever the dynamics actually do.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend as bk
from .core import DivergenceReport, ReferenceDensity, WeightedSampleSet, pairwise_power_sum
from .energy import EnergyOrder, _step_cdf_l2
from .fourier import CachedFourierProbe, QuadratureSpec
from .transport import wasserstein_1d

__all__ = [
    "TradeParams",
    "EnsembleState",
    "initial_state",
    "step",
    "equilibrium_density",
    "equilibrium_sample",
    "tail_index",
    "relaxation_trace",
    "default_checkpoints",
    "trace_values",
    "monotone_decrease_fraction",
    "decay_rate_fit",
]

ETA_LAWS = {"two_point": bk.ETA_TWO_POINT, "uniform_symmetric": bk.ETA_UNIFORM}
POLICIES = {
    "redraw": bk.POLICY_REDRAW,
    "truncate": bk.POLICY_TRUNCATE,
    "allow": bk.POLICY_ALLOW,
}

IDX_BATCH = 16_384  # agent indices per refill (8192 candidate pairs)
US_BATCH = 262_144  # uniforms per refill


@dataclass(frozen=True)
class TradeParams:
    """Trade-rule parameters; eta has mean zero and variance sigma exactly."""

    lam: float
    sigma: float
    eta_law: str = "two_point"
    clamp_negative: str = "redraw"

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("lam must lie in (0, 1)")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.eta_law not in ETA_LAWS:
            raise ValueError(f"eta_law must be one of {tuple(ETA_LAWS)}")
        if self.clamp_negative not in POLICIES:
            raise ValueError(f"clamp_negative must be one of {tuple(POLICIES)}")

    @property
    def pareto_index(self):
        """Grazing-limit tail exponent 1 + 2 lam / sigma."""
        return 1.0 + 2.0 * self.lam / self.sigma

    @property
    def eta_scale(self):
        if self.eta_law == "two_point":
            return math.sqrt(self.sigma)
        return math.sqrt(3.0 * self.sigma)

    @property
    def boundary_active(self):
        """Whether trades can propose negative wealth at all."""
        return self.eta_scale > 1.0 - self.lam


@dataclass(frozen=True)
class EnsembleState:
    """Wealth ensemble at a point in kinetic time (interactions / N).

    Stepping consumes the attached random generator, so treat a state as
    moved-from once it has been advanced.
    """

    wealths: np.ndarray
    time: float
    params: TradeParams
    rng_seed: int
    rng: np.random.Generator = field(repr=False)
    truncations: int = 0

    @property
    def n_agents(self):
        return len(self.wealths)

    def mean_wealth(self):
        return float(np.mean(self.wealths))

    def as_sample_set(self):
        return WeightedSampleSet(self.wealths[:, None])


def initial_state(params, n_agents, seed, initial="delta"):
    """Fresh ensemble: all wealth 1, or an iid equilibrium sample."""
    if n_agents < 2:
        raise ValueError("need at least two agents")
    rng = np.random.Generator(np.random.PCG64(seed))
    if initial == "delta":
        w = np.ones(n_agents)
    elif initial == "equilibrium":
        ref = equilibrium_density(params)
        w = np.asarray(ref.ppf(rng.random(n_agents)))
    else:
        raise ValueError("initial must be 'delta' or 'equilibrium'")
    return EnsembleState(
        wealths=w, time=0.0, params=params, rng_seed=seed, rng=rng, truncations=0
    )


def step(state, n_interactions):
    """Advance the ensemble by a number of binary interactions.

    Pairs and risk draws come from fixed-size pre-drawn batches, so the
    trajectory is a pure function of (seed, params, schedule) on either
    kernel backend.
    """
    if n_interactions < 0:
        raise ValueError("n_interactions must be nonnegative")
    params = state.params
    w = state.wealths.copy()
    rng = state.rng
    kind = ETA_LAWS[params.eta_law]
    policy = POLICIES[params.clamp_negative]
    remaining = int(n_interactions)
    trunc = state.truncations
    while remaining > 0:
        idx = rng.integers(0, len(w), size=IDX_BATCH).astype(np.int64)
        us = rng.random(US_BATCH)
        done, _, _, tr = bk.wealth_trade_loop(
            w, idx, us, params.lam, params.eta_scale, kind, policy, remaining
        )
        remaining -= done
        trunc += tr
    return replace(
        state,
        wealths=w,
        time=state.time + n_interactions / len(w),
        truncations=trunc,
    )


def equilibrium_density(params):
    """Inverse-Gamma stationary law of the drift-diffusion limit (mean one)."""
    mu = params.pareto_index
    if mu <= 1.0:
        raise ValueError("pareto index must exceed 1")
    ref = ReferenceDensity("inverse_gamma", dim=1, mu=mu)
    lo = float(ref.ppf(1e-12))
    hi = float(ref.ppf(1.0 - 1e-10))
    xs = np.linspace(lo, hi, 200_001)
    mass = float(np.trapezoid(ref.pdf(xs), xs))
    if abs(mass - 1.0) > 1e-8:
        raise AssertionError(f"equilibrium normalization off: {mass}")
    return ref

def equilibrium_sample(params, n, kind="stratified"):
    """Discretize the equilibrium: stratified mid-quantile atoms."""
    ref = equilibrium_density(params)
    if kind != "stratified":
        raise ValueError("only stratified sampling is provided here")
    qs = (np.arange(n) + 0.5) / n
    return WeightedSampleSet(np.asarray(ref.ppf(qs))[:, None])


def tail_index(state_or_wealths, k):
    """Hill estimator of the Pareto tail index over the top-k order statistics."""
    if isinstance(state_or_wealths, EnsembleState):
        w = np.asarray(state_or_wealths.wealths)
    elif isinstance(state_or_wealths, WeightedSampleSet):
        w = np.asarray(state_or_wealths.points[:, 0])
    else:
        w = np.asarray(state_or_wealths, dtype=np.float64)
    n = len(w)
    if k < 50:
        raise ValueError("need at least 50 upper order statistics")
    if k > n // 2:
        raise ValueError(f"k = {k} exceeds half the sample size {n}")
    top = np.sort(w)[::-1][: k + 1]
    if top[-1] <= 0:
        raise ValueError("top order statistics must be positive")
    hill = float(np.mean(np.log(top[:-1]) - np.log(top[-1])))
    return 1.0 / hill


def default_checkpoints(horizon, count):
    """t = 0 plus geometrically spaced times up to the horizon."""
    if count < 3:
        raise ValueError("need at least 3 checkpoints")
    ts = np.geomspace(horizon / 64.0, horizon, count - 1)
    return np.concatenate([[0.0], ts])


def _energy_probe(reference, alpha):
    if alpha == 1.0:
        # In one dimension the squared order-1 energy distance equals twice
        # the integrated squared CDF difference, which the merged step CDFs
        # give in O((N + M) log) instead of O(N M) pairwise sums.
        def probe(mu):
            value = 2.0 * _step_cdf_l2(mu, reference)
            return DivergenceReport(
                family="Energy", order=1.0, value=max(value, 0.0),
                error_estimate=0.0, diagnostics={"method": "cdf"},
            )

        return probe
    # General orders pay the pairwise cost; the reference self-sum is
    # evaluated once and reused across checkpoints.
    self_ref = pairwise_power_sum(reference, reference, alpha)

    def probe(mu):
        cross = pairwise_power_sum(mu, reference, alpha)
        self_mu = pairwise_power_sum(mu, mu, alpha)
        order = EnergyOrder(alpha)
        value = order.sign * (self_mu + self_ref - 2.0 * cross)
        return DivergenceReport(
            family="Energy", order=alpha, value=max(value, 0.0),
            error_estimate=0.0, diagnostics={"method": "pairwise_cached_self"},
        )

    return probe


def _probe_engines(probes, reference, eq_scale):
    engines = {}
    for spec in probes:
        name, _, arg = spec.partition(":")
        if name == "energy":
            alpha = float(arg) if arg else 1.0
            engines[spec] = _energy_probe(reference, alpha)
        elif name == "fourier":
            s = float(arg) if arg else 2.0
            # Moderate fixed grid: relaxation probes need consistent relative
            # decay across checkpoints, not a tight absolute bound.
            quad = QuadratureSpec(
                truncation_radius=256.0, radial_points=2048, angular_points=1
            )
            engines[spec] = CachedFourierProbe(reference, s, quad)
        elif name == "w1":
            engines[spec] = lambda mu: wasserstein_1d(mu, reference, 1.0)
        else:
            raise ValueError(f"unknown probe {spec!r}")
    return engines


def relaxation_trace(
    params,
    n_agents,
    horizon,
    probes=("energy:1", "fourier:2", "w1"),
    checkpoints=14,
    seed=0,
    initial="delta",
    eq_points=100_000,
):
    """Evolve an ensemble and measure its distance to the equilibrium law.

    At each checkpoint the empirical wealth law is compared with a
    stratified discretization of the inverse-Gamma equilibrium by every
    requested probe.  Returns a dict with the records (time, probe,
    value, error_estimate), per-checkpoint ensemble means, and metadata
    including the drift-diffusion reference decay rate (recorded, not
    asserted: the binary dynamics need not follow it).
    """
    reference = equilibrium_sample(params, eq_points)
    eq_scale = float(np.max(reference.points))
    engines = _probe_engines(probes, reference, eq_scale)
    ts = default_checkpoints(horizon, checkpoints)
    targets = np.rint(ts * n_agents).astype(np.int64)
    state = initial_state(params, n_agents, seed, initial)
    records = []
    means = []
    for t_idx, target in enumerate(targets):
        state = step(state, int(target - round(state.time * n_agents)))
        snapshot = state.as_sample_set()
        means.append({"time": state.time, "mean_wealth": state.mean_wealth()})
        for spec, engine in engines.items():
            rep = engine(snapshot)
            records.append(
                {
                    "time": state.time,
                    "probe": spec,
                    "value": rep.value,
                    "error_estimate": rep.error_estimate,
                }
            )
    sigma = params.sigma
    # Drift-diffusion decay-rate display for the r = -1 weighted norm.
    fp_rate = 0.5 * (2 * -1 + 1) * (sigma * (2 * -1 + 3) / 2.0 + 2.0)
    return {
        "records": records,
        "means": means,
        "metadata": {
            "lam": params.lam,
            "sigma": params.sigma,
            "eta_law": params.eta_law,
            "clamp_negative": params.clamp_negative,
            "n_agents": n_agents,
            "horizon": horizon,
            "seed": seed,
            "initial": initial,
            "eq_points": eq_points,
            "pareto_index": params.pareto_index,
            "truncations": state.truncations,
            "fp_reference_rate_r_minus_1": fp_rate,
            "boundary_active": params.boundary_active,
        },
        "final_wealths": state.wealths,
    }


def trace_values(trace, probe):
    """(times, values) for one probe of a relaxation trace."""
    recs = [r for r in trace["records"] if r["probe"] == probe]
    return np.array([r["time"] for r in recs]), np.array([r["value"] for r in recs])


def _preplateau_window(values, floor_factor):
    """Index past the last pre-plateau checkpoint.

    The plateau crop only forgives floor noise at the end of a trace
    that actually decayed; a series that never rose above the floor band
    (including one that grows into it) keeps its full length, so upward
    drifts are counted, not cropped away.
    """
    floor = max(float(np.median(values[-3:])), 1e-300)
    band = floor_factor * floor
    if values[0] <= band:
        return len(values)
    below = np.nonzero(values <= band)[0]
    hi = int(below[0]) if len(below) else len(values)
    # A dip below the final level is still decay: extend to the minimum.
    hi = max(hi, int(np.argmin(values)) + 1)
    return max(hi, min(4, len(values)))


def monotone_decrease_fraction(trace, probe, burn_in=1, floor_factor=1.25):
    """Fraction of adjacent checkpoint pairs that decrease, pre-plateau."""
    _, values = trace_values(trace, probe)
    hi = _preplateau_window(values, floor_factor)
    window = values[burn_in:hi]
    if len(window) < 2:
        return 1.0
    drops = np.sum(np.diff(window) < 0)
    return float(drops) / (len(window) - 1)


def decay_rate_fit(trace, probe, burn_in=1, floor_factor=1.25):
    """Least-squares log-linear decay rate and R^2 over the pre-plateau window."""
    times, values = trace_values(trace, probe)
    hi = _preplateau_window(values, floor_factor)
    t = times[burn_in:hi]
    v = values[burn_in:hi]
    mask = v > 0
    t, v = t[mask], np.log(v[mask])
    if len(t) < 3:
        raise ValueError("not enough pre-plateau points for a rate fit")
    tbar, vbar = t.mean(), v.mean()
    slope = float(np.sum((t - tbar) * (v - vbar)) / np.sum((t - tbar) ** 2))
    pred = vbar + slope * (t - tbar)
    ss_res = float(np.sum((v - pred) ** 2))
    ss_tot = float(np.sum((v - vbar) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"rate": slope, "r_squared": r2, "points": int(len(t))}
