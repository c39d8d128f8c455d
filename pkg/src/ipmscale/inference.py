"""Posterior assembly and Markov chain Monte Carlo fitting.

The sampler is Metropolis-within-Gibbs: scalar random-walk updates on
transformed kernel and GP hyperparameters, and elliptical slice updates for
the latent GP field of each bin-year term. Proposal scales adapt toward a
target acceptance rate during burn-in only, so the post-burn-in chain is a
fixed Markov kernel.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, gammaln, logit
from scipy.stats import gamma as gamma_dist
from scipy.stats import invgamma

from .climate import SparsePanel, per_plot_intensity
from .cox import INTENSITY_FLOOR, GPConfig, bin_counts, cholesky_factor, covariance_matrix, gp_log_density
from .errors import ConstraintError, ConvergenceError, DomainError
from .grid import TraitGrid, integrate
from .kernel import KernelParams

CHAIN_HEADER = ["iteration", "param", "value"]

_LOG2PI = math.log(2.0 * math.pi)


def solve_boundary(q_max: float, delta_max: float) -> tuple[float, float]:
    """Intercept parameters pinned by the zero-population maxima.

    Survival at zero population equals q_max, which fixes the odds q0;
    recruitment at zero population equals delta_max, which fixes delta0.
    delta_max below 1 would need a negative delta0 and is rejected.
    """
    if not 0.0 < q_max < 1.0:
        raise DomainError(f"q_max {q_max} must lie strictly between 0 and 1")
    if delta_max < 1.0:
        raise DomainError(
            f"delta_max {delta_max} must be at least 1 (delta0 is nonnegative)"
        )
    return q_max / (1.0 - q_max), math.log(delta_max)


def identifiability_bound(
    totals, min_half_width: float = 0.05
) -> tuple[float, tuple[float, float]]:
    """Bound on per-step relative population change, and the implied interval.

    The summed survival and recruitment response must stay inside
    (1 - rho_max, 1 + rho_max), where rho_max is the largest observed
    relative change between consecutive totals. A (nearly) constant series
    would degenerate, so the interval keeps at least the given half width.
    """
    totals = np.asarray(totals, dtype=float)
    if totals.ndim != 1 or totals.size < 2:
        raise DomainError("need at least two population totals")
    if np.any(totals <= 0):
        raise DomainError("population totals must all be positive")
    rho = np.diff(totals) / totals[:-1]
    rho_max = float(np.max(np.abs(rho)))
    half = max(rho_max, min_half_width)
    return rho_max, (1.0 - half, 1.0 + half)


@dataclass(frozen=True)
class PriorSpec:
    """Prior settings for the free parameters.

    Climate coefficients are vague normals. Decay rates (q1, delta1, and
    delta0 when it is estimated) are exponential; a ``None`` rate for q1 or
    delta1 is calibrated at fit time so that at least half the prior mass
    respects the identifiability interval. The GP decay prior is uniform on
    a range tied to the grid extent, so its bounds may also be ``None``
    until a grid is known.
    """

    beta_var: float = 100.0
    sigma_scale: float = 1.0
    eta_shape: float = 2.0
    eta_rate: float = 10.0
    delta0_rate: float = 1.0
    q1_rate: float | None = None
    delta1_rate: float | None = None
    sigma2_eps_shape: float = 2.0
    sigma2_eps_scale: float = 1.0
    phi_lower: float | None = None
    phi_upper: float | None = None

    def for_grid(self, grid: TraitGrid) -> "PriorSpec":
        """Fill GP decay bounds from the grid extent when unset."""
        extent = grid.upper - grid.lower
        lower = self.phi_lower if self.phi_lower is not None else 3.0 / extent
        upper = self.phi_upper if self.phi_upper is not None else 300.0 / extent
        if not 0 < lower < upper:
            raise DomainError(f"phi bounds ({lower}, {upper}) must be ordered and positive")
        return replace(self, phi_lower=lower, phi_upper=upper)

    def log_density(self, name: str, value: float) -> float:
        if name.startswith("beta"):
            return -0.5 * (_LOG2PI + math.log(self.beta_var)) - value**2 / (
                2.0 * self.beta_var
            )
        if name == "sigma":
            if value <= 0:
                return -math.inf
            s2 = self.sigma_scale**2
            return 0.5 * math.log(2.0 / math.pi) - math.log(self.sigma_scale) - value**2 / (2.0 * s2)
        if name == "eta":
            if value <= 0:
                return -math.inf
            a, b = self.eta_shape, self.eta_rate
            return a * math.log(b) - gammaln(a) + (a - 1.0) * math.log(value) - b * value
        if name in ("q1", "delta0", "delta1"):
            rate = {
                "q1": self.q1_rate,
                "delta0": self.delta0_rate,
                "delta1": self.delta1_rate,
            }[name]
            rate = 1.0 if rate is None else rate
            if value < 0:
                return -math.inf
            return math.log(rate) - rate * value
        if name == "sigma2_eps":
            if value <= 0:
                return -math.inf
            a, b = self.sigma2_eps_shape, self.sigma2_eps_scale
            return a * math.log(b) - gammaln(a) - (a + 1.0) * math.log(value) - b / value
        if name == "phi":
            if self.phi_lower is None or self.phi_upper is None:
                raise DomainError("phi prior bounds are unset; call for_grid first")
            if not self.phi_lower <= value <= self.phi_upper:
                return -math.inf
            return -math.log(self.phi_upper - self.phi_lower)
        raise DomainError(f"no prior defined for parameter {name!r}")

    def median(self, name: str) -> float:
        if name.startswith("beta"):
            return 0.0
        if name == "sigma":
            return 0.6744897501960817 * self.sigma_scale
        if name == "eta":
            return float(gamma_dist.ppf(0.5, self.eta_shape, scale=1.0 / self.eta_rate))
        if name in ("q1", "delta0", "delta1"):
            rate = {
                "q1": self.q1_rate,
                "delta0": self.delta0_rate,
                "delta1": self.delta1_rate,
            }[name]
            rate = 1.0 if rate is None else rate
            return math.log(2.0) / rate
        if name == "sigma2_eps":
            return float(
                invgamma.ppf(0.5, self.sigma2_eps_shape, scale=self.sigma2_eps_scale)
            )
        if name == "phi":
            if self.phi_lower is None or self.phi_upper is None:
                raise DomainError("phi prior bounds are unset; call for_grid first")
            return math.sqrt(self.phi_lower * self.phi_upper)
        raise DomainError(f"no prior defined for parameter {name!r}")


@dataclass(eq=False)
class TermData:
    """Data for one transition term: bin l stepping from year index t to t+1."""

    t: int
    l: int
    year: int
    anchor: np.ndarray
    mass: float
    design: np.ndarray
    counts: np.ndarray
    m: int


@dataclass(eq=False)
class FitContext:
    """Everything the posterior needs, precomputed from a panel."""

    grid: TraitGrid
    terms: list[TermData]
    rho_max: float
    constraint: tuple[float, float]
    totals: np.ndarray
    floor: float = INTENSITY_FLOOR

    @property
    def masses(self) -> np.ndarray:
        return np.array([term.mass for term in self.terms])

    @property
    def design_dim(self) -> int:
        return int(self.terms[0].design.size)


def build_fit_context(
    panel: SparsePanel,
    grid: TraitGrid,
    bandwidth: float | None = None,
    min_half_width: float = 0.05,
    floor: float = INTENSITY_FLOOR,
) -> FitContext:
    """Assemble anchors, pooled counts, and the identifiability interval.

    Terms exist only for bin-years observed on both sides of the
    transition; a panel with no such term cannot be fit.
    """
    observed_years = [
        t for t in range(panel.n_years) if panel.observed[:, t].any()
    ]
    if len(observed_years) < 2:
        raise DomainError("need observed patterns in at least two years")
    totals = np.array([panel.observed_total(t) for t in observed_years], dtype=float)
    rho_max, constraint = identifiability_bound(totals, min_half_width)
    terms: list[TermData] = []
    dims = set()
    for (t, l) in panel.live_terms():
        anchor = per_plot_intensity(panel, t, l, grid, bandwidth)
        end_ids = panel.end_members(t, l)
        pooled = np.zeros(grid.cells, dtype=np.int64)
        for j in end_ids:
            pooled += bin_counts(panel.pattern_at(j, t + 1), grid).counts
        design = np.asarray(panel.bin_covariates[l], dtype=float)
        dims.add(design.size)
        terms.append(
            TermData(
                t=t,
                l=l,
                year=panel.years[t],
                anchor=anchor.values,
                mass=integrate(anchor),
                design=design,
                counts=pooled,
                m=len(end_ids),
            )
        )
    if not terms:
        raise DomainError(
            "no live transition terms: every bin-year lacks observed plots on "
            "one side (see the panel summary for occupancy)"
        )
    if len(dims) != 1:
        raise DomainError(f"bin covariate lengths differ: {sorted(dims)}")
    return FitContext(
        grid=grid,
        terms=terms,
        rho_max=rho_max,
        constraint=constraint,
        totals=totals,
        floor=floor,
    )


class _Predictor:
    """Batched kernel step of all term anchors at one parameter setting.

    Matches pseudo_ipm_step on each term exactly; the growth convolution is
    cached on (mu, sigma) and the recruit profile on eta, so scalar blocks
    that touch neither pay only vector work.
    """

    def __init__(self, ctx: FitContext) -> None:
        self.grid = ctx.grid
        self.width = ctx.grid.width
        centers = ctx.grid.centers
        self._diff = centers[:, None] - centers[None, :]
        self._offsets = centers - ctx.grid.lower
        self.anchor_mat = np.stack([t.anchor for t in ctx.terms], axis=1)
        self.masses = np.array([t.mass for t in ctx.terms])
        self.design_mat = np.stack([t.design for t in ctx.terms], axis=0)
        self._conv_cache: dict[tuple[float, float], np.ndarray] = {}
        self._recruit_cache: dict[float, np.ndarray] = {}

    def _conv(self, mu: float, sigma: float) -> np.ndarray:
        key = (mu, sigma)
        if key not in self._conv_cache:
            if len(self._conv_cache) > 8:
                self._conv_cache.clear()
            u = (self._diff - mu) / sigma
            growth = np.exp(-0.5 * u * u) / (sigma * math.sqrt(2.0 * math.pi))
            self._conv_cache[key] = growth @ self.anchor_mat
        return self._conv_cache[key]

    def _recruit(self, eta: float) -> np.ndarray:
        if eta not in self._recruit_cache:
            if len(self._recruit_cache) > 8:
                self._recruit_cache.clear()
            self._recruit_cache[eta] = eta * np.exp(-eta * self._offsets)
        return self._recruit_cache[eta]

    def predicted(self, params: KernelParams) -> np.ndarray:
        """Stepped intensity values, one column per term."""
        conv = self._conv(params.mu, params.sigma)
        recruit = self._recruit(params.eta)
        q = expit(np.log(params.q0) - params.q1 * self.masses)
        delta = np.exp(params.delta0 - params.delta1 * self.masses)
        scale = np.exp(self.design_mat @ params.beta)
        return conv * (self.width * q * scale)[None, :] + recruit[:, None] * (
            delta * self.masses * scale
        )[None, :]


@dataclass(eq=False)
class ModelState:
    """One point in the posterior: parameters, GP settings, latent fields."""

    params: KernelParams
    gp: GPConfig
    eps: dict[tuple[int, int], np.ndarray]


def _response_ok(
    q0: float,
    q1: float,
    delta0: float,
    delta1: float,
    masses: np.ndarray,
    interval: tuple[float, float],
) -> bool:
    q = expit(np.log(q0) - q1 * masses)
    delta = np.exp(delta0 - delta1 * masses)
    total = q + delta
    return bool(np.all(total > interval[0]) and np.all(total < interval[1]))


def check_constraint(params: KernelParams, ctx: FitContext) -> bool:
    """Whether q + Delta stays inside the identifiability interval at every
    realized anchor mass."""
    return _response_ok(
        params.q0, params.q1, params.delta0, params.delta1, ctx.masses, ctx.constraint
    )


def _poisson_terms(
    pred: np.ndarray, eps_mat: np.ndarray, ctx: FitContext, counts_mat: np.ndarray,
    m_vec: np.ndarray,
) -> np.ndarray:
    """Per-term Poisson log-likelihoods for stacked predictions and latents."""
    base = np.maximum(pred, ctx.floor)
    lam = base * np.exp(eps_mat)
    exposure = -m_vec * ctx.grid.width * lam.sum(axis=0)
    point = (counts_mat * (np.log(base) + eps_mat)).sum(axis=0)
    totals = counts_mat.sum(axis=0)
    return exposure + point + totals * np.log(m_vec)


def log_posterior(
    state: ModelState,
    ctx: FitContext,
    priors: PriorSpec,
    free_names: list[str] | None = None,
) -> float:
    """Log posterior density (up to a constant) of a full model state.

    Raises ConstraintError outside the identifiability region. Latent
    fields must be supplied for every term in the context.
    """
    if not check_constraint(state.params, ctx):
        raise ConstraintError(
            "summed survival and recruitment response leaves the interval "
            f"{ctx.constraint}"
        )
    predictor = _Predictor(ctx)
    pred = predictor.predicted(state.params)
    eps_mat = np.stack([state.eps[(t.t, t.l)] for t in ctx.terms], axis=1)
    counts_mat = np.stack([t.counts for t in ctx.terms], axis=1).astype(float)
    m_vec = np.array([t.m for t in ctx.terms], dtype=float)
    pois = _poisson_terms(pred, eps_mat, ctx, counts_mat, m_vec)
    chol = cholesky_factor(
        covariance_matrix(ctx.grid, state.gp), state.gp.sigma2_eps
    )
    gp_total = sum(
        gp_log_density(state.eps[(t.t, t.l)], chol) for t in ctx.terms
    )
    if free_names is None:
        free_names = (
            ["q1", "sigma", "eta", "delta0", "delta1"]
            + [f"beta_{k}" for k in range(state.params.beta.size)]
            + ["sigma2_eps", "phi"]
        )
    values = _state_values(state)
    prior_total = sum(priors.log_density(name, values[name]) for name in free_names)
    return float(pois.sum() + gp_total + prior_total)


def _state_values(state: ModelState) -> dict[str, float]:
    values = {
        "q1": state.params.q1,
        "sigma": state.params.sigma,
        "eta": state.params.eta,
        "delta0": state.params.delta0,
        "delta1": state.params.delta1,
        "sigma2_eps": state.gp.sigma2_eps,
        "phi": state.gp.phi,
    }
    for k, b in enumerate(state.params.beta):
        values[f"beta_{k}"] = float(b)
    return values


def random_walk_update(value, log_target, scale, rng):
    """One symmetric random-walk Metropolis update of a scalar.

    ``log_target`` must return -inf outside the support. Returns the new
    value, its log target, and whether the proposal was accepted.
    """
    current_lt = log_target(value)
    proposal = value + scale * rng.standard_normal()
    proposal_lt = log_target(proposal)
    if math.log(rng.random()) < proposal_lt - current_lt:
        return proposal, proposal_lt, True
    return value, current_lt, False


def elliptical_slice_update(eps, chol, loglik, rng, max_shrink: int = 1000):
    """Elliptical slice update of a latent Gaussian vector.

    The Gaussian prior enters through the ellipse; ``loglik`` is the data
    term only. Always returns a state on the slice.
    """
    nu = chol @ rng.standard_normal(eps.size)
    logy = loglik(eps) + math.log(rng.random())
    theta = rng.random() * 2.0 * math.pi
    lo, hi = theta - 2.0 * math.pi, theta
    for _ in range(max_shrink):
        prop = eps * math.cos(theta) + nu * math.sin(theta)
        ll = loglik(prop)
        if ll > logy:
            return prop, ll
        if theta < 0:
            lo = theta
        else:
            hi = theta
        theta = lo + (hi - lo) * rng.random()
    raise ConvergenceError("elliptical slice bracket failed to shrink")


@dataclass
class MCMCConfig:
    """Sampler settings.

    ``q_max`` fixes the survival ceiling (and so q0). ``delta_max`` fixes
    delta0 when given; left as None, delta0 is estimated. delta1 is held at
    zero unless ``estimate_delta1`` is set, which is the sparse-panel
    default. ``fix`` pins otherwise-free parameters (by sample name, e.g.
    "sigma" or "beta_0") at given values.
    """

    iterations: int = 50_000
    burn_in: int = 10_000
    thin: int = 10
    seed: int = 0
    q_max: float = 0.5
    delta_max: float | None = None
    estimate_delta1: bool = False
    mu: float = 0.0
    gp_family: str = "exponential"
    target_accept: float = 0.3
    adapt_decay: float = 0.66
    update_latents: bool = True
    use_likelihood: bool = True
    store_latent: bool = True
    fix: dict[str, float] | None = None

    def __post_init__(self) -> None:
        if self.iterations <= self.burn_in:
            raise DomainError("iterations must exceed burn_in")
        if self.burn_in < 0 or self.thin < 1:
            raise DomainError("burn_in must be >= 0 and thin >= 1")
        if not 0 < self.target_accept < 1:
            raise DomainError("target_accept must lie in (0, 1)")


@dataclass(eq=False)
class PosteriorChain:
    """Thinned post-burn-in samples plus bookkeeping."""

    names: tuple[str, ...]
    samples: np.ndarray
    kept_iterations: np.ndarray
    log_post_trace: np.ndarray
    accept_rates: dict[str, float]
    fixed: dict[str, float]
    constraint: tuple[float, float]
    rho_max: float
    gp_family: str
    seed: int
    iterations: int
    burn_in: int
    thin: int
    priors: PriorSpec
    latent: dict[tuple[int, int], np.ndarray] | None = None
    interrupted: bool = False

    @property
    def n_kept(self) -> int:
        return int(self.samples.shape[0])

    def column(self, name: str) -> np.ndarray:
        return self.samples[:, self.names.index(name)]

    def beta_names(self) -> list[str]:
        return sorted(
            (n for n in self.names if n.startswith("beta_")),
            key=lambda n: int(n.split("_")[1]),
        )

    def kernel_params(self, i: int) -> KernelParams:
        row = dict(zip(self.names, self.samples[i]))
        merged = {**self.fixed, **row}
        beta = np.array([merged.pop(n) for n in self.beta_names()])
        return KernelParams(
            q0=merged["q0"],
            q1=merged["q1"],
            sigma=merged["sigma"],
            delta0=merged["delta0"],
            delta1=merged["delta1"],
            eta=merged["eta"],
            beta=beta,
            mu=merged["mu"],
        )

    def gp_config(self, i: int) -> GPConfig:
        row = dict(zip(self.names, self.samples[i]))
        merged = {**self.fixed, **row}
        return GPConfig(merged["sigma2_eps"], merged["phi"], self.gp_family)


def _calibrate_rates(
    priors: PriorSpec,
    q0: float,
    delta0: float,
    delta1: float,
    masses: np.ndarray,
    interval: tuple[float, float],
    estimate_delta1: bool,
) -> PriorSpec:
    """Fill None exponential rates so the prior median sits inside the
    constraint, putting at least half the prior mass there."""
    lo = interval[0]
    gmax = float(masses.max())
    updates = {}
    if priors.q1_rate is None:
        a = lo - math.exp(delta0 - delta1 * gmax)
        if 0.0 < a < q0 / (1.0 + q0):
            half = (math.log(q0) - float(logit(a))) / gmax
            rate = math.log(2.0) / half if half > 0 else 1e4
        else:
            rate = 1.0
        updates["q1_rate"] = float(np.clip(rate, 1e-2, 1e4))
    if priors.delta1_rate is None and estimate_delta1:
        b = lo - float(expit(math.log(q0)))  # survival bound as q1 -> 0
        if b > 0 and delta0 > math.log(b):
            half = (delta0 - math.log(b)) / gmax
            rate = math.log(2.0) / half if half > 0 else 1e4
        else:
            rate = 1.0
        updates["delta1_rate"] = float(np.clip(rate, 1e-2, 1e4))
    elif priors.delta1_rate is None:
        updates["delta1_rate"] = 1.0
    return replace(priors, **updates) if updates else priors


def _initial_values(
    priors: PriorSpec,
    fixed: dict[str, float],
    free: list[str],
    masses: np.ndarray,
    interval: tuple[float, float],
) -> dict[str, float]:
    """Prior medians, with (q1, delta0, delta1) moved inside the constraint."""
    values = {name: priors.median(name) for name in free}

    def merged(overrides: dict[str, float]) -> tuple[float, float, float, float]:
        pool = {**fixed, **values, **overrides}
        return pool["q0"], pool["q1"], pool["delta0"], pool["delta1"]

    lo, hi = interval
    gmin, gmax = float(masses.min()), float(masses.max())
    if "q1" not in free:
        if _response_ok(*merged({}), masses, interval):
            return values
        q1_grid = [values.get("q1", fixed.get("q1", 0.0))]
    else:
        # Survival is flat in q1 once q1·γ_max falls below ~0.1 (response
        # saturated on) or climbs far above 1 (fully off); a start on either
        # plateau mixes badly. Ascend from just inside the responsive range
        # and take the smallest feasible value.
        q1_grid = list(np.logspace(math.log10(max(1e-8, 0.1 / gmax)), 1, 60))
    delta1_try = values.get("delta1", fixed.get("delta1", 0.0))
    for _ in range(6):
        for q1_try in q1_grid:
            over = {"q1": q1_try, "delta1": delta1_try}
            q0 = fixed["q0"]
            if "delta0" in free:
                q_small = float(expit(math.log(q0) - q1_try * gmin))
                q_large = float(expit(math.log(q0) - q1_try * gmax))
                lo_d = max(1.0, lo - q_large)
                hi_d = hi - q_small
                if hi_d <= lo_d:
                    continue
                over["delta0"] = math.log(math.sqrt(lo_d * hi_d))
            if _response_ok(*merged(over), masses, interval):
                for key in ("q1", "delta0", "delta1"):
                    if key in over and key in values:
                        values[key] = over[key]
                return values
        delta1_try = delta1_try / 10.0 if delta1_try > 1e-10 else 0.0
    raise ConstraintError(
        f"no feasible starting point: interval {interval} admits no "
        "(q1, delta0, delta1) with the configured boundary values"
    )


def mcmc_fit(
    ctx: FitContext,
    priors: PriorSpec | None = None,
    config: MCMCConfig | None = None,
) -> PosteriorChain:
    """Sample the posterior by Metropolis-within-Gibbs.

    Runs are reproducible: the same context, priors, config, and seed give
    bit-identical chains. A KeyboardInterrupt checkpoints the chain at the
    last completed iteration instead of discarding it.
    """
    cfg = config or MCMCConfig()
    priors = (priors or PriorSpec()).for_grid(ctx.grid)
    rng = np.random.default_rng(cfg.seed)

    q0, _ = solve_boundary(cfg.q_max, 1.0)
    fixed: dict[str, float] = {"q0": q0, "mu": cfg.mu}
    free: list[str] = ["q1", "sigma", "eta"]
    if cfg.delta_max is None:
        free.append("delta0")
    else:
        fixed["delta0"] = solve_boundary(cfg.q_max, cfg.delta_max)[1]
    if cfg.estimate_delta1:
        free.append("delta1")
    else:
        fixed["delta1"] = 0.0
    beta_dim = ctx.design_dim
    free += [f"beta_{k}" for k in range(beta_dim)]
    free += ["sigma2_eps", "phi"]
    for name, val in (cfg.fix or {}).items():
        if name not in free:
            raise DomainError(f"cannot fix {name!r}: not free in this configuration")
        free.remove(name)
        fixed[name] = float(val)
    if not free:
        raise DomainError("every parameter is fixed; nothing to sample")

    masses = ctx.masses
    priors = _calibrate_rates(
        priors,
        q0,
        fixed.get("delta0", priors.median("delta0")),
        fixed.get("delta1", 0.0),
        masses,
        ctx.constraint,
        cfg.estimate_delta1,
    )
    values = _initial_values(priors, fixed, free, masses, ctx.constraint)

    def make_params(pool: dict[str, float]) -> KernelParams:
        beta = np.array([pool[f"beta_{k}"] for k in range(beta_dim)])
        return KernelParams(
            q0=fixed["q0"],
            q1=pool["q1"],
            sigma=pool["sigma"],
            delta0=pool.get("delta0", fixed.get("delta0", 0.0)),
            delta1=pool.get("delta1", fixed.get("delta1", 0.0)),
            eta=pool["eta"],
            beta=beta,
            mu=fixed["mu"],
        )

    predictor = _Predictor(ctx)
    counts_mat = np.stack([t.counts for t in ctx.terms], axis=1).astype(float)
    m_vec = np.array([t.m for t in ctx.terms], dtype=float)
    count_totals = counts_mat.sum(axis=0)
    n_terms = len(ctx.terms)
    cells = ctx.grid.cells
    width = ctx.grid.width

    params = make_params({**fixed, **values})
    pool0 = {**fixed, **values}
    gp = GPConfig(pool0["sigma2_eps"], pool0["phi"], cfg.gp_family)
    chol = cholesky_factor(covariance_matrix(ctx.grid, gp), gp.sigma2_eps)
    eps_mat = np.zeros((cells, n_terms))

    def poisson_all(pred: np.ndarray) -> np.ndarray:
        if not cfg.use_likelihood:
            return np.zeros(n_terms)
        base = np.maximum(pred, ctx.floor)
        lam = base * np.exp(eps_mat)
        exposure = -m_vec * width * lam.sum(axis=0)
        point = (counts_mat * (np.log(base) + eps_mat)).sum(axis=0)
        return exposure + point + count_totals * np.log(m_vec)

    def gp_all(factor: np.ndarray) -> np.ndarray:
        white = solve_triangular(factor, eps_mat, lower=True, check_finite=False)
        logdet = float(np.log(np.diag(factor)).sum())
        return -0.5 * (white * white).sum(axis=0) - logdet - 0.5 * cells * _LOG2PI

    pred = predictor.predicted(params)
    pois = poisson_all(pred)
    gp_ll = gp_all(chol)
    prior_vals = {name: priors.log_density(name, values[name]) for name in free}

    theta_names = [n for n in free if n not in ("sigma2_eps", "phi")]
    gp_names = [n for n in free if n in ("sigma2_eps", "phi")]
    log_scale = {name: math.log(0.25) for name in free}
    for name in free:
        if name.startswith("beta_"):
            log_scale[name] = math.log(0.05)
    accept_count = {name: 0 for name in free}
    propose_count = {name: 0 for name in free}
    adapt_count = {name: 0 for name in free}

    transforms = {name: ("raw" if name.startswith("beta_") or name == "delta0" else "log") for name in free}

    n_kept_max = len(range(cfg.burn_in, cfg.iterations, cfg.thin))
    samples = np.empty((n_kept_max, len(free)))
    kept_iterations = np.empty(n_kept_max, dtype=np.int64)
    latent_store = (
        {(t.t, t.l): np.empty((n_kept_max, cells)) for t in ctx.terms}
        if cfg.store_latent
        else None
    )
    trace = np.empty(cfg.iterations)
    kept = 0
    completed = 0
    interrupted = False

    def constraint_ok(pool: dict[str, float]) -> bool:
        return _response_ok(
            fixed["q0"],
            pool["q1"],
            pool.get("delta0", fixed.get("delta0", 0.0)),
            pool.get("delta1", fixed.get("delta1", 0.0)),
            masses,
            ctx.constraint,
        )

    try:
        for it in range(cfg.iterations):
            for name in theta_names:
                propose_count[name] += 1
                current = values[name]
                scale = math.exp(log_scale[name])
                if transforms[name] == "log":
                    cand = current * math.exp(scale * rng.standard_normal())
                    jac_ratio = math.log(cand) - math.log(current)
                else:
                    cand = current + scale * rng.standard_normal()
                    jac_ratio = 0.0
                cand_prior = priors.log_density(name, cand)
                accepted = False
                if math.isfinite(cand_prior):
                    pool = dict(values)
                    pool[name] = cand
                    if constraint_ok({**fixed, **pool}):
                        cand_params = make_params({**fixed, **pool})
                        cand_pred = predictor.predicted(cand_params)
                        cand_pois = poisson_all(cand_pred)
                        log_ratio = (
                            cand_pois.sum()
                            + cand_prior
                            + jac_ratio
                            - pois.sum()
                            - prior_vals[name]
                        )
                        if math.log(rng.random()) < log_ratio:
                            values[name] = cand
                            params = cand_params
                            pred = cand_pred
                            pois = cand_pois
                            prior_vals[name] = cand_prior
                            accepted = True
                    else:
                        rng.random()
                else:
                    rng.random()
                if accepted:
                    accept_count[name] += 1
                if it < cfg.burn_in:
                    adapt_count[name] += 1
                    step = adapt_count[name] ** (-cfg.adapt_decay)
                    log_scale[name] += step * (
                        (1.0 if accepted else 0.0) - cfg.target_accept
                    )
                    log_scale[name] = min(max(log_scale[name], -12.0), 4.0)

            if cfg.update_latents:
                base = np.maximum(pred, ctx.floor)
                for k in range(n_terms):
                    base_k = base[:, k]
                    counts_k = counts_mat[:, k]
                    const_k = float(
                        (counts_k * np.log(base_k)).sum()
                        + count_totals[k] * math.log(m_vec[k])
                    )
                    mw = m_vec[k] * width

                    if cfg.use_likelihood:
                        def loglik(e, _b=base_k, _c=counts_k, _mw=mw, _const=const_k):
                            return float(
                                -_mw * (_b * np.exp(e)).sum() + (_c * e).sum() + _const
                            )
                    else:
                        def loglik(e):
                            return 0.0

                    new_eps, new_ll = elliptical_slice_update(
                        eps_mat[:, k], chol, loglik, rng
                    )
                    eps_mat[:, k] = new_eps
                    if cfg.use_likelihood:
                        pois[k] = new_ll
                gp_ll = gp_all(chol)

            for name in gp_names:
                propose_count[name] += 1
                current = values[name]
                scale = math.exp(log_scale[name])
                cand = current * math.exp(scale * rng.standard_normal())
                jac_ratio = math.log(cand) - math.log(current)
                cand_prior = priors.log_density(name, cand)
                accepted = False
                if math.isfinite(cand_prior):
                    pool = {**fixed, **values}
                    pool[name] = cand
                    try:
                        cand_gp = GPConfig(
                            pool["sigma2_eps"], pool["phi"], cfg.gp_family
                        )
                        cand_chol = cholesky_factor(
                            covariance_matrix(ctx.grid, cand_gp), cand_gp.sigma2_eps
                        )
                    except ConvergenceError:
                        cand_chol = None
                    if cand_chol is not None:
                        cand_gp_ll = gp_all(cand_chol)
                        log_ratio = (
                            cand_gp_ll.sum()
                            + cand_prior
                            + jac_ratio
                            - gp_ll.sum()
                            - prior_vals[name]
                        )
                        if math.log(rng.random()) < log_ratio:
                            values[name] = cand
                            gp = cand_gp
                            chol = cand_chol
                            gp_ll = cand_gp_ll
                            prior_vals[name] = cand_prior
                            accepted = True
                    else:
                        rng.random()
                else:
                    rng.random()
                if accepted:
                    accept_count[name] += 1
                if it < cfg.burn_in:
                    adapt_count[name] += 1
                    step = adapt_count[name] ** (-cfg.adapt_decay)
                    log_scale[name] += step * (
                        (1.0 if accepted else 0.0) - cfg.target_accept
                    )
                    log_scale[name] = min(max(log_scale[name], -12.0), 4.0)

            trace[it] = pois.sum() + gp_ll.sum() + sum(prior_vals.values())
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                samples[kept] = [values[name] for name in free]
                kept_iterations[kept] = it
                if latent_store is not None:
                    for k, term in enumerate(ctx.terms):
                        latent_store[(term.t, term.l)][kept] = eps_mat[:, k]
                kept += 1
            completed = it + 1
    except KeyboardInterrupt:
        interrupted = True

    samples = samples[:kept]
    kept_iterations = kept_iterations[:kept]
    if latent_store is not None:
        latent_store = {key: arr[:kept] for key, arr in latent_store.items()}
    accept_rates = {
        name: (accept_count[name] / propose_count[name]) if propose_count[name] else 0.0
        for name in free
    }
    return PosteriorChain(
        names=tuple(free),
        samples=samples,
        kept_iterations=kept_iterations,
        log_post_trace=trace[:completed],
        accept_rates=accept_rates,
        fixed=dict(fixed),
        constraint=ctx.constraint,
        rho_max=ctx.rho_max,
        gp_family=cfg.gp_family,
        seed=cfg.seed,
        iterations=cfg.iterations,
        burn_in=cfg.burn_in,
        thin=cfg.thin,
        priors=priors,
        latent=latent_store,
        interrupted=interrupted,
    )


@dataclass(frozen=True)
class ParamSummary:
    name: str
    mean: float
    lower: float
    upper: float


def summarize(chain: PosteriorChain, min_samples: int = 100) -> list[ParamSummary]:
    """Posterior mean and central 95% interval per free parameter."""
    if chain.n_kept < min_samples:
        raise DomainError(
            f"only {chain.n_kept} post-burn-in samples; need at least {min_samples}"
        )
    out = []
    for j, name in enumerate(chain.names):
        col = chain.samples[:, j]
        lo, hi = np.percentile(col, [2.5, 97.5])
        out.append(ParamSummary(name, float(col.mean()), float(lo), float(hi)))
    return out


def predictive_intensity_bands(
    chain: PosteriorChain, ctx: FitContext, probs=(2.5, 50.0, 97.5)
) -> list[dict]:
    """Pointwise posterior bands of the operating intensity per term.

    Needs stored latent fields: the operating intensity multiplies the
    stepped field by the latent GP factor.
    """
    if chain.latent is None:
        raise DomainError("chain was run without stored latent fields")
    predictor = _Predictor(ctx)
    rows: list[dict] = []
    n = chain.n_kept
    lam_stack = {key: np.empty((n, ctx.grid.cells)) for key in chain.latent}
    for i in range(n):
        pred = predictor.predicted(chain.kernel_params(i))
        for k, term in enumerate(ctx.terms):
            key = (term.t, term.l)
            base = np.maximum(pred[:, k], ctx.floor)
            lam_stack[key][i] = base * np.exp(chain.latent[key][i])
    for term in ctx.terms:
        key = (term.t, term.l)
        q = np.percentile(lam_stack[key], probs, axis=0)
        for j, center in enumerate(ctx.grid.centers):
            rows.append(
                {
                    "bin": term.l,
                    "year": term.year + 1,
                    "cell_center": float(center),
                    "lower": float(q[0, j]),
                    "median": float(q[1, j]),
                    "upper": float(q[2, j]),
                }
            )
    return rows


def abundance_summary(chain: PosteriorChain, ctx: FitContext) -> list[dict]:
    """Observed versus posterior-predicted per-plot abundance per term."""
    predictor = _Predictor(ctx)
    n = chain.n_kept
    masses = np.empty((n, len(ctx.terms)))
    for i in range(n):
        pred = predictor.predicted(chain.kernel_params(i))
        if chain.latent is not None:
            for k, term in enumerate(ctx.terms):
                lam = np.maximum(pred[:, k], ctx.floor) * np.exp(
                    chain.latent[(term.t, term.l)][i]
                )
                masses[i, k] = lam.sum() * ctx.grid.width
        else:
            masses[i] = pred.sum(axis=0) * ctx.grid.width
    rows = []
    for k, term in enumerate(ctx.terms):
        lo, mid, hi = np.percentile(masses[:, k], [2.5, 50.0, 97.5])
        rows.append(
            {
                "year": term.year + 1,
                "bin": term.l,
                "observed_per_plot": float(term.counts.sum() / term.m),
                "predicted_mean": float(masses[:, k].mean()),
                "lower": float(lo),
                "median": float(mid),
                "upper": float(hi),
            }
        )
    return rows


def write_chain_csv(chain: PosteriorChain, path: str | Path) -> None:
    """Long-format CSV of the kept samples (iteration, param, value)."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CHAIN_HEADER)
        for i in range(chain.n_kept):
            iteration = int(chain.kept_iterations[i])
            for j, name in enumerate(chain.names):
                writer.writerow([iteration, name, f"{chain.samples[i, j]:.17g}"])


def write_chain_meta(chain: PosteriorChain, path: str | Path) -> None:
    meta = {
        "names": list(chain.names),
        "fixed": chain.fixed,
        "constraint": list(chain.constraint),
        "rho_max": chain.rho_max,
        "gp_family": chain.gp_family,
        "seed": chain.seed,
        "iterations": chain.iterations,
        "burn_in": chain.burn_in,
        "thin": chain.thin,
        "accept_rates": chain.accept_rates,
        "interrupted": chain.interrupted,
        "priors": {
            k: v for k, v in vars(chain.priors).items()
        },
    }
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_chain(csv_path: str | Path, meta_path: str | Path) -> PosteriorChain:
    """Rebuild a chain from its CSV and meta files (latents are not persisted)."""
    meta = json.loads(Path(meta_path).read_text())
    names = tuple(meta["names"])
    rows: dict[int, dict[str, float]] = {}
    with Path(csv_path).open(newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != CHAIN_HEADER:
            raise DomainError(f"unexpected chain header {reader.fieldnames}")
        for record in reader:
            it = int(record["iteration"])
            rows.setdefault(it, {})[record["param"]] = float(record["value"])
    iterations_sorted = sorted(rows)
    samples = np.array(
        [[rows[it][name] for name in names] for it in iterations_sorted]
    )
    return PosteriorChain(
        names=names,
        samples=samples,
        kept_iterations=np.array(iterations_sorted, dtype=np.int64),
        log_post_trace=np.empty(0),
        accept_rates=dict(meta["accept_rates"]),
        fixed=dict(meta["fixed"]),
        constraint=tuple(meta["constraint"]),
        rho_max=float(meta["rho_max"]),
        gp_family=meta["gp_family"],
        seed=int(meta["seed"]),
        iterations=int(meta["iterations"]),
        burn_in=int(meta["burn_in"]),
        thin=int(meta["thin"]),
        priors=PriorSpec(**meta["priors"]),
        latent=None,
        interrupted=bool(meta["interrupted"]),
    )
