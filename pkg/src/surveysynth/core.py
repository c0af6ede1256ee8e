"""Domain types shared across the engine.

Time indexing convention: a panel with T time-points stores its counts in
(K, T) arrays whose column j holds time-point t = j + 1. The latent logit
series has T + 1 entries, theta[0] sitting one step before the first
observed time-point, and theta[t] aligned with panel time-point t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterator

import numpy as np

if TYPE_CHECKING:
    from .mcmc import SamplerSettings

BIAS_KINDS = ("known", "constant", "linear", "walk")


def _frozen_array(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SurveyPanel:
    """Aligned counts for K surveys over a shared time grid.

    y and n are (K, T) float arrays with NaN marking cells a survey did not
    run; population is the shared population size the counts refer to.
    """

    y: np.ndarray
    n: np.ndarray
    population: int
    labels: tuple[str, ...]

    def __post_init__(self):
        y = _frozen_array(self.y)
        n = _frozen_array(self.n)
        if y.ndim != 2 or n.shape != y.shape:
            raise ValueError(f"y and n must be equal-shape 2-d arrays, got {y.shape} and {n.shape}")
        labels = tuple(str(s) for s in self.labels)
        if len(labels) != y.shape[0]:
            raise ValueError(f"{len(labels)} labels for {y.shape[0]} surveys")
        population = int(self.population)
        if population < 1:
            raise ValueError(f"population must be at least 1, got {self.population}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "population", population)

    @property
    def n_surveys(self) -> int:
        return self.y.shape[0]

    @property
    def n_times(self) -> int:
        return self.y.shape[1]

    @property
    def observed(self) -> np.ndarray:
        """Boolean (K, T) mask of cells where both counts are present."""
        return ~np.isnan(self.y) & ~np.isnan(self.n)

    def observed_cells(self) -> Iterator[tuple[int, int, int, int]]:
        """Yield (k, t, y, n) over present cells, t being 1-based."""
        obs = self.observed
        for k in range(self.n_surveys):
            for j in range(self.n_times):
                if obs[k, j]:
                    yield k, j + 1, int(self.y[k, j]), int(self.n[k, j])

    def subset_surveys(self, indices) -> "SurveyPanel":
        idx = list(indices)
        return SurveyPanel(
            y=self.y[idx],
            n=self.n[idx],
            population=self.population,
            labels=tuple(self.labels[k] for k in idx),
        )

    def up_to(self, t_star: int) -> "SurveyPanel":
        """Panel restricted to time-points 1..t_star."""
        if not 1 <= t_star <= self.n_times:
            raise ValueError(f"t_star must lie in 1..{self.n_times}, got {t_star}")
        return SurveyPanel(
            y=self.y[:, :t_star],
            n=self.n[:, :t_star],
            population=self.population,
            labels=self.labels,
        )

    def __eq__(self, other):
        if not isinstance(other, SurveyPanel):
            return NotImplemented
        return (
            self.population == other.population
            and self.labels == other.labels
            and self.y.shape == other.y.shape
            and np.array_equal(self.y, other.y, equal_nan=True)
            and np.array_equal(self.n, other.n, equal_nan=True)
        )


@dataclass(frozen=True)
class BiasModelSpec:
    """Per-survey selection-bias model.

    kind "known" pins the bias odds (1 unless fixed_phi gives a per-time
    series); the other kinds put a prior on it: a single constant log-odds
    shift, a linear-in-time shift, or a random walk over time.
    """

    kind: str
    fixed_phi: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in BIAS_KINDS:
            raise ValueError(f"unknown bias kind {self.kind!r}, expected one of {BIAS_KINDS}")
        if self.fixed_phi is not None:
            if self.kind != "known":
                raise ValueError("fixed_phi only applies to kind='known'")
            phi = tuple(float(v) for v in self.fixed_phi)
            if any(not (v > 0.0) or not math.isfinite(v) for v in phi):
                raise ValueError(f"fixed_phi values must be positive and finite: {phi}")
            object.__setattr__(self, "fixed_phi", phi)

    @classmethod
    def anchor(cls) -> "BiasModelSpec":
        """A survey trusted to sample the population without selection bias."""
        return cls(kind="known")


@dataclass(frozen=True)
class PriorSpec:
    """Prior hyperparameters; every Normal is parameterized by its variance.

    sigma_sq_scale and pi_sq_scale are the variances of the half-normal
    priors on the latent-walk and bias-walk jump variances.
    """

    theta0_mean: float = 0.0
    theta0_var: float = 2.0
    sigma_sq_scale: float = 1.0
    gamma0_var: float = 1.0
    gamma1_var: float = 0.25
    pi_sq_scale: float = 1.0

    def __post_init__(self):
        for name in ("theta0_var", "sigma_sq_scale", "gamma0_var", "gamma1_var", "pi_sq_scale"):
            v = getattr(self, name)
            if not (v > 0.0) or not math.isfinite(v):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if not math.isfinite(self.theta0_mean):
            raise ValueError(f"theta0_mean must be finite, got {self.theta0_mean!r}")

    @classmethod
    def narrowed(cls) -> "PriorSpec":
        """Tighter priors for simulation draws, keeping rates and biases plausible."""
        return cls(theta0_var=1.0, sigma_sq_scale=0.1, gamma1_var=0.01, pi_sq_scale=0.01)


@dataclass(frozen=True)
class ModelSpec:
    """Full model configuration: priors, one bias model per survey, options."""

    bias: tuple[BiasModelSpec, ...]
    priors: PriorSpec = field(default_factory=PriorSpec)
    monotone_walk: bool = False
    center_time: bool = True
    use_exact_nchg: bool = False

    def __post_init__(self):
        bias = tuple(self.bias)
        if not bias:
            raise ValueError("at least one survey is required")
        if not any(b.kind == "known" for b in bias):
            raise ValueError("at least one survey must have a known (unbiased) bias model")
        object.__setattr__(self, "bias", bias)

    @property
    def has_bias_walk(self) -> bool:
        return any(b.kind == "walk" for b in self.bias)


def gamma_length(kind: str, n_times: int) -> int:
    """Number of bias coefficients a survey of this kind carries."""
    return {"known": 0, "constant": 1, "linear": 2, "walk": n_times + 1}[kind]


@dataclass(frozen=True, eq=False)
class LatentState:
    """One point in parameter space: logit-rate series, jump variances, and
    per-survey bias coefficients (None for known-bias surveys)."""

    theta: np.ndarray
    sigma_sq: float
    gamma: tuple[np.ndarray | None, ...]
    pi_sq: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta", _frozen_array(self.theta))
        gam = tuple(
            None if g is None or np.size(g) == 0 else _frozen_array(g) for g in self.gamma
        )
        object.__setattr__(self, "gamma", gam)

    @property
    def n_times(self) -> int:
        return len(self.theta) - 1

    def __eq__(self, other):
        if not isinstance(other, LatentState):
            return NotImplemented
        gammas_equal = len(self.gamma) == len(other.gamma) and all(
            (a is None and b is None)
            or (a is not None and b is not None and np.array_equal(a, b))
            for a, b in zip(self.gamma, other.gamma)
        )
        return (
            np.array_equal(self.theta, other.theta)
            and self.sigma_sq == other.sigma_sq
            and self.pi_sq == other.pi_sq
            and gammas_equal
        )


def validate_state(state: LatentState, spec: ModelSpec) -> list[str]:
    """Return human-readable descriptions of every broken state invariant."""
    problems: list[str] = []
    T = state.n_times
    if len(state.gamma) != len(spec.bias):
        problems.append(
            f"state carries {len(state.gamma)} gamma blocks for {len(spec.bias)} surveys"
        )
        return problems
    if not np.all(np.isfinite(state.theta)):
        problems.append("theta contains non-finite values")
    if not (state.sigma_sq > 0.0) or not math.isfinite(state.sigma_sq):
        problems.append(f"sigma_sq must be positive and finite, got {state.sigma_sq!r}")
    if spec.monotone_walk and np.any(np.diff(state.theta) < 0.0):
        problems.append("monotone walk violated: theta must be non-decreasing")
    for k, (b, g) in enumerate(zip(spec.bias, state.gamma)):
        want = gamma_length(b.kind, T)
        have = 0 if g is None else len(g)
        if want != have:
            problems.append(
                f"gamma for survey {k} ({b.kind}) has {have} values, expected {want}"
            )
        elif g is not None and not np.all(np.isfinite(g)):
            problems.append(f"gamma for survey {k} contains non-finite values")
    if spec.has_bias_walk:
        if state.pi_sq is None or not (state.pi_sq > 0.0) or not math.isfinite(state.pi_sq):
            problems.append(f"pi_sq must be positive and finite with a walk bias, got {state.pi_sq!r}")
    return problems


@dataclass(frozen=True)
class PanelViolation:
    rule: str
    k: int | None
    t: int | None
    message: str


def validate_panel(panel: SurveyPanel) -> list[PanelViolation]:
    """Check every panel invariant; an empty list means the panel is clean."""
    out: list[PanelViolation] = []
    if panel.n_surveys < 1:
        out.append(PanelViolation("no-surveys", None, None, "panel has no surveys"))
    if panel.n_times < 1:
        out.append(PanelViolation("no-time-points", None, None, "panel has no time-points"))
    y, n = panel.y, panel.n
    for k in range(panel.n_surveys):
        for j in range(panel.n_times):
            t = j + 1
            yv, nv = y[k, j], n[k, j]
            y_here, n_here = not np.isnan(yv), not np.isnan(nv)
            if y_here != n_here:
                out.append(
                    PanelViolation(
                        "half-missing", k, t, f"cell ({k},{t}) has y or n but not both"
                    )
                )
                continue
            if not y_here:
                continue
            if yv != math.floor(yv) or nv != math.floor(nv):
                out.append(
                    PanelViolation(
                        "non-integer-count", k, t, f"cell ({k},{t}) counts y={yv}, n={nv} must be integers"
                    )
                )
                continue
            if yv < 0:
                out.append(PanelViolation("negative-y", k, t, f"cell ({k},{t}) has y={yv} < 0"))
            if nv < 1:
                out.append(PanelViolation("nonpositive-n", k, t, f"cell ({k},{t}) has n={nv} < 1"))
            elif yv > nv:
                out.append(
                    PanelViolation("y-exceeds-n", k, t, f"cell ({k},{t}) has y={yv} > n={nv}")
                )
            if nv > panel.population:
                out.append(
                    PanelViolation(
                        "n-exceeds-population",
                        k,
                        t,
                        f"cell ({k},{t}) has n={nv} above population {panel.population}",
                    )
                )
    return out


def detect_saturated_cells(panel: SurveyPanel, spec: ModelSpec) -> list[tuple[int, int]]:
    """Cells of bias-modeled surveys where y is 0 or n.

    At such cells the data cannot bound the bias odds on one side, so its
    posterior there stays prior-driven; callers surface the flags alongside
    fit output.
    """
    if len(spec.bias) != panel.n_surveys:
        raise ValueError(
            f"spec covers {len(spec.bias)} surveys but panel has {panel.n_surveys}"
        )
    flagged = []
    for k, t, yv, nv in panel.observed_cells():
        if spec.bias[k].kind == "known":
            continue
        if yv == 0 or yv == nv:
            flagged.append((k, t))
    return flagged


@dataclass(frozen=True)
class SummaryRow:
    """Posterior summary of one scalar quantity (a rate at time t, a bias
    odds value, or a variance), with equal-tailed interval bounds."""

    name: str
    survey: int | None
    t: int | None
    median: float
    lower: float
    upper: float
    r_hat: float | None = None
    ess: float | None = None

    def __post_init__(self):
        vals = (self.lower, self.median, self.upper)
        if all(math.isfinite(v) for v in vals) and not (
            self.lower <= self.median <= self.upper
        ):
            raise ValueError(f"interval out of order: {vals}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class SummaryTable:
    """Posterior summaries for a fit; alpha is the two-sided tail mass."""

    alpha: float
    rows: list[SummaryRow]
    converged: bool | None = None

    def row(self, name: str, survey: int | None = None, t: int | None = None) -> SummaryRow:
        for r in self.rows:
            if r.name == name and r.survey == survey and r.t == t:
                return r
        raise KeyError(f"no row {name!r} (survey={survey}, t={t})")

    def rows_named(self, name: str, survey: int | None = None) -> list[SummaryRow]:
        out = [r for r in self.rows if r.name == name and (survey is None or r.survey == survey)]
        return sorted(out, key=lambda r: (r.survey if r.survey is not None else -1, r.t if r.t is not None else -1))

    def rate_series(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Arrays (t, median, lower, upper) for the population rate rows."""
        rows = self.rows_named("rate")
        t = np.array([r.t for r in rows])
        med = np.array([r.median for r in rows])
        lo = np.array([r.lower for r in rows])
        hi = np.array([r.upper for r in rows])
        return t, med, lo, hi


@dataclass
class ChainDraws:
    """Post-burn-in, thinned draws from every chain.

    theta has shape (chains, kept, T+1); gamma holds one (chains, kept, L)
    array per survey with L the survey's coefficient count (0 when known).
    Proposal scales are recorded twice to witness that adaptation froze at
    the end of burn-in.
    """

    theta: np.ndarray
    sigma_sq: np.ndarray
    gamma: tuple[np.ndarray, ...]
    pi_sq: np.ndarray | None
    spec: ModelSpec
    settings: "SamplerSettings"
    acceptance_rates: dict[str, float]
    scales_end_of_burnin: dict[str, float]
    scales_final: dict[str, float]

    @property
    def n_chains(self) -> int:
        return self.theta.shape[0]

    @property
    def n_kept(self) -> int:
        return self.theta.shape[1]

    @property
    def n_times(self) -> int:
        return self.theta.shape[2] - 1

    def state(self, chain: int, i: int) -> LatentState:
        gamma = tuple(
            None if g.shape[2] == 0 else g[chain, i] for g in self.gamma
        )
        pi = None if self.pi_sq is None else float(self.pi_sq[chain, i])
        return LatentState(
            theta=self.theta[chain, i],
            sigma_sq=float(self.sigma_sq[chain, i]),
            gamma=gamma,
            pi_sq=pi,
        )

    def param_series(self) -> dict[str, np.ndarray]:
        """Per-scalar (chains, kept) series keyed by parameter name."""
        out: dict[str, np.ndarray] = {}
        for t in range(self.theta.shape[2]):
            out[f"theta[{t}]"] = self.theta[:, :, t]
        out["sigma_sq"] = self.sigma_sq
        for k, g in enumerate(self.gamma):
            for j in range(g.shape[2]):
                out[f"gamma[{k}][{j}]"] = g[:, :, j]
        if self.pi_sq is not None:
            out["pi_sq"] = self.pi_sq
        return out
