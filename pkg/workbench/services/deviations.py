"""
Disorder statistics of the surface tension.

Empirical rate function and annealed tension from replica samples of
tau^J, their Legendre duality, and exact small-region diagnostics: the
edge sensitivity a_e^J and expectations under the tilted law
E_lambda(h) = E(h f_lambda) / E(f_lambda),  f_lambda = exp(-lambda L^{d-1} tau^J).
"""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from ..exceptions import (
    InfiniteSupport,
    InvalidParameter,
    ProvenanceMismatch,
    TooFewSamples,
    TooLarge,
)
from .disorder import CouplingField, CouplingLaw, edge_prob
from .geometry import RectRegion
from .rc_core import BoundaryCondition, exact_event, exact_measure, open_edge_selector
from .tension import disconnection_selector, tension_exact

logger = logging.getLogger(__name__)

MIN_SAMPLES = 100
SENSITIVITY_EDGE_CAP = 12
TILTED_CONFIG_CAP = 4096
TAU_GRID_POINTS = 101
TAU_GRID_PAD = 0.1
LAMBDA_GRID = np.geomspace(1e-3, 10.0, 40)


@dataclass(frozen=True)
class Provenance:
    """Box dimensions and model parameters the samples were drawn at."""

    L: float
    H: float
    beta: float
    q: float
    d: int = 2
    n: Tuple[float, ...] = ()

    @property
    def area(self) -> float:
        return float(self.L) ** (self.d - 1)

    @classmethod
    def of(cls, region: RectRegion, beta: float, q: float) -> 'Provenance':
        return cls(L=region.L, H=region.H, beta=float(beta), q=float(q), d=region.d,
                   n=tuple(region.direction.n))


def _check_samples(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.size < MIN_SAMPLES:
        raise TooFewSamples(f"{samples.size} samples; at least {MIN_SAMPLES} are needed")
    return samples


@dataclass(frozen=True, eq=False)
class RateCurve:
    """I(tau) on a grid; NaN marks grid points below the sample minimum."""

    provenance: Provenance
    tau: np.ndarray
    rate: np.ndarray
    samples: int
    sample_mean: float
    sample_min: float
    sample_max: float

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.rate)


def default_tau_grid(samples: np.ndarray, points: int = TAU_GRID_POINTS) -> np.ndarray:
    lo, hi = float(samples.min()), float(samples.max())
    pad = TAU_GRID_PAD * (hi - lo) if hi > lo else TAU_GRID_PAD * max(abs(lo), 1.0)
    return np.linspace(max(lo - pad, 0.0), hi + pad, points)


def empirical_rate(samples: Sequence[float], provenance: Provenance,
                   tau_grid: Optional[Sequence[float]] = None) -> RateCurve:
    """
    I(tau) = -L^{1-d} log( #{samples <= tau} / #samples ).

    Raises:
        TooFewSamples: with fewer than 100 samples.
    """
    samples = _check_samples(samples)
    grid = default_tau_grid(samples) if tau_grid is None else np.asarray(tau_grid, dtype=float)
    ordered = np.sort(samples)
    fraction = np.searchsorted(ordered, grid, side='right') / len(ordered)
    with np.errstate(divide='ignore'):
        rate = np.where(fraction > 0, -np.log(fraction) / provenance.area + 0.0, np.nan)
    return RateCurve(provenance=provenance, tau=grid, rate=rate, samples=len(samples),
                     sample_mean=float(samples.mean()), sample_min=float(ordered[0]),
                     sample_max=float(ordered[-1]))


@dataclass(frozen=True, eq=False)
class AnnealedCurve:
    provenance: Provenance
    lambdas: np.ndarray
    tau_lambda: np.ndarray
    tau_hat_low: np.ndarray
    tau_hat_high: np.ndarray
    sample_mean: float
    sample_stderr: float
    sample_min: float

    def is_concave(self, tolerance: float = 1e-9) -> bool:
        slopes = np.diff(self.tau_lambda) / np.diff(self.lambdas)
        return bool(np.all(np.diff(slopes) <= tolerance))


def annealed_tension(samples: Sequence[float], provenance: Provenance,
                     lambda_grid: Optional[Sequence[float]] = None,
                     rate: Optional[RateCurve] = None) -> AnnealedCurve:
    """
    tau^lambda = -L^{1-d} log mean(exp(-lambda L^{d-1} tau_i)) on a lambda grid,
    with the interval of minimizers of I(tau) + lambda tau over the tau grid.

    Raises:
        TooFewSamples: with fewer than 100 samples.
    """
    samples = _check_samples(samples)
    lambdas = LAMBDA_GRID if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if np.any(lambdas <= 0):
        raise InvalidParameter("lambda grid must be positive")
    area = provenance.area
    log_n = math.log(len(samples))
    tau_lambda = np.array([
        -(special.logsumexp(-lam * area * samples) - log_n) / area for lam in lambdas
    ])

    rate = rate or empirical_rate(samples, provenance)
    defined = rate.defined
    taus, rates = rate.tau[defined], rate.rate[defined]
    low, high = np.empty(len(lambdas)), np.empty(len(lambdas))
    for k, lam in enumerate(lambdas):
        objective = rates + lam * taus
        best = objective.min()
        near = taus[objective <= best + 1e-9 * max(1.0, abs(best))]
        low[k], high[k] = near.min(), near.max()

    return AnnealedCurve(
        provenance=provenance,
        lambdas=lambdas,
        tau_lambda=tau_lambda,
        tau_hat_low=low,
        tau_hat_high=high,
        sample_mean=float(samples.mean()),
        sample_stderr=float(samples.std(ddof=1) / math.sqrt(len(samples))),
        sample_min=float(samples.min()),
    )


def legendre_dual(annealed: AnnealedCurve, taus: np.ndarray) -> np.ndarray:
    """sup over {0} and the lambda grid of tau^lambda - lambda tau."""
    values = annealed.tau_lambda[None, :] - np.outer(taus, annealed.lambdas)
    return np.maximum(values.max(axis=1), 0.0)


def convex_minorant(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Greatest convex function below the points (x, y), evaluated at x (x increasing)."""
    hull: List[int] = []
    for k in range(len(x)):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            if (y[j] - y[i]) * (x[k] - x[i]) >= (y[k] - y[i]) * (x[j] - x[i]):
                hull.pop()
            else:
                break
        hull.append(k)
    return np.interp(x, x[hull], y[hull])


def _check_provenance(a: Provenance, b: Provenance):
    if a != b:
        raise ProvenanceMismatch(f"Curves come from different runs: {a} vs {b}")


def legendre_residual(rate: RateCurve, annealed: AnnealedCurve) -> float:
    """
    max |conv(I)(tau) - sup_lambda(tau^lambda - lambda tau)| over the grid
    points where I is defined.

    Raises:
        ProvenanceMismatch: if the curves come from different (L, H, beta, q, n).
    """
    _check_provenance(rate.provenance, annealed.provenance)
    defined = rate.defined
    taus, rates = rate.tau[defined], rate.rate[defined]
    if len(taus) == 0:
        return 0.0
    gap = convex_minorant(taus, rates) - legendre_dual(annealed, taus)
    return float(np.max(np.abs(gap)))


def alpha_slope(annealed: AnnealedCurve) -> Optional[float]:
    """Largest grid lambda with tau^lambda >= lambda (mean - stderr); None when there is none."""
    floor = annealed.lambdas * (annealed.sample_mean - annealed.sample_stderr)
    hits = annealed.lambdas[annealed.tau_lambda >= floor - 1e-12]
    return float(hits.max()) if hits.size else None


def local_curvature(rate: RateCurve, center: Optional[float] = None, points: int = 10) -> Dict:
    """
    Quadratic fit of I just below ``center`` (the sample mean by default);
    reported, never asserted.
    """
    center = rate.sample_mean if center is None else center
    mask = rate.defined & (rate.tau <= center)
    taus, rates = rate.tau[mask][-points:], rate.rate[mask][-points:]
    if len(taus) < 3:
        logger.warning(f"Only {len(taus)} rate points below tau={center:.4f}; no curvature fit")
        return {'center': center, 'curvature': math.nan, 'points': len(taus)}
    curvature = np.polyfit(taus - center, rates, 2)[0]
    return {'center': center, 'curvature': float(curvature), 'points': len(taus)}


def limit_ordering(annealed: AnnealedCurve, tolerance: float = 1e-9) -> Dict[str, bool]:
    """Orderings of tau^lambda / lambda: below the mean, above the minimum, nonincreasing."""
    ratio = annealed.tau_lambda / annealed.lambdas
    return {
        'jensen': bool(np.all(annealed.tau_lambda <= annealed.lambdas * annealed.sample_mean + tolerance)),
        'small_lambda_near_mean': bool(abs(ratio[0] - annealed.sample_mean)
                                       <= 3.0 * annealed.sample_stderr + tolerance),
        'large_lambda_above_min': bool(ratio[-1] >= annealed.sample_min - tolerance),
        'nonincreasing': bool(np.all(np.diff(ratio) <= tolerance)),
    }


@dataclass(frozen=True)
class EdgeSensitivity:
    coupling: float
    a: float
    a_finite_difference: float
    p: float
    phi_open: float
    phi_open_given_disconnected: float


def _tau(region, couplings, beta, q) -> float:
    return tension_exact(region, couplings, beta, q, cap=SENSITIVITY_EDGE_CAP).value


def tau_derivative(region: RectRegion, couplings: CouplingField, beta: float, q: float,
                   edge, step: float = 1e-5) -> float:
    """Second-order finite difference of tau^J in J_e; one-sided near J_e = 1."""
    je = couplings[edge]

    def tau_at(value):
        return _tau(region, couplings.with_value(edge, value), beta, q)

    if je + step <= 1.0 and je - step >= 0.0:
        return (tau_at(je + step) - tau_at(je - step)) / (2.0 * step)
    if je - 2 * step >= 0.0:
        return (3.0 * tau_at(je) - 4.0 * tau_at(je - step) + tau_at(je - 2 * step)) / (2.0 * step)
    return (-3.0 * tau_at(je) + 4.0 * tau_at(je + step) - tau_at(je + 2 * step)) / (2.0 * step)


def edge_sensitivity_exact(region: RectRegion, couplings: CouplingField, beta: float, q: float,
                           edge, je_grid: Sequence[float]) -> List[EdgeSensitivity]:
    """
    a_e^J = (Phi(omega_e) - Phi(omega_e | D)) / p_e along a grid of J_e values,
    each cross-checked against (L^{d-1}/beta) d tau / d J_e.

    Raises:
        TooLarge: above 12 edges.
        InvalidParameter: for a nonpositive J_e on the grid.
    """
    if region.n_edges > SENSITIVITY_EDGE_CAP:
        raise TooLarge(f"{region.n_edges} edges exceed the sensitivity cap of {SENSITIVITY_EDGE_CAP}")
    if beta <= 0:
        raise InvalidParameter(f"Edge sensitivity needs beta > 0, got {beta}")
    disconnected = disconnection_selector(region, SENSITIVITY_EDGE_CAP)
    results = []
    for je in je_grid:
        if je <= 0:
            raise InvalidParameter(f"J_e must be positive on the grid, got {je}")
        field_je = couplings.with_value(edge, je)
        measure = exact_measure(region.edges, field_je, beta, q, BoundaryCondition.wired(),
                                cap=SENSITIVITY_EDGE_CAP)
        is_open = open_edge_selector(measure, edge)
        phi_open = exact_event(measure, is_open)
        phi_open_given_d = exact_event(measure, is_open & disconnected) / exact_event(measure, disconnected)
        p = edge_prob(je, beta)
        a = (phi_open - phi_open_given_d) / p
        a_fd = region.area / beta * tau_derivative(region, field_je, beta, q, edge)
        results.append(EdgeSensitivity(coupling=float(je), a=a, a_finite_difference=a_fd, p=p,
                                       phi_open=phi_open, phi_open_given_disconnected=phi_open_given_d))
    logger.debug(f"Edge sensitivity of {edge} over {len(results)} couplings: "
                 f"a in [{min(r.a for r in results):.6f}, {max(r.a for r in results):.6f}]")
    return results


@dataclass(frozen=True)
class TiltedStats:
    lam: float
    expectations: Dict[str, float]
    plain_expectations: Dict[str, float]
    tau_lambda: float
    entropy: float
    identity_lhs: float
    identity_rhs: float

    @property
    def identity_residual(self) -> float:
        return abs(self.identity_lhs - self.identity_rhs)


Observable = Callable[[CouplingField, float], float]


def _default_observables() -> Dict[str, Observable]:
    return {
        'mean_J': lambda couplings, tau: float(np.mean(list(couplings.values.values()))),
        'tau': lambda couplings, tau: tau,
    }


def _disorder_table(region: RectRegion, law: CouplingLaw, beta: float, q: float):
    if not law.is_finite_support:
        raise InfiniteSupport(f"{law} has no finite support")
    atoms = law.exact_support()
    count = len(atoms) ** region.n_edges
    if count > TILTED_CONFIG_CAP:
        raise TooLarge(f"{count} disorder configurations exceed the cap of {TILTED_CONFIG_CAP}")
    fields, log_weights, taus = [], [], []
    for choice in itertools.product(atoms, repeat=region.n_edges):
        weight = math.prod((w for _, w in choice), start=Fraction(1))
        if weight == 0:
            continue
        couplings = CouplingField(values={e: float(v) for e, (v, _) in zip(region.edges, choice)}, law=law)
        fields.append(couplings)
        log_weights.append(math.log(weight))
        taus.append(tension_exact(region, couplings, beta, q).value)
    return fields, np.array(log_weights), np.array(taus)


def _log_mean_f(log_weights, taus, lam, area) -> float:
    return float(special.logsumexp(log_weights - lam * area * taus))


def tilted_stats_exact(region: RectRegion, law: CouplingLaw, beta: float, q: float, lam: float,
                       observables: Optional[Dict[str, Observable]] = None,
                       step: float = 1e-3) -> TiltedStats:
    """
    Exact tilted expectations and entropy over every disorder configuration.

    The identity -d/dlambda (tau^lambda / lambda) = Ent(f) / (lambda^2 L^{d-1} E f)
    is evaluated with centered differences of ``step`` in lambda.

    Raises:
        InfiniteSupport: for a law without finite support.
        TooLarge: above 4096 disorder configurations.
    """
    if lam <= 0:
        raise InvalidParameter(f"lambda must be positive, got {lam}")
    observables = observables or _default_observables()
    fields, log_weights, taus = _disorder_table(region, law, beta, q)
    area = region.area

    exponent = -lam * area * taus
    log_ef = _log_mean_f(log_weights, taus, lam, area)
    tilt = np.exp(log_weights + exponent - log_ef)
    plain = np.exp(log_weights)
    values = {name: np.array([h(c, t) for c, t in zip(fields, taus)]) for name, h in observables.items()}

    # Ent(f) / E(f) = E_lambda(log f) - log E(f)
    entropy_ratio = float(np.dot(tilt, exponent)) - log_ef
    tau_lambda = -log_ef / area

    def ratio(l):
        return -_log_mean_f(log_weights, taus, l, area) / (area * l)

    if lam > step:
        lhs = -(ratio(lam + step) - ratio(lam - step)) / (2.0 * step)
    else:
        lhs = -(ratio(lam + step) - ratio(lam)) / step
    rhs = entropy_ratio / (lam ** 2 * area)
    return TiltedStats(
        lam=float(lam),
        expectations={name: float(np.dot(tilt, v)) for name, v in values.items()},
        plain_expectations={name: float(np.dot(plain, v)) for name, v in values.items()},
        tau_lambda=tau_lambda,
        entropy=entropy_ratio * math.exp(log_ef),
        identity_lhs=lhs,
        identity_rhs=rhs,
    )
