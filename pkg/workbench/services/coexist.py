"""
Phase coexistence in the box Lambda_N = {1..N}^d with plus boundary spins.

The dilute Ising measure is sampled conditioned on the low-magnetization
event {m_N / m_hat <= 1 - 2 alpha^d} by restricted single-spin-flip
Metropolis; block magnetization profiles are then compared with translated
Wulff crystals in the unit cube.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numba
import numpy as np
from scipy.spatial import ConvexHull

from ..exceptions import BadK, EmptyTranslateSet, EventUnreachable, InvalidParameter, TooLarge
from .disorder import CouplingField, CouplingLaw, derive_seed, sample_couplings
from .lattice_graph import Edge, canonical_edge
from .rc_mc import MIN_BATCHES, Estimate, SpinConfig, autocorrelation_time, batched_means
from .tension import Runner, local_runner
from .wulff import WulffShape, diam_inf

logger = logging.getLogger(__name__)

ENSEMBLE_CHAINS = 8
EXACT_SITE_CAP = 16
VOLUME_TOLERANCE = 0.10


def box_sites(N: int, d: int = 2) -> List[Tuple[int, ...]]:
    return list(itertools.product(range(1, N + 1), repeat=d))


def box_edges(N: int, d: int = 2) -> List[Edge]:
    """Edges of Z^d with at least one endpoint in {1..N}^d."""
    edges = set()
    for site in box_sites(N, d):
        for axis in range(d):
            for step in (-1, 1):
                other = list(site)
                other[axis] += step
                edges.add(canonical_edge(site, other))
    return sorted(edges)


def _neighbour_table(N: int, d: int, couplings: CouplingField):
    """Per site the 2d neighbour indices (-1 for exterior plus spins) and couplings."""
    shape = (N,) * d
    n_sites = N ** d
    nbr = np.full((n_sites, 2 * d), -1, dtype=np.int64)
    J = np.zeros((n_sites, 2 * d), dtype=float)
    for site in box_sites(N, d):
        x = np.ravel_multi_index(tuple(c - 1 for c in site), shape)
        slot = 0
        for axis in range(d):
            for step in (-1, 1):
                other = list(site)
                other[axis] += step
                J[x, slot] = couplings[canonical_edge(site, other)]
                if 1 <= other[axis] <= N:
                    nbr[x, slot] = np.ravel_multi_index(tuple(c - 1 for c in other), shape)
                slot += 1
    return nbr, J


@numba.jit(nopython=True)
def _restricted_metropolis(spins, nbr, J, beta, total, limit, sites, draws):
    accepted = 0
    blocked = 0
    for t in range(sites.shape[0]):
        x = sites[t]
        s = spins[x]
        if total - 2 * s > limit:
            blocked += 1
            continue
        h = 0.0
        for k in range(nbr.shape[1]):
            y = nbr[x, k]
            if y < 0:
                h += J[x, k]
            else:
                h += J[x, k] * spins[y]
        delta = -beta * s * h
        if delta >= 0.0 or draws[t] < math.exp(delta):
            spins[x] = -s
            total -= 2 * s
            accepted += 1
    return total, accepted, blocked


class CoexistenceChain:
    """
    Restricted Metropolis chain for mu^{J,+} on Lambda_N conditioned on
    m_N <= (1 - 2 alpha^d) m_hat. Sweep t draws from default_rng([seed, t]).
    """

    def __init__(self, N: int, couplings: CouplingField, beta: float, alpha: float, m_hat: float,
                 seed: int, d: int = 2, hot: bool = False):
        if N < 1:
            raise InvalidParameter(f"N={N} must be positive")
        if alpha < 0 or beta < 0:
            raise InvalidParameter(f"alpha={alpha} and beta={beta} must be nonnegative")
        self.N, self.d = int(N), int(d)
        self.beta = float(beta)
        self.alpha = float(alpha)
        self.m_hat = float(m_hat)
        self.seed = int(seed)
        self.sweep = 0
        self.couplings = couplings
        self.nbr, self.J = _neighbour_table(self.N, self.d, couplings)
        self.n_sites = self.N ** self.d

        if self.alpha == 0:
            self.limit = float(self.n_sites)
        else:
            self.limit = (1.0 - 2.0 * self.alpha ** self.d) * self.m_hat * self.n_sites
        self.spins = self._initial_spins(hot)
        self.total = int(self.spins.sum())
        self.attempts = 0
        self.accepted = 0
        self.blocked = 0
        self.energies: List[float] = []

    @property
    def threshold(self) -> float:
        """Bound on m_N / m_hat."""
        return 1.0 - 2.0 * self.alpha ** self.d if self.alpha > 0 else math.inf

    def _initial_spins(self, hot: bool) -> np.ndarray:
        if hot:
            rng = np.random.default_rng([self.seed, 2 ** 32 - 1])
            spins = rng.choice(np.array([-1, 1], dtype=np.int8), size=self.n_sites)
        else:
            spins = np.ones(self.n_sites, dtype=np.int8)
        if spins.sum() <= self.limit:
            return spins
        shape = (self.N,) * self.d
        coords = np.array(np.unravel_index(np.arange(self.n_sites), shape)).T
        center = (self.N - 1) / 2.0
        order = np.lexsort((np.abs(coords - center).sum(axis=1), np.abs(coords - center).max(axis=1)))
        total = int(spins.sum())
        for x in order:
            if total <= self.limit:
                break
            if spins[x] == 1:
                spins[x] = -1
                total -= 2
        if total > self.limit:
            raise EventUnreachable(f"No configuration has m/m_hat <= {self.threshold:.4f} (m_hat={self.m_hat})")
        return spins

    def step(self) -> SpinConfig:
        rng = np.random.default_rng([self.seed, self.sweep])
        sites = rng.integers(0, self.n_sites, size=self.n_sites)
        draws = rng.random(self.n_sites)
        self.total, accepted, blocked = _restricted_metropolis(
            self.spins, self.nbr, self.J, self.beta, self.total, self.limit, sites, draws)
        self.attempts += self.n_sites
        self.accepted += accepted
        self.blocked += blocked
        self.sweep += 1
        return self.config()

    def config(self) -> SpinConfig:
        return SpinConfig(spins=self.spins.reshape((self.N,) * self.d).copy(), bc='plus')

    @property
    def magnetization(self) -> float:
        return self.total / self.n_sites

    def energy(self) -> float:
        """(1/2) sum_e J_e s_x s_y, exterior spins plus."""
        neighbours = np.where(self.nbr >= 0, self.spins[np.maximum(self.nbr, 0)], 1)
        # internal edges are seen from both endpoints
        internal = np.where(self.nbr >= 0, 0.5, 1.0)
        return float(0.5 * np.sum(internal * self.J * self.spins[:, None] * neighbours))

    def run(self, sweeps: int, burn_in: int = 0, thin: int = 1) -> Iterator[SpinConfig]:
        """Emit every ``thin``-th configuration after ``burn_in`` sweeps."""
        for _ in range(burn_in):
            self.step()
        for t in range(sweeps):
            sample = self.step()
            if (t + 1) % thin == 0:
                self.energies.append(self.energy())
                yield sample

    def diagnostics(self) -> Dict[str, float]:
        attempts = max(self.attempts, 1)
        tau = autocorrelation_time(np.array(self.energies)) if len(self.energies) >= 2 * MIN_BATCHES else math.nan
        return {
            'acceptance': self.accepted / attempts,
            'event_boundary_hit_rate': self.blocked / attempts,
            'energy_autocorrelation': tau,
            'sweeps': self.sweep,
        }


def _couplings_for(N: int, d: int, law_or_couplings, seed: int) -> CouplingField:
    if isinstance(law_or_couplings, CouplingField):
        return law_or_couplings
    return sample_couplings(law_or_couplings, box_edges(N, d), seed)


def conditioned_sampler(N: int, law_or_couplings, beta: float, alpha: float, m_hat: float,
                        sweeps: int, burn_in: int = 0, thin: int = 1, seed: int = 0,
                        d: int = 2) -> Iterator[SpinConfig]:
    """
    Stream of configurations of the conditioned plus-boundary measure.

    Every emitted configuration satisfies m_N / m_hat <= 1 - 2 alpha^d; with
    alpha = 0 the chain is unconstrained.

    Raises:
        EventUnreachable: if even the all-minus configuration violates the constraint.
    """
    couplings = _couplings_for(N, d, law_or_couplings, derive_seed(seed, 0))
    chain = CoexistenceChain(N, couplings, beta, alpha, m_hat, derive_seed(seed, 1), d=d)
    yield from chain.run(sweeps, burn_in, thin)


def central_magnetization(spins: np.ndarray) -> float:
    """Mean spin over the central quarter window (side N/2)."""
    N = spins.shape[0]
    lo = N // 4
    hi = max(lo + 1, N - N // 4)
    window = spins[tuple(slice(lo, hi) for _ in range(spins.ndim))]
    return float(window.mean())


def estimate_magnetization(N: int, law_or_couplings, beta: float, sweeps: int, burn_in: int,
                           batches: int = MIN_BATCHES, seed: int = 0, d: int = 2) -> Estimate:
    """m_hat from an unconditioned plus-boundary run, measured on the central quarter."""
    couplings = _couplings_for(N, d, law_or_couplings, derive_seed(seed, 0))
    chain = CoexistenceChain(N, couplings, beta, 0.0, 1.0, derive_seed(seed, 1), d=d)
    series = np.array([central_magnetization(s.spins) for s in chain.run(sweeps, burn_in)])
    mean, stderr = batched_means(series, batches)
    logger.info(f"m_hat at N={N}, beta={beta}: {mean:.5f} +- {stderr:.5f}")
    return Estimate(mean=mean, stderr=stderr, batches=batches, samples=sweeps, burn_in=burn_in)


def exact_conditional_marginals(N: int, couplings: CouplingField, beta: float, alpha: float,
                                m_hat: float, d: int = 2) -> np.ndarray:
    """P(s_x = +1) per site under the conditioned measure, by enumeration."""
    n_sites = N ** d
    if n_sites > EXACT_SITE_CAP:
        raise TooLarge(f"{n_sites} sites exceed the enumeration cap of {EXACT_SITE_CAP}")
    chain = CoexistenceChain(N, couplings, beta, alpha, m_hat, seed=0, d=d)
    states = np.array(list(itertools.product((-1, 1), repeat=n_sites)), dtype=np.int8)
    allowed = states.sum(axis=1) <= chain.limit
    if not allowed.any():
        raise EventUnreachable("The conditioning event is empty")
    states = states[allowed]
    log_weights = np.empty(len(states))
    for k, spins in enumerate(states):
        chain.spins = spins
        log_weights[k] = beta * chain.energy()
    weights = np.exp(log_weights - log_weights.max())
    weights /= weights.sum()
    return weights @ (states == 1).astype(float)


@dataclass(frozen=True, eq=False)
class Profile:
    """Block magnetizations M_K over Delta_i = Ki + {1..K}^d; ``remainder`` sites per axis are dropped."""

    K: int
    N: int
    values: np.ndarray
    remainder: int

    @property
    def blocks(self) -> int:
        return self.values.shape[0]

    def block_centers(self) -> np.ndarray:
        """Centers (i + 1/2) K / N of the blocks in the unit cube."""
        d = self.values.ndim
        index = np.array(list(itertools.product(range(self.blocks), repeat=d)), dtype=float)
        return (index + 0.5) * self.K / self.N


def profile(sigma, K: int) -> Profile:
    """
    Block averages of a box configuration.

    Raises:
        BadK: if K < 1 or K > N.
    """
    spins = sigma.spins if isinstance(sigma, SpinConfig) else np.asarray(sigma)
    N, d = spins.shape[0], spins.ndim
    if K < 1 or K > N:
        raise BadK(f"Block side K={K} must lie in [1, N={N}]")
    blocks = N // K
    window = spins[tuple(slice(0, blocks * K) for _ in range(d))].astype(float)
    shape = []
    for _ in range(d):
        shape += [blocks, K]
    values = window.reshape(shape).mean(axis=tuple(range(1, 2 * d, 2)))
    return Profile(K=K, N=N, values=values, remainder=N - blocks * K)


@dataclass(frozen=True, eq=False)
class DropletFit:
    alpha: float
    shape: WulffShape = field(repr=False)
    z: Tuple[float, ...]
    distance: float
    translates: int


def droplet_indicator(centers: np.ndarray, shape: WulffShape, alpha: float, z) -> np.ndarray:
    """chi = -1 on z + alpha W and +1 elsewhere, at the given points."""
    if alpha == 0:
        return np.ones(len(centers))
    equations = ConvexHull(shape.vertices).equations
    local = (centers - np.asarray(z, dtype=float)) / alpha
    inside = np.all(local @ equations[:, :-1].T + equations[:, -1] <= 1e-12, axis=1)
    return np.where(inside, -1.0, 1.0)


def droplet_fit(block_profile: Profile, m_hat: float, alpha: float, shape: WulffShape) -> DropletFit:
    """
    min over translates z in T(alpha W) of || M_K / m_hat - chi_{z + alpha W} ||_1
    under the block measure, z on a grid of step K/N.

    Raises:
        EmptyTranslateSet: if alpha W fits in no translate of the unit cube.
    """
    fit = diam_inf(shape, alpha)
    step = block_profile.K / block_profile.N
    axes = []
    for lo, hi in zip(fit.translate_low, fit.translate_high):
        if lo > hi + 1e-12:
            raise EmptyTranslateSet(f"alpha={alpha} crystal of l-inf diameter {fit.diameter:.4f} fits in no translate")
        axes.append(np.arange(lo, hi + 1e-12, step))

    centers = block_profile.block_centers()
    observed = block_profile.values.reshape(-1) / m_hat
    cell = step ** block_profile.values.ndim
    best_z, best = None, math.inf
    count = 0
    for z in itertools.product(*axes):
        count += 1
        distance = cell * float(np.sum(np.abs(observed - droplet_indicator(centers, shape, alpha, z))))
        if distance < best - 1e-12:
            best_z, best = tuple(float(c) for c in z), distance
    return DropletFit(alpha=float(alpha), shape=shape, z=best_z, distance=best, translates=count)


def minority_fraction(block_profile: Profile, m_hat: float) -> float:
    return float(np.mean(block_profile.values / m_hat < 0))


def coexistence_chain(payload: Dict) -> Dict:
    """
    One conditioned chain from a JSON payload: N, d, law, couplings_seed,
    beta, alpha, m_hat, sweeps, burn_in, thin, seed, K, hot and optionally
    shape (crystal vertices).
    """
    N, d = payload['N'], payload.get('d', 2)
    couplings = sample_couplings(CouplingLaw.parse(payload['law']), box_edges(N, d), payload['couplings_seed'])
    chain = CoexistenceChain(N, couplings, payload['beta'], payload['alpha'], payload['m_hat'],
                             payload['seed'], d=d, hot=payload.get('hot', False))
    K = payload['K']
    fractions, magnetizations = [], []
    last = None
    for sample in chain.run(payload['sweeps'], payload.get('burn_in', 0), payload.get('thin', 1)):
        last = profile(sample, K)
        fractions.append(minority_fraction(last, payload['m_hat']))
        magnetizations.append(sample.magnetization)
    result = {
        'seed': payload['seed'],
        'samples': len(fractions),
        'mean_magnetization': float(np.mean(magnetizations)) if magnetizations else math.nan,
        'minority_fraction': float(np.mean(fractions)) if fractions else math.nan,
        'max_magnetization_ratio': float(np.max(magnetizations) / payload['m_hat']) if magnetizations else math.nan,
        'diagnostics': chain.diagnostics(),
        'profile': last.values.tolist() if last is not None else [],
    }
    if payload.get('shape') is not None and last is not None:
        shape = _shape_from_vertices(payload['shape'])
        fit = droplet_fit(last, payload['m_hat'], payload['alpha'], shape)
        result['fit'] = {'z': list(fit.z), 'distance': fit.distance}
    return result


def _shape_from_vertices(vertices) -> WulffShape:
    vertices = np.asarray(vertices, dtype=float)
    volume = ConvexHull(vertices).volume
    return WulffShape(vertices=vertices, raw_vertices=vertices, scale=1.0, volume=volume, tau=None)


def ensemble_agreement(N: int, law: CouplingLaw, beta: float, alpha: float, m_hat: float,
                       shape: WulffShape, K: int, sweeps: int, burn_in: int = 0, seed: int = 0,
                       d: int = 2, chains: int = ENSEMBLE_CHAINS, runner: Optional[Runner] = None) -> Dict:
    """
    Hot-restart ensemble on one disorder sample: independent chains from
    random starts, compared through their fitted droplet centers.
    """
    base = {'N': N, 'd': d, 'law': law.to_spec(), 'couplings_seed': derive_seed(seed, 0), 'beta': beta,
            'alpha': alpha, 'm_hat': m_hat, 'sweeps': sweeps, 'burn_in': burn_in, 'K': K, 'hot': True,
            'shape': shape.vertices.tolist()}
    payloads = [dict(base, seed=derive_seed(seed, 1, c)) for c in range(chains)]
    results = (runner or local_runner(coexistence_chain))(payloads)
    centers = np.array([r['fit']['z'] for r in results])
    spread = float(np.max(np.abs(centers - centers.mean(axis=0)))) if len(centers) else 0.0
    tolerance = 2.0 * K / N
    report = {
        'centers': centers.tolist(),
        'distances': [r['fit']['distance'] for r in results],
        'spread': spread,
        'tolerance': tolerance,
        'agree': spread <= tolerance,
    }
    if not report['agree']:
        logger.warning(f"Hot-restart ensemble disagrees: droplet centers spread {spread:.4f} > {tolerance:.4f}")
    return report


def volume_fraction_sensitivity(N: int, law: CouplingLaw, beta: float, alpha: float, m_hat: Estimate,
                                K: int, sweeps: int, burn_in: int = 0, seed: int = 0, d: int = 2,
                                runner: Optional[Runner] = None) -> List[Dict]:
    """
    Time-averaged minority block fraction against alpha^d, with the
    threshold built from m_hat - stderr, m_hat and m_hat + stderr.
    """
    target = alpha ** d
    base = {'N': N, 'd': d, 'law': law.to_spec(), 'couplings_seed': derive_seed(seed, 0), 'beta': beta,
            'alpha': alpha, 'sweeps': sweeps, 'burn_in': burn_in, 'K': K, 'seed': derive_seed(seed, 1)}
    shifts = (-1.0, 0.0, 1.0)
    payloads = [dict(base, m_hat=m_hat.mean + s * m_hat.stderr) for s in shifts]
    results = (runner or local_runner(coexistence_chain))(payloads)
    rows = []
    for shift, payload, result in zip(shifts, payloads, results):
        fraction = result['minority_fraction']
        rows.append({
            'shift': shift,
            'm_hat': payload['m_hat'],
            'minority_fraction': fraction,
            'target': target,
            'relative_error': abs(fraction - target) / target if target > 0 else math.nan,
            'consistent': target > 0 and abs(fraction - target) <= VOLUME_TOLERANCE * target,
        })
    return rows
