"""
Single-shot thermodynamics of finite block-diagonal states.

Everything here works with populations over an energy eigenbasis ordered
level by level (all degenerate states of the lowest level first).  Units have
k_B = hbar = 1, so temperatures and energies share one unit and entropies are
in nats.

Thermal operations are represented only through their feasibility relation on
block-diagonal states: thermo-majorization of beta-ordered Lorenz curves.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, ShapeError

SUPPORT_TOL = 1e-12
NORM_TOL = 1e-12
CURVE_TOL = 1e-10
REVERSIBLE_TOL = 1e-9
ENERGY_TOL = 1e-12


def _check_temperature(T: float) -> float:
    T = float(T)
    if not T > 0 or not np.isfinite(T):
        raise DomainError(f"temperature must be positive and finite, got {T!r}")
    return T


@dataclass(frozen=True)
class BathSpec:
    temperature: float

    def __post_init__(self):
        object.__setattr__(self, "temperature", _check_temperature(self.temperature))

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature


@dataclass(frozen=True)
class HamiltonianSpectrum:
    """Energy levels with degeneracies.

    Energies must be strictly increasing.  The basis used by every state
    aligned with this spectrum lists the ``degeneracies[0]`` states of the
    first level, then those of the second, and so on.
    """

    energies: tuple[float, ...]
    degeneracies: tuple[int, ...]

    def __post_init__(self):
        energies = tuple(float(e) for e in self.energies)
        degeneracies = tuple(int(g) for g in self.degeneracies)
        if len(energies) == 0:
            raise DomainError("a spectrum needs at least one level")
        if len(energies) != len(degeneracies):
            raise ShapeError(
                f"{len(energies)} energies but {len(degeneracies)} degeneracies"
            )
        if not all(np.isfinite(energies)):
            raise DomainError("energies must be finite")
        if any(g < 1 for g in degeneracies):
            raise DomainError("degeneracies must be positive integers")
        if any(b <= a for a, b in zip(energies, energies[1:])):
            raise DomainError("energies must be strictly increasing")
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "degeneracies", degeneracies)

    @classmethod
    def from_levels(cls, energies: Sequence[float], degeneracies: Sequence[int] | None = None):
        if degeneracies is None:
            degeneracies = [1] * len(energies)
        return cls(tuple(energies), tuple(degeneracies))

    @classmethod
    def qubit(cls, gap: float) -> "HamiltonianSpectrum":
        """Two-level system ``gap * |1><1|``."""
        if not gap > 0:
            raise DomainError(f"qubit gap must be positive, got {gap!r}")
        return cls((0.0, float(gap)), (1, 1))

    @classmethod
    def from_basis_energies(cls, basis_energies: Sequence[float]):
        """Group a list of basis-state energies into levels.

        Returns ``(spectrum, position)`` where ``position[i]`` is the index of
        the i-th input basis state in the level-ordered basis of ``spectrum``.
        Energies closer than ~1e-12 (relative) are merged into one level.
        """
        e = np.asarray(basis_energies, dtype=float)
        if e.ndim != 1 or e.size == 0:
            raise ShapeError("basis energies must be a non-empty 1-d sequence")
        order = np.argsort(e, kind="stable")
        sorted_e = e[order]
        gaps = np.diff(sorted_e)
        new_level = gaps > ENERGY_TOL * np.maximum(1.0, np.abs(sorted_e[1:]))
        starts = np.concatenate(([0], np.nonzero(new_level)[0] + 1))
        counts = np.diff(np.concatenate((starts, [e.size])))
        spectrum = cls(tuple(sorted_e[starts]), tuple(int(c) for c in counts))
        position = np.empty(e.size, dtype=int)
        position[order] = np.arange(e.size)
        return spectrum, position

    @property
    def dim(self) -> int:
        return int(sum(self.degeneracies))

    @property
    def n_levels(self) -> int:
        return len(self.energies)

    @cached_property
    def basis_energies(self) -> np.ndarray:
        out = np.repeat(np.asarray(self.energies, dtype=float), self.degeneracies)
        out.setflags(write=False)
        return out

    @cached_property
    def level_of_basis(self) -> np.ndarray:
        out = np.repeat(np.arange(self.n_levels), self.degeneracies)
        out.setflags(write=False)
        return out

    def log_partition_function(self, T: float) -> float:
        T = _check_temperature(T)
        return float(logsumexp(-self.basis_energies / T))

    def partition_function(self, T: float) -> float:
        return float(np.exp(self.log_partition_function(T)))

    def thermal_free_energy(self, T: float) -> float:
        """F(tau) = -T ln Z."""
        return -T * self.log_partition_function(T)

    def level_mask(self, levels: Iterable[float]) -> np.ndarray:
        """Boolean mask over basis states belonging to the given level energies."""
        levels = list(levels)
        if not levels:
            raise DomainError("the level set is empty")
        known = np.asarray(self.energies)
        chosen = np.zeros(self.n_levels, dtype=bool)
        for energy in levels:
            hit = np.isclose(known, float(energy), rtol=ENERGY_TOL, atol=ENERGY_TOL)
            if not hit.any():
                raise DomainError(f"energy {energy!r} is not a level of the spectrum")
            chosen |= hit
        return chosen[self.level_of_basis]


@dataclass(frozen=True, eq=False)
class BlockDiagonalState:
    """Populations of a state diagonal in the energy eigenbasis."""

    populations: np.ndarray

    def __post_init__(self):
        p = np.array(self.populations, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ShapeError("populations must be a non-empty 1-d array")
        if not np.all(np.isfinite(p)):
            raise DomainError("populations must be finite")
        if np.any(p < 0):
            raise DomainError("populations must be nonnegative")
        total = p.sum()
        if abs(total - 1.0) > NORM_TOL:
            raise DomainError(f"populations sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "populations", p)

    @property
    def dim(self) -> int:
        return self.populations.size

    @property
    def support(self) -> np.ndarray:
        return self.populations > SUPPORT_TOL

    def __eq__(self, other):
        if not isinstance(other, BlockDiagonalState):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.populations, other.populations)

    def __hash__(self):
        return hash(self.populations.tobytes())


class Functionals(NamedTuple):
    energy: float
    entropy: float
    free_energy: float


@dataclass(frozen=True, eq=False)
class ThermoCurve:
    """Piecewise-linear thermo-majorization curve through ``(x, y)``."""

    x: np.ndarray
    y: np.ndarray

    def __call__(self, x):
        # np.interp holds the end value past the last breakpoint
        return np.interp(x, self.x, self.y)

    @property
    def breakpoints(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist()))


def logsumexp(a) -> float:
    """ln sum exp(a), shifted by the max; entries of -inf are ignored."""
    a = np.asarray(a, dtype=float)
    m = a.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(a - m).sum()))


def _aligned(rho: BlockDiagonalState, H: HamiltonianSpectrum) -> np.ndarray:
    if rho.dim != H.dim:
        raise ShapeError(f"state has {rho.dim} populations, spectrum has dimension {H.dim}")
    return rho.populations


def gibbs_state(H: HamiltonianSpectrum, T: float) -> BlockDiagonalState:
    T = _check_temperature(T)
    logw = -H.basis_energies / T
    p = np.exp(logw - logsumexp(logw))
    return BlockDiagonalState(p / p.sum())


def thermal_like_state(H: HamiltonianSpectrum, mask, T: float) -> BlockDiagonalState:
    """Gibbs weights restricted to the basis states selected by ``mask``."""
    T = _check_temperature(T)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (H.dim,):
        raise ShapeError(f"support mask has shape {mask.shape}, expected ({H.dim},)")
    if not mask.any():
        raise DomainError("support is empty")
    logw = np.where(mask, -H.basis_energies / T, -np.inf)
    p = np.exp(logw - logsumexp(logw))
    return BlockDiagonalState(p / p.sum())


def restricted_thermal_state(H: HamiltonianSpectrum, levels: Iterable[float], T: float):
    """Thermal state restricted to whole energy levels ``levels``.

    Every degenerate state of an included level is populated with weight
    ``exp(-E/T) / Z_U``; all other states are empty.
    """
    return thermal_like_state(H, H.level_mask(levels), T)


def state_functionals(rho: BlockDiagonalState, H: HamiltonianSpectrum, T: float) -> Functionals:
    T = _check_temperature(T)
    p = _aligned(rho, H)
    energy = float(p @ H.basis_energies)
    nz = p[p > 0]
    entropy = float(-(nz * np.log(nz)).sum())
    return Functionals(energy, entropy, energy - T * entropy)


def min_free_energy(rho: BlockDiagonalState, H: HamiltonianSpectrum, T: float) -> float:
    """F_0: -T ln of the Gibbs weight of the support (basis states counted singly)."""
    T = _check_temperature(T)
    p = _aligned(rho, H)
    supp = p > SUPPORT_TOL
    if not supp.any():
        raise DomainError("state has empty support")
    return -T * float(logsumexp(-H.basis_energies[supp] / T))


def _log_keys(p: np.ndarray, E: np.ndarray, T: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p) + E / T


def max_free_energy(rho: BlockDiagonalState, H: HamiltonianSpectrum, T: float) -> float:
    """F_inf = T ln max_i p_i exp(E_i / T)."""
    T = _check_temperature(T)
    p = _aligned(rho, H)
    return T * float(np.max(_log_keys(p, H.basis_energies, T)))


def extractable_work(rho: BlockDiagonalState, H: HamiltonianSpectrum, T: float) -> float:
    return min_free_energy(rho, H, T) - H.thermal_free_energy(T)


def work_of_formation(rho: BlockDiagonalState, H: HamiltonianSpectrum, T: float) -> float:
    return max_free_energy(rho, H, T) - H.thermal_free_energy(T)


def beta_order(rho: BlockDiagonalState, H: HamiltonianSpectrum, T: float) -> np.ndarray:
    """Basis indices sorted by ``p_i exp(E_i/T)`` descending.

    Keys equal to within 1e-12 (relative, in log space) count as ties and are
    broken by energy ascending, then by index.
    """
    T = _check_temperature(T)
    p = _aligned(rho, H)
    E = H.basis_energies
    keys = _log_keys(p, E, T)
    order = np.lexsort((np.arange(p.size), E, -keys))
    k = keys[order]
    finite = np.isfinite(k)
    scale = np.maximum(1.0, np.abs(np.where(finite, k, 0.0)))
    with np.errstate(invalid="ignore"):
        close = np.abs(np.diff(k)) <= 1e-12 * scale[1:]
    close &= finite[1:] & finite[:-1]
    close |= np.isneginf(k[1:]) & np.isneginf(k[:-1])
    start = 0
    for i in range(1, p.size + 1):
        if i == p.size or not close[i - 1]:
            if i - start > 1:
                block = order[start:i]
                order[start:i] = block[np.lexsort((block, E[block]))]
            start = i
    return order


def lorenz_curve(rho: BlockDiagonalState, H: HamiltonianSpectrum, T: float) -> ThermoCurve:
    order = beta_order(rho, H, T)
    gibbs_weights = np.exp(-H.basis_energies / T)
    x = np.concatenate(([0.0], np.cumsum(gibbs_weights[order])))
    y = np.concatenate(([0.0], np.cumsum(rho.populations[order])))
    return ThermoCurve(x, y)


def thermo_majorizes(
    rho: BlockDiagonalState,
    sigma: BlockDiagonalState,
    H: HamiltonianSpectrum,
    T: float,
    tol: float = CURVE_TOL,
) -> bool:
    """True when ``rho`` can be turned into ``sigma`` by a thermal operation."""
    if rho.dim != sigma.dim:
        raise ShapeError("states live on different spaces")
    a = lorenz_curve(rho, H, T)
    b = lorenz_curve(sigma, H, T)
    xs = np.union1d(a.x, b.x)
    return bool(np.all(a(xs) >= b(xs) - tol))


def is_reversible(
    rho: BlockDiagonalState, H: HamiltonianSpectrum, T: float, tol: float = REVERSIBLE_TOL
) -> bool:
    """Thermal-like test: ``p_i exp(E_i/T)`` constant (relative ``tol``) on the support."""
    T = _check_temperature(T)
    p = _aligned(rho, H)
    supp = p > SUPPORT_TOL
    keys = _log_keys(p[supp], H.basis_energies[supp], T)
    return bool(keys.max() - keys.min() <= np.log1p(tol))


@dataclass(frozen=True)
class ComposedSpectrum:
    """A spectrum built from parts, with a map from the natural product basis.

    ``position[i]`` gives where the i-th state of the natural basis (e.g.
    ``i = a * dim_b + b`` for a tensor product) sits in ``spectrum``'s basis.
    """

    spectrum: HamiltonianSpectrum
    position: np.ndarray

    def arrange(self, natural_populations) -> BlockDiagonalState:
        p = np.asarray(natural_populations, dtype=float)
        if p.shape != self.position.shape:
            raise ShapeError(f"expected {self.position.size} populations, got {p.shape}")
        out = np.empty_like(p)
        out[self.position] = p
        return BlockDiagonalState(out)


@dataclass(frozen=True)
class ClockedSpectrum(ComposedSpectrum):
    """System-plus-clock spectrum ``H1 (x) |0><0| + H2 (x) |1><1|``."""

    clock: np.ndarray  # clock value of each basis state of ``spectrum``

    def embed(self, state: BlockDiagonalState, clock: int) -> BlockDiagonalState:
        d = state.dim
        if 2 * d != self.position.size:
            raise ShapeError("state dimension does not match the clocked system")
        natural = np.zeros(2 * d)
        natural[clock * d:(clock + 1) * d] = state.populations
        return self.arrange(natural)

    def clock_mask(self, clock: int) -> np.ndarray:
        return self.clock == clock


def extend_with_clock(H1: HamiltonianSpectrum, H2: HamiltonianSpectrum) -> ClockedSpectrum:
    if H1.dim != H2.dim:
        raise ShapeError(f"H1 has dimension {H1.dim} but H2 has {H2.dim}")
    spectrum, position = HamiltonianSpectrum.from_basis_energies(
        np.concatenate((H1.basis_energies, H2.basis_energies))
    )
    tags = np.concatenate((np.zeros(H1.dim, dtype=int), np.ones(H2.dim, dtype=int)))
    clock = np.empty_like(tags)
    clock[position] = tags
    return ClockedSpectrum(spectrum, position, clock)


def tensor(Ha: HamiltonianSpectrum, Hb: HamiltonianSpectrum) -> ComposedSpectrum:
    """Non-interacting composite ``Ha (x) 1 + 1 (x) Hb``."""
    energies = (Ha.basis_energies[:, None] + Hb.basis_energies[None, :]).ravel()
    return ComposedSpectrum(*HamiltonianSpectrum.from_basis_energies(energies))


def product_state(
    composed: ComposedSpectrum, a: BlockDiagonalState, b: BlockDiagonalState
) -> BlockDiagonalState:
    return composed.arrange(np.outer(a.populations, b.populations).ravel())


def battery(*levels: float) -> HamiltonianSpectrum:
    """Nondegenerate battery with the given energy levels (duplicates merged)."""
    return HamiltonianSpectrum.from_levels(sorted({float(w) for w in levels}))


def battery_eigenstate(H_w: HamiltonianSpectrum, energy: float) -> BlockDiagonalState:
    p = H_w.level_mask([energy]).astype(float)
    return BlockDiagonalState(p)
