"""
Correlated N-qubit working media and their approach to Carnot efficiency.

N non-interacting qubits of gap ``omega`` have levels ``m * omega`` with
degeneracy C(N, m).  The reversible state with support cutoff ``k`` is the
Gibbs distribution restricted to ``m <= k``; all of its thermodynamics follows
from the restricted partition function

    Z_k(beta) = sum_{m <= k} C(N, m) exp(-m beta omega),

evaluated here in the log domain so that N can reach 10^6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .engines import CycleReport, assemble_cycle, _check_engine_temperatures
from .errors import DomainError, PreconditionError
from .thermo import HamiltonianSpectrum, _check_temperature


def _check_cutoff(N: int, k: int) -> tuple[int, int]:
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N!r}")
    if int(k) != k or not 0 <= k <= N:
        raise DomainError(f"cutoff k={k!r} outside [0, N={N}]")
    return int(N), int(k)


def log_binomial(N: int, m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return gammaln(N + 1.0) - gammaln(m + 1.0) - gammaln(N - m + 1.0)


def _log_terms(N, k, beta_omega):
    m = np.arange(k + 1, dtype=float)
    return m, log_binomial(N, m) - m * beta_omega


def local_pk(N: int, k: int, beta_omega: float) -> float:
    """Excited-state probability of each qubit in the cutoff-``k`` state."""
    N, k = _check_cutoff(N, k)
    if k == 0:
        return 0.0
    m, a = _log_terms(N, k, beta_omega)
    return float(np.exp(logsumexp(a[1:] + np.log(m[1:])) - logsumexp(a) - math.log(N)))


def log_restricted_partition(N: int, k: int, beta: float, omega: float) -> float:
    N, k = _check_cutoff(N, k)
    return float(logsumexp(_log_terms(N, k, beta * omega)[1]))


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log(p) + (1 - p) * math.log1p(-p))


def binary_relative_entropy(q: float, p: float) -> float:
    """D(q||p) in nats."""
    out = 0.0
    if q > 0:
        out += q * math.log(q / p)
    if q < 1:
        out += (1 - q) * math.log((1 - q) / (1 - p))
    return out


def log_binomial_tail(N: int, k: int, p: float) -> float:
    """ln P(X <= k) for X ~ Bin(N, p), by log-sum-exp over the terms."""
    N, k = _check_cutoff(N, k)
    if not 0 < p < 1:
        raise DomainError(f"p must lie in (0, 1), got {p!r}")
    m = np.arange(k + 1, dtype=float)
    terms = log_binomial(N, m) + m * math.log(p) + (N - m) * math.log1p(-p)
    return float(logsumexp(terms))


def binomial_tail_exact(N: int, k: int, p: float) -> float:
    return math.exp(log_binomial_tail(N, k, p))


def binomial_tail_bounds(N: int, k: int, p: float) -> tuple[float, float]:
    """Large-deviation sandwich for the lower binomial tail at q = k/N < p.

    exp(-N D(q||p)) / sqrt(8 N q (1-q))  <=  P(X <= k)  <=  exp(-N D(q||p))
    """
    N, k = _check_cutoff(N, k)
    q = k / N
    if not (0 < q < p < 1):
        raise PreconditionError(f"bounds need 0 < k/N < p < 1, got k/N={q}, p={p}")
    upper = math.exp(-N * binary_relative_entropy(q, p))
    return upper / math.sqrt(8 * N * q * (1 - q)), upper


class EnsembleThermo(NamedTuple):
    log_z: float
    energy: float
    entropy: float
    free_energy: float
    pk: float


def ensemble_thermo(N: int, k: int, omega: float, T: float) -> EnsembleThermo:
    """Energy, entropy and free energy of the cutoff-``k`` reversible state.

    The mean energy is the weighted sum N p_k omega rather than a numerical
    beta-derivative of ln Z_k.
    """
    T = _check_temperature(T)
    beta = 1.0 / T
    log_z = log_restricted_partition(N, k, beta, omega)
    pk = local_pk(N, k, beta * omega)
    energy = N * pk * omega
    entropy = log_z + beta * energy
    return EnsembleThermo(log_z, energy, entropy, -T * log_z, pk)


def correlations_per_particle(N: int, k: int, beta: float, omega: float) -> float:
    """Total correlations per qubit: h(p_k) - S_k / N (nats)."""
    N, k = _check_cutoff(N, k)
    if k == N:
        return 0.0  # the full-support state is a product of thermal qubits
    th = ensemble_thermo(N, k, omega, 1.0 / beta)
    value = binary_entropy(th.pk) - th.entropy / N
    # exact zero for product states; keep rounding noise from going negative
    return max(value, 0.0) if value > -1e-12 else value


def collective_spectrum(N: int, omega: float) -> HamiltonianSpectrum:
    """The N-qubit spectrum grouped by excitation number."""
    return HamiltonianSpectrum.from_levels(
        [m * omega for m in range(N + 1)], [math.comb(N, m) for m in range(N + 1)]
    )


@dataclass(frozen=True)
class ManyBodyReport:
    n: int
    k: int
    l: int
    report: CycleReport
    w_per_particle: float
    eta: float
    eta_carnot: float


def manybody_cycle(N: int, k: int, l: int, omega: float, T_hot: float, T_cold: float) -> ManyBodyReport:
    """Cycle between the cutoff-k (A, D) and cutoff-l (B, C) reversible states."""
    T_hot, T_cold = _check_engine_temperatures(T_hot, T_cold)
    if N < 2:
        raise DomainError("a single qubit admits no non-trivial cycle of this kind; need N >= 2")
    if not (1 <= k < l <= N):
        raise DomainError(f"need 1 <= k < l <= N, got k={k}, l={l}, N={N}")
    if not omega > 0:
        raise DomainError(f"gap must be positive, got {omega!r}")
    corners = {
        "A": ensemble_thermo(N, k, omega, T_hot),
        "B": ensemble_thermo(N, l, omega, T_hot),
        "C": ensemble_thermo(N, l, omega, T_cold),
        "D": ensemble_thermo(N, k, omega, T_cold),
    }
    report = assemble_cycle(
        {s: c.energy for s, c in corners.items()},
        {s: c.free_energy for s, c in corners.items()},
        T_hot, T_cold,
    )
    return ManyBodyReport(N, k, l, report, report.w_cycle / N, report.eta, report.eta_carnot)


def thermal_excitation(beta_omega: float) -> float:
    return 1.0 / (1.0 + math.exp(beta_omega))


def local_free_energy(p: float, omega: float, T: float) -> float:
    """Free energy of the single-qubit state p|1><1| + (1-p)|0><0|."""
    return p * omega - T * binary_entropy(p)


def asymptotic_work_per_particle(q: float, r: float, omega: float, T_hot: float, T_cold: float) -> float:
    return (local_free_energy(q, omega, T_hot) - local_free_energy(r, omega, T_hot)
            - local_free_energy(q, omega, T_cold) + local_free_energy(r, omega, T_cold))


def cutoffs(N: int, q: float, r: float) -> tuple[int, int]:
    """k_N = floor(qN), l_N = floor(rN), lifted so that 1 <= k < l <= N."""
    k = max(1, math.floor(q * N))
    l = min(N, max(k + 1, math.floor(r * N)))
    return k, l


@dataclass(frozen=True)
class ScanRow:
    n: int
    k: int
    l: int
    eta: float
    eta_carnot: float
    w_per_particle: float
    corr_per_particle: float
    pk_hot: float

    def row(self) -> dict:
        return {"n": self.n, "k": self.k, "l": self.l, "eta": self.eta,
                "eta_carnot": self.eta_carnot, "w_per_particle": self.w_per_particle,
                "corr_per_particle": self.corr_per_particle}


def scan_row(N: int, q: float, r: float, omega: float, T_hot: float, T_cold: float) -> ScanRow:
    k, l = cutoffs(N, q, r)
    mb = manybody_cycle(N, k, l, omega, T_hot, T_cold)
    corr = max(correlations_per_particle(N, c, 1.0 / T, omega)
               for c, T in ((k, T_hot), (l, T_hot), (l, T_cold), (k, T_cold)))
    return ScanRow(N, k, l, mb.eta, mb.eta_carnot, mb.w_per_particle, corr,
                   local_pk(N, k, omega / T_hot))


def check_scan_parameters(q: float, r: float, omega: float, T_hot: float, T_cold: float):
    p_hot = thermal_excitation(omega / T_hot)
    p_cold = thermal_excitation(omega / T_cold)
    if not (0 < q < r < min(p_hot, p_cold)):
        raise PreconditionError(
            f"need 0 < q < r < min(p_hot, p_cold) = {min(p_hot, p_cold):.6g}; got q={q}, r={r}"
        )


def convergence_scan(N_list: Iterable[int], q: float, r: float, omega: float,
                     T_hot: float, T_cold: float, map_fn=map) -> list[ScanRow]:
    """One row per N, in the order given.

    ``corr_per_particle`` is the largest of the four corner states' values.
    ``map_fn`` lets callers evaluate rows concurrently (e.g. an executor's map).
    """
    _check_engine_temperatures(T_hot, T_cold)
    check_scan_parameters(q, r, omega, T_hot, T_cold)
    N_list = list(N_list)
    return list(map_fn(lambda N: scan_row(N, q, r, omega, T_hot, T_cold), N_list))


def fit_rate_constant(ns, values, last: int = 3) -> float:
    """Smallest C with values <= C ln N / N over the ``last`` largest N."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    idx = np.argsort(ns)[-last:]
    return float(np.max(values[idx] * ns[idx] / np.log(ns[idx])))


def fit_rate_exponent(ns, values) -> float:
    """Least-squares slope of ln(values) against ln(ln N / N)."""
    ns = np.asarray(ns, dtype=float)
    x = np.log(np.log(ns) / ns)
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
