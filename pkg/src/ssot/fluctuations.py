"""
Average work extraction with bounded fluctuations during thermalization.

The battery is a translation-invariant weight: a process that takes the
system from basis state ``s`` to ``s'`` while raising the weight by ``w`` is
realisable by a thermal operation iff, for every output state ``s'``,

    sum_{s, w} exp(-E_s/T) exp(w/T) P(s', w | s) <= exp(-E_{s'}/T).

Work values are restricted to a uniform grid of battery levels.  With the
system ending thermal and uncorrelated from the battery, the problem reduces
to choosing a conditional work distribution ``K(w | s)`` for every state in
the support of the initial state such that

    sum_s tau_s E_K[exp(w/T) | s] <= 1,

with ``tau`` the bath's Gibbs distribution.  The ``exp(w/T)`` cost is convex
and linear interpolation between grid levels is optimal, so for a fixed
window of levels the best mean is a fractional knapsack solved greedily.
Windows are then scanned to enforce the fluctuation bound
``|w - <W>| <= delta_w`` on every level carrying probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .engines import CycleReport, qubit_engine
from .errors import DomainError, ShapeError
from .thermo import (
    SUPPORT_TOL,
    BlockDiagonalState,
    HamiltonianSpectrum,
    _check_temperature,
    gibbs_state,
)

_EPS = 1e-12


@dataclass(frozen=True)
class BatteryGrid:
    w_min: float
    w_max: float
    n_levels: int

    def __post_init__(self):
        if not self.w_min < self.w_max:
            raise DomainError(f"need w_min < w_max, got {self.w_min}, {self.w_max}")
        if int(self.n_levels) < 2:
            raise DomainError("a battery grid needs at least two levels")
        object.__setattr__(self, "n_levels", int(self.n_levels))
        i = self.zero_index
        if not 0 <= i < self.n_levels or abs(self.levels[i]) > 1e-9 * self.spacing:
            raise DomainError("the battery grid must contain the level 0")

    @classmethod
    def default(cls) -> "BatteryGrid":
        return cls(-2.0, 2.0, 41)

    @property
    def spacing(self) -> float:
        return (self.w_max - self.w_min) / (self.n_levels - 1)

    @property
    def zero_index(self) -> int:
        return int(round(-self.w_min / self.spacing))

    @property
    def levels(self) -> np.ndarray:
        w = np.linspace(self.w_min, self.w_max, self.n_levels)
        i = self.zero_index
        if 0 <= i < self.n_levels and abs(w[i]) <= 1e-9 * self.spacing:
            w[i] = 0.0
        return w


@dataclass(frozen=True, eq=False)
class WorkDistribution:
    """Distribution ``probabilities`` over the battery ``levels``.

    ``conditional[s, j]`` is the probability of ending on level ``j`` given
    the system started in basis state ``s`` (rows outside the initial support
    are zero).
    """

    levels: np.ndarray
    probabilities: np.ndarray
    delta_w: float
    conditional: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.levels.shape != self.probabilities.shape:
            raise ShapeError("levels and probabilities differ in length")
        if abs(self.probabilities.sum() - 1.0) > 1e-12:
            raise DomainError("work distribution is not normalised")
        if np.any(self.probabilities < -1e-15):
            raise DomainError("negative probability in work distribution")
        lo, hi = self.support_range
        if hi - self.mean > self.delta_w + 1e-9 or self.mean - lo > self.delta_w + 1e-9:
            raise DomainError("work distribution violates its fluctuation bound")

    @property
    def mean(self) -> float:
        return float(self.probabilities @ self.levels)

    @property
    def support_range(self) -> tuple[float, float]:
        w = self.levels[self.probabilities > SUPPORT_TOL]
        return float(w.min()), float(w.max())


@dataclass
class _Allocation:
    mean: float
    lo: int
    steps: np.ndarray  # full grid steps above lo, per support state
    theta: np.ndarray  # fractional step beyond that, per support state


def _best_in_window(rho_s, tau_s, w, ew, lo, hi):
    """Largest mean work with every support state's work inside w[lo..hi].

    ``ew`` is exp(w/T).  Returns None when even the lowest level breaks the
    budget.
    """
    S = rho_s.size
    budget = 1.0 - tau_s.sum() * ew[lo]
    if budget < -_EPS:
        return None
    steps = np.zeros(S, dtype=int)
    theta = np.zeros(S)
    if hi > lo and budget > 0:
        cost = np.outer(tau_s, np.diff(ew[lo:hi + 1])).ravel()
        gain = np.outer(rho_s, np.diff(w[lo:hi + 1])).ravel()
        order = np.argsort(-(gain / cost), kind="stable")
        cum = np.cumsum(cost[order])
        n_full = int(np.searchsorted(cum, budget, side="right"))
        m = hi - lo
        owners = order[:n_full] // m
        np.add.at(steps, owners, 1)
        if n_full < order.size:
            spent = cum[n_full - 1] if n_full else 0.0
            nxt = order[n_full]
            theta[nxt // m] = (budget - spent) / cost[nxt]
    pos = lo + steps
    mean = float(rho_s @ (w[pos] + theta * (w[np.minimum(pos + 1, w.size - 1)] - w[pos])))
    return _Allocation(mean, lo, steps, theta)


def max_avg_work_bounded(rho: BlockDiagonalState, H: HamiltonianSpectrum, T_bath: float,
                         delta_w: float, grid: BatteryGrid | None = None):
    """Maximise the average work of ``rho -> gibbs_state(H, T_bath)``.

    Every level the battery can end on must lie within ``delta_w`` of the
    mean.  Returns ``(mean_work, WorkDistribution)``.  When nothing beats
    doing nothing, the battery stays at level 0.
    """
    T = _check_temperature(T_bath)
    if not delta_w >= 0:
        raise DomainError(f"delta_w must be nonnegative, got {delta_w!r}")
    if rho.dim != H.dim:
        raise ShapeError(f"state has {rho.dim} populations, spectrum has dimension {H.dim}")
    grid = grid or BatteryGrid.default()
    w = grid.levels
    n = w.size
    ew = np.exp(w / T)
    supp = rho.populations > SUPPORT_TOL
    rho_s = rho.populations[supp]
    rho_s = rho_s / rho_s.sum()
    tau_s = gibbs_state(H, T).populations[supp]

    zero = grid.zero_index
    best = _best_in_window(rho_s, tau_s, w, ew, zero, zero)
    best_value, target = best.mean, None

    if delta_w >= w[-1] - w[0]:
        # the window never binds
        alloc = _best_in_window(rho_s, tau_s, w, ew, 0, n - 1)
        if alloc is not None and alloc.mean > best_value + _EPS:
            best, best_value = alloc, alloc.mean
    else:
        feasible_lo = np.nonzero(tau_s.sum() * ew <= 1.0 + _EPS)[0]
        for lo in feasible_lo[::-1]:
            cap = w[lo] + delta_w
            if cap <= best_value + _EPS:
                break
            hi_max = int(np.searchsorted(w, w[lo] + 2 * delta_w + 1e-12, side="right")) - 1
            alloc = _best_in_window(rho_s, tau_s, w, ew, lo, hi_max)
            if alloc.mean < w[hi_max] - delta_w - 1e-12:
                # feasible hi form a prefix; bisect for its end
                a, b = lo, hi_max
                alloc = _best_in_window(rho_s, tau_s, w, ew, lo, lo)
                while b - a > 1:
                    mid = (a + b) // 2
                    trial = _best_in_window(rho_s, tau_s, w, ew, lo, mid)
                    if trial.mean >= w[mid] - delta_w - 1e-12:
                        a, alloc = mid, trial
                    else:
                        b = mid
            value = min(alloc.mean, cap)
            if value > best_value + _EPS:
                best, best_value = alloc, value
                target = cap if alloc.mean > cap else None

    K = np.zeros((rho_s.size, n))
    rows = np.arange(rho_s.size)
    pos = best.lo + best.steps
    K[rows, pos] += 1.0 - best.theta
    K[rows[best.theta > 0], pos[best.theta > 0] + 1] += best.theta[best.theta > 0]
    if target is not None and best.mean > target:
        # mix toward "everything at w_lo" to bring the mean down to the cap
        t = (best.mean - target) / (best.mean - w[best.lo])
        K *= 1.0 - t
        K[:, best.lo] += t
    conditional = np.zeros((rho.dim, n))
    conditional[supp] = K
    q = rho_s @ K
    q = np.where(q < 1e-300, 0.0, q)
    q /= q.sum()
    dist = WorkDistribution(w, q, float(delta_w), conditional)
    return dist.mean, dist


def work_distribution_feasible(rho: BlockDiagonalState, H: HamiltonianSpectrum, T_bath: float,
                               dist: WorkDistribution, tol: float = 1e-9) -> bool:
    """Independent check that ``rho -> tau (x) dist`` is a thermal operation.

    Solves the feasibility linear program over the full transition kernel
    ``P(s', w | s)`` with a translation-invariant battery; it does not use
    the reductions made by the optimiser.
    """
    T = _check_temperature(T_bath)
    tau = gibbs_state(H, T).populations
    supp = np.nonzero(rho.populations > SUPPORT_TOL)[0]
    used = np.nonzero(dist.probabilities > 0)[0]
    S, d, m = supp.size, H.dim, used.size
    w = dist.levels[used]
    q = dist.probabilities[used]
    nvar = S * d * m

    def var(si, sp, j):
        return (si * d + sp) * m + j

    A_eq, b_eq = [], []
    for si in range(S):
        row = np.zeros(nvar)
        row[[var(si, sp, j) for sp in range(d) for j in range(m)]] = 1.0
        A_eq.append(row)
        b_eq.append(1.0)
    for sp in range(d):
        for j in range(m):
            row = np.zeros(nvar)
            for si, s in enumerate(supp):
                row[var(si, sp, j)] = rho.populations[s]
            A_eq.append(row)
            b_eq.append(tau[sp] * q[j])
    A_ub, b_ub = [], []
    for sp in range(d):
        row = np.zeros(nvar)
        for si, s in enumerate(supp):
            for j in range(m):
                row[var(si, sp, j)] = tau[s] * math.exp(w[j] / T)
        A_ub.append(row)
        b_ub.append(tau[sp] * (1.0 + tol))
    res = linprog(np.zeros(nvar), A_ub=np.array(A_ub), b_ub=np.array(b_ub),
                  A_eq=np.array(A_eq), b_eq=np.array(b_eq), bounds=(0, None), method="highs")
    return res.status == 0


@dataclass(frozen=True)
class FluctuationReport:
    deterministic: CycleReport
    delta_w: float
    w_bc_avg: float
    w_da_avg: float
    w_total: float
    q_hot: float
    q_cold: float
    eta: float
    eta_carnot: float
    dist_bc: WorkDistribution
    dist_da: WorkDistribution

    def row(self) -> dict:
        return {"delta_w": self.delta_w, "w_bc_avg": self.w_bc_avg, "w_da_avg": self.w_da_avg,
                "eta": self.eta, "eta_carnot": self.eta_carnot}


def fluctuation_cycle(w1: float, w2: float, T_hot: float, T_cold: float, delta_w: float,
                      grid: BatteryGrid | None = None):
    """Qubit engine that also draws fluctuating work while thermalizing.

    The deterministic strokes are untouched; B->C and D->A each extract the
    best average work compatible with ``delta_w``.  Returns ``(eta, report)``.
    """
    base = qubit_engine(w1, w2, T_hot, T_cold)
    H1, H2 = HamiltonianSpectrum.qubit(w1), HamiltonianSpectrum.qubit(w2)
    w_bc, dist_bc = max_avg_work_bounded(gibbs_state(H2, T_hot), H2, T_cold, delta_w, grid)
    w_da, dist_da = max_avg_work_bounded(gibbs_state(H1, T_cold), H1, T_hot, delta_w, grid)
    ab, bc, cd, da = base.strokes
    q_bc = bc.delta_e + w_bc
    q_da = da.delta_e + w_da
    q_hot = ab.heat_absorbed + q_da
    q_cold = -(q_bc + cd.heat_absorbed)
    w_total = base.w_cycle + w_bc + w_da
    eta = w_total / q_hot
    report = FluctuationReport(base, float(delta_w), w_bc, w_da, w_total, q_hot, q_cold,
                               eta, base.eta_carnot, dist_bc, dist_da)
    return eta, report
