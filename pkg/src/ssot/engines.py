"""
Four-stroke cycles with deterministic work extraction, and their refrigerators.

Sign conventions: ``work_extracted`` is positive when work goes to the
battery; ``heat_absorbed`` is positive when the system takes heat from the
bath it touches.  A stroke with work cost ``-work_extracted`` and internal
energy change ``delta_e`` exchanges heat ``delta_e + work_extracted``.

The cycle visits A -> B -> C -> D -> A.  A->B (hot bath) and C->D (cold bath)
are reversible work strokes; B->C (cold) and D->A (hot) are thermalizations
at zero work cost.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .errors import DegenerateCycleError, DomainError, ShapeError
from .thermo import (
    BlockDiagonalState,
    HamiltonianSpectrum,
    _check_temperature,
    gibbs_state,
    state_functionals,
    thermal_like_state,
)

FIRST_LAW_TOL = 1e-10


@dataclass(frozen=True)
class StrokeRecord:
    label: str
    temperature: float
    work_extracted: float
    delta_e: float
    heat_absorbed: float

    @classmethod
    def build(cls, label, temperature, work_extracted, delta_e):
        return cls(label, float(temperature), float(work_extracted), float(delta_e),
                   float(delta_e + work_extracted))

    def check(self, tol: float = FIRST_LAW_TOL):
        scale = max(1.0, abs(self.delta_e), abs(self.work_extracted))
        if abs(self.delta_e - (self.heat_absorbed - self.work_extracted)) > tol * scale:
            raise AssertionError(f"stroke {self.label}: heat bookkeeping does not close")


@dataclass(frozen=True)
class CycleReport:
    strokes: tuple[StrokeRecord, ...]
    w_cycle: float
    q_hot: float
    q_cold: float
    eta: float
    eta_carnot: float
    q_irr_bc: float
    q_irr_da: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strokes"] = [asdict(s) for s in self.strokes]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "CycleReport":
        strokes = tuple(StrokeRecord(**s) for s in d["strokes"])
        fields = {k: float(d[k]) for k in
                  ("w_cycle", "q_hot", "q_cold", "eta", "eta_carnot", "q_irr_bc", "q_irr_da")}
        return cls(strokes=strokes, **fields)

    def check_invariants(self, tol: float = FIRST_LAW_TOL) -> None:
        """Raise AssertionError if the report is internally inconsistent."""
        if len(self.strokes) != 4:
            raise AssertionError("a cycle has four strokes")
        for s in self.strokes:
            s.check(tol)
        scale = max(1.0, abs(self.q_hot), abs(self.q_cold))
        if abs(self.w_cycle - (self.q_hot - self.q_cold)) > tol * scale:
            raise AssertionError("first law does not close")
        if abs(self.w_cycle - sum(s.work_extracted for s in self.strokes)) > tol * scale:
            raise AssertionError("cycle work differs from the sum of stroke works")
        if self.eta < 0 or self.eta > self.eta_carnot + 1e-12:
            raise AssertionError(f"eta={self.eta} outside [0, {self.eta_carnot}]")


def carnot_efficiency(T_hot: float, T_cold: float) -> float:
    T_hot, T_cold = _check_temperature(T_hot), _check_temperature(T_cold)
    if T_cold > T_hot:
        raise DomainError(f"T_cold={T_cold} exceeds T_hot={T_hot}")
    return 1.0 - T_cold / T_hot


def _check_engine_temperatures(T_hot, T_cold):
    T_hot, T_cold = _check_temperature(T_hot), _check_temperature(T_cold)
    if not T_hot > T_cold:
        raise DomainError(f"need T_hot > T_cold, got T_hot={T_hot}, T_cold={T_cold}")
    return T_hot, T_cold


def assemble_cycle(energies: Mapping[str, float], free_energies: Mapping[str, float],
                   T_hot: float, T_cold: float) -> CycleReport:
    """Build a report from the four corner states.

    ``energies`` holds mean energies of A..D.  ``free_energies`` holds the
    free energies used by the work strokes: A and B at ``T_hot``, C and D at
    ``T_cold``.
    """
    E, F = energies, free_energies
    strokes = (
        StrokeRecord.build("AB", T_hot, F["A"] - F["B"], E["B"] - E["A"]),
        StrokeRecord.build("BC", T_cold, 0.0, E["C"] - E["B"]),
        StrokeRecord.build("CD", T_cold, F["C"] - F["D"], E["D"] - E["C"]),
        StrokeRecord.build("DA", T_hot, 0.0, E["A"] - E["D"]),
    )
    w_cycle = F["A"] - F["B"] - F["D"] + F["C"]
    q_hot = strokes[0].heat_absorbed + strokes[3].heat_absorbed
    q_cold = -(strokes[1].heat_absorbed + strokes[2].heat_absorbed)
    # a cycle that delivers no net work is not an engine; its efficiency is 0.
    # work below the round-off of the corner values is indistinguishable from none
    noise = 1e-12 * max(abs(x) for x in (*E.values(), *F.values()))
    eta = w_cycle / q_hot if w_cycle > noise and q_hot > noise else 0.0
    return CycleReport(
        strokes=strokes,
        w_cycle=float(w_cycle),
        q_hot=float(q_hot),
        q_cold=float(q_cold),
        eta=float(eta),
        eta_carnot=carnot_efficiency(T_hot, T_cold),
        q_irr_bc=float(E["B"] - E["C"]),
        q_irr_da=float(E["A"] - E["D"]),
    )


def _corners(states: Mapping[str, tuple[BlockDiagonalState, HamiltonianSpectrum]],
             T_hot, T_cold):
    temps = {"A": T_hot, "B": T_hot, "C": T_cold, "D": T_cold}
    E, F = {}, {}
    for label, (rho, H) in states.items():
        f = state_functionals(rho, H, temps[label])
        E[label], F[label] = f.energy, f.free_energy
    return E, F


def equilibrium_cycle(H1: HamiltonianSpectrum, H2: HamiltonianSpectrum,
                      T_hot: float, T_cold: float) -> CycleReport:
    """Cycle through the thermal states (H1,Th) -> (H2,Th) -> (H2,Tc) -> (H1,Tc)."""
    T_hot, T_cold = _check_engine_temperatures(T_hot, T_cold)
    if H1.dim != H2.dim:
        raise ShapeError(f"H1 has dimension {H1.dim} but H2 has {H2.dim}")
    states = {
        "A": (gibbs_state(H1, T_hot), H1),
        "B": (gibbs_state(H2, T_hot), H2),
        "C": (gibbs_state(H2, T_cold), H2),
        "D": (gibbs_state(H1, T_cold), H1),
    }
    return assemble_cycle(*_corners(states, T_hot, T_cold), T_hot, T_cold)


def qubit_engine(w1: float, w2: float, T_hot: float, T_cold: float) -> CycleReport:
    return equilibrium_cycle(HamiltonianSpectrum.qubit(w1), HamiltonianSpectrum.qubit(w2),
                             T_hot, T_cold)


def support_mask(H: HamiltonianSpectrum, support) -> np.ndarray:
    """Accept either a boolean mask over basis states or a set of level energies."""
    if isinstance(support, np.ndarray) and support.dtype == bool:
        if support.shape != (H.dim,):
            raise ShapeError(f"support mask has shape {support.shape}, expected ({H.dim},)")
        if not support.any():
            raise DomainError("support is empty")
        return support
    return H.level_mask(support)


def nonequilibrium_states(H: HamiltonianSpectrum, U, V, T_hot: float, T_cold: float):
    """The four corner states tau|_U(Th), tau|_V(Th), tau|_V(Tc), tau|_U(Tc)."""
    mu, mv = support_mask(H, U), support_mask(H, V)
    return {
        "A": thermal_like_state(H, mu, T_hot),
        "B": thermal_like_state(H, mv, T_hot),
        "C": thermal_like_state(H, mv, T_cold),
        "D": thermal_like_state(H, mu, T_cold),
    }


def nonequilibrium_cycle(H: HamiltonianSpectrum, U, V, T_hot: float, T_cold: float) -> CycleReport:
    """Fixed-Hamiltonian cycle between reversible states with supports U and V.

    ``U`` and ``V`` are sets of level energies (every degenerate state of a
    listed level is included) or boolean masks over basis states.
    """
    T_hot, T_cold = _check_engine_temperatures(T_hot, T_cold)
    mu, mv = support_mask(H, U), support_mask(H, V)
    if np.array_equal(mu, mv) and np.unique(H.basis_energies[mu]).size == 1:
        raise DegenerateCycleError(
            "U = V on a single energy level: the state never changes and the cycle is trivial"
        )
    states = nonequilibrium_states(H, mu, mv, T_hot, T_cold)
    E, F = _corners({k: (s, H) for k, s in states.items()}, T_hot, T_cold)
    return assemble_cycle(E, F, T_hot, T_cold)


@dataclass(frozen=True)
class RefrigeratorReport:
    strokes: tuple[StrokeRecord, ...]
    w_input: float
    q_cold_extracted: float
    q_hot_dumped: float
    cop: float
    cop_carnot: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strokes"] = [asdict(s) for s in self.strokes]
        return d


def assemble_refrigerator(energies, free_energies, T_hot, T_cold) -> RefrigeratorReport:
    """Reverse the engine: A->D (cold), D->C (cold), C->B (hot), B->A (hot).

    The reversible strokes run backwards against the same baths; the two
    thermalizations are done against the swapped baths.
    """
    E, F = energies, free_energies
    strokes = (
        StrokeRecord.build("AD", T_cold, 0.0, E["D"] - E["A"]),
        StrokeRecord.build("DC", T_cold, F["D"] - F["C"], E["C"] - E["D"]),
        StrokeRecord.build("CB", T_hot, 0.0, E["B"] - E["C"]),
        StrokeRecord.build("BA", T_hot, F["B"] - F["A"], E["A"] - E["B"]),
    )
    w_input = -sum(s.work_extracted for s in strokes)
    if not w_input > 1e-12:
        raise DegenerateCycleError(
            f"refrigerator needs positive work input, got {w_input!r}; COP undefined"
        )
    q_cold = strokes[0].heat_absorbed + strokes[1].heat_absorbed
    q_hot = -(strokes[2].heat_absorbed + strokes[3].heat_absorbed)
    return RefrigeratorReport(
        strokes=strokes,
        w_input=float(w_input),
        q_cold_extracted=float(q_cold),
        q_hot_dumped=float(q_hot),
        cop=float(q_cold / w_input),
        cop_carnot=T_cold / (T_hot - T_cold),
    )


def refrigerator_cycle(H1: HamiltonianSpectrum, H2: HamiltonianSpectrum,
                       T_hot: float, T_cold: float) -> RefrigeratorReport:
    T_hot, T_cold = _check_engine_temperatures(T_hot, T_cold)
    if H1.dim != H2.dim:
        raise ShapeError(f"H1 has dimension {H1.dim} but H2 has {H2.dim}")
    states = {
        "A": (gibbs_state(H1, T_hot), H1),
        "B": (gibbs_state(H2, T_hot), H2),
        "C": (gibbs_state(H2, T_cold), H2),
        "D": (gibbs_state(H1, T_cold), H1),
    }
    return assemble_refrigerator(*_corners(states, T_hot, T_cold), T_hot, T_cold)


def nonequilibrium_refrigerator(H: HamiltonianSpectrum, U, V,
                                T_hot: float, T_cold: float) -> RefrigeratorReport:
    T_hot, T_cold = _check_engine_temperatures(T_hot, T_cold)
    states = nonequilibrium_states(H, U, V, T_hot, T_cold)
    E, F = _corners({k: (s, H) for k, s in states.items()}, T_hot, T_cold)
    return assemble_refrigerator(E, F, T_hot, T_cold)


def qubit_refrigerator(w1: float, w2: float, T_hot: float, T_cold: float) -> RefrigeratorReport:
    return refrigerator_cycle(HamiltonianSpectrum.qubit(w1), HamiltonianSpectrum.qubit(w2),
                              T_hot, T_cold)
