"""Event-states: a linearly evolving dynamical state paired with per-observer
outcome registers.

The dynamical component never collapses. Each observer holds an
:class:`OutcomeRegister` whose index is drawn from the Born weights of the
observer's restricted state, and is redrawn only when a step couples distinct
branches of that observer.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import (
    ALGEBRA_TOL,
    DensityMatrix,
    Layout,
    LayoutError,
    Operator,
    State,
    StateVector,
    acts_trivially_on,
    evolve,
    lift_op,
    partial_trace,
)

PROB_CLAMP = 1e-12
PROB_SUM_TOL = 1e-9
BRANCH_TOL = 1e-10
INFINITE_INFORMATION = math.inf


@dataclass(frozen=True, eq=False)
class ProjectorSet:
    """Complete set of orthogonal projectors on an observer's factors.

    ``values`` are the readings (e.g. Q eigenvalues) attached to each outcome;
    they default to the outcome indices.
    """

    observer: str
    factors: tuple[str, ...]
    projectors: tuple[np.ndarray, ...]
    values: tuple[float, ...] = ()

    def __post_init__(self):
        factors = (self.factors,) if isinstance(self.factors, str) else tuple(self.factors)
        projs = []
        for p in self.projectors:
            p = np.array(p, dtype=complex, copy=True)
            p.setflags(write=False)
            projs.append(p)
        if not projs:
            raise ValueError("projector set is empty")
        dim = projs[0].shape[0]
        for i, p in enumerate(projs):
            if p.shape != (dim, dim):
                raise ValueError("projectors must share one square shape")
            if np.max(np.abs(p - p.conj().T)) > ALGEBRA_TOL:
                raise ValueError(f"projector {i} is not Hermitian")
            if np.max(np.abs(p @ p - p)) > ALGEBRA_TOL:
                raise ValueError(f"projector {i} is not idempotent")
        for i, j in itertools.combinations(range(len(projs)), 2):
            if np.max(np.abs(projs[i] @ projs[j])) > ALGEBRA_TOL:
                raise ValueError(f"projectors {i} and {j} are not orthogonal")
        if np.max(np.abs(sum(projs) - np.eye(dim))) > ALGEBRA_TOL:
            raise ValueError("projectors do not resolve the identity")
        values = tuple(float(v) for v in self.values) or tuple(float(i) for i in range(len(projs)))
        if len(values) != len(projs):
            raise ValueError("one value per projector is required")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "projectors", tuple(projs))
        object.__setattr__(self, "values", values)

    @classmethod
    def basis(cls, observer: str, dim: int, factor: Optional[str] = None, values=()) -> "ProjectorSet":
        """Rank-one projectors onto the computational basis of one factor."""
        eye = np.eye(dim, dtype=complex)
        return cls(observer, (factor or observer,), tuple(np.outer(e, e) for e in eye), values)

    def __len__(self) -> int:
        return len(self.projectors)

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    def lifted(self, layout: Layout) -> list[np.ndarray]:
        return [lift_op(p, self.factors, layout).entries for p in self.projectors]


@dataclass(frozen=True)
class OutcomeRegister:
    """One observer's subjective component; ``outcome is None`` means unset."""

    pset: ProjectorSet
    outcome: Optional[int] = None

    def __post_init__(self):
        if self.outcome is not None and not 0 <= self.outcome < len(self.pset):
            raise ValueError(f"outcome {self.outcome} outside [0, {len(self.pset)})")

    @property
    def observer(self) -> str:
        return self.pset.observer


@dataclass(frozen=True)
class EventState:
    dynamical: State
    registers: Mapping[str, OutcomeRegister] = field(default_factory=dict)
    stream_id: int = 0

    def __post_init__(self):
        regs = dict(self.registers)
        labels = set(self.dynamical.layout.labels)
        for name, reg in regs.items():
            if name != reg.observer:
                raise ValueError(f"register key {name!r} does not match observer {reg.observer!r}")
            missing = set(reg.pset.factors) - labels
            if missing:
                raise LayoutError(f"observer {name!r} factors {sorted(missing)} not in layout")
            if int(np.prod([self.dynamical.layout.dim_of(f) for f in reg.pset.factors])) != reg.pset.dim:
                raise LayoutError(f"projector dimension mismatch for observer {name!r}")
        object.__setattr__(self, "registers", MappingProxyType(regs))

    def outcome(self, observer: str) -> Optional[int]:
        return self.registers[observer].outcome

    def with_outcomes(self, outcomes: Mapping[str, Optional[int]]) -> "EventState":
        regs = dict(self.registers)
        for name, idx in outcomes.items():
            regs[name] = replace(regs[name], outcome=idx)
        return replace(self, registers=regs)


def _factors_for(phi: EventState, observer: str) -> tuple[str, ...]:
    if observer in phi.registers:
        return phi.registers[observer].pset.factors
    phi.dynamical.layout.index(observer)
    return (observer,)


def restricted_state(phi: EventState, observer: str) -> DensityMatrix:
    """Reduced density matrix on an observer's factors (register name or factor label)."""
    return partial_trace(phi.dynamical, _factors_for(phi, observer))


def clean_probabilities(p) -> np.ndarray:
    """Clamp round-off negativity and renormalize; reject genuine violations."""
    p = np.real_if_close(np.asarray(p, dtype=complex), tol=1e6).astype(float)
    if np.any(p < -PROB_CLAMP):
        raise ValueError(f"negative probability {p.min():g}")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"probabilities sum to {total!r}")
    return p / total


def outcome_distribution(phi: EventState, pset: ProjectorSet) -> np.ndarray:
    r_obs = partial_trace(phi.dynamical, pset.factors)
    if r_obs.layout.dim != pset.dim:
        raise LayoutError("projector set does not match the observer factor dimension")
    return clean_probabilities([np.trace(p @ r_obs.entries).real for p in pset.projectors])


def _joint_weights(state: State, psets: Sequence[ProjectorSet]) -> np.ndarray:
    factors = [f for ps in psets for f in ps.factors]
    if len(set(factors)) != len(factors) or len({ps.observer for ps in psets}) != len(psets):
        raise ValueError("joint distribution needs distinct observers on disjoint factors")
    red = partial_trace(state, factors)
    lifted = [ps.lifted(red.layout) for ps in psets]
    shape = tuple(len(ps) for ps in psets)
    out = np.empty(shape)
    for combo in itertools.product(*(range(n) for n in shape)):
        proj = lifted[0][combo[0]]
        for k, j in enumerate(combo[1:], start=1):
            proj = proj @ lifted[k][j]
        out[combo] = np.trace(red.entries @ proj).real
    return out


def joint_distribution(phi: EventState, psets: Sequence[ProjectorSet]) -> np.ndarray:
    """``P[i, j, ...] = Tr(rho P1_i P2_j ...)`` over distinct observers."""
    weights = _joint_weights(phi.dynamical, psets)
    return clean_probabilities(weights.ravel()).reshape(weights.shape)


def sample_outcome(dist, rng: np.random.Generator) -> int:
    """Inverse-CDF draw over ascending index order; consumes one uniform."""
    p = np.asarray(dist, dtype=float)
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    if idx >= len(p):
        idx = int(np.flatnonzero(p > 0)[-1])
    return idx


def branches_intersect(U: Operator, pset: ProjectorSet, phi: EventState) -> bool:
    """True if ``U`` moves amplitude of the current state between observer branches."""
    state = phi.dynamical
    if U.layout != state.layout:
        raise LayoutError("unitary and state layouts differ")
    lifted = pset.lifted(state.layout)
    support = state.amplitudes if isinstance(state, StateVector) else state.entries
    for j, pj in enumerate(lifted):
        moved = U.entries @ (pj @ support)
        for i, pi in enumerate(lifted):
            if i != j and np.max(np.abs(pi @ moved)) > BRANCH_TOL:
                return True
    return False


def redrawn_observers(phi: EventState, U: Operator) -> list[str]:
    """Registers that a step with ``U`` redraws.

    A set register is redrawn when ``U`` couples its branches on the current
    state; an unset register is drawn as soon as ``U`` touches its factors.
    """
    out = []
    for name, reg in phi.registers.items():
        if reg.outcome is None:
            if not acts_trivially_on(U, reg.pset.factors):
                out.append(name)
        elif branches_intersect(U, reg.pset, phi):
            out.append(name)
    return out


def redraw_distribution(
    state: State, registers: Mapping[str, OutcomeRegister], redraw: Sequence[str]
) -> np.ndarray:
    """Joint distribution of the redrawn registers, conditioned on the kept set ones.

    Returns an array with one axis per redrawn register (in ``redraw`` order).
    When the kept outcomes carry no weight in ``state`` the unconditioned
    marginal is used instead.
    """
    kept = [n for n, r in registers.items() if n not in redraw and r.outcome is not None]
    psets = [registers[n].pset for n in list(redraw) + kept]
    weights = _joint_weights(state, psets)
    nr = len(redraw)
    cond = weights[(slice(None),) * nr + tuple(registers[n].outcome for n in kept)]
    if cond.sum() <= PROB_CLAMP:
        cond = weights.sum(axis=tuple(range(nr, weights.ndim)))
    cond = np.clip(cond, 0.0, None)
    return cond / cond.sum()


def step_event_state(phi: EventState, U: Operator, rng: np.random.Generator) -> EventState:
    """Evolve the dynamical state by ``U`` and update the outcome registers.

    Redraws are memoryless with respect to the register's own previous index.
    All redrawn registers share a single draw from their joint distribution.
    """
    redraw = redrawn_observers(phi, U)
    state = evolve(U, phi.dynamical)
    new = replace(phi, dynamical=state)
    if not redraw:
        return new
    dist = redraw_distribution(state, phi.registers, redraw)
    flat = sample_outcome(dist.ravel(), rng)
    idx = np.unravel_index(flat, dist.shape)
    return new.with_outcomes({name: int(i) for name, i in zip(redraw, idx)})


def subjective_ms_component(phi: EventState, observer: str, s_label: str) -> Operator:
    """Projector of the observer's branch times the S state that branch holds.

    The S part is the conditional state ``Tr_rest(P_j rho P_j) / p_j``; for a
    completed measurement it is the pure component ``|s_j><s_j|``. The result
    lives on the observer factors and ``s_label`` in layout order.
    """
    reg = phi.registers[observer]
    if reg.outcome is None:
        raise ValueError(f"register {observer!r} is unset")
    layout = phi.dynamical.layout
    labels = set(reg.pset.factors) | {s_label}
    sub = layout.sub(labels)
    proj = reg.pset.lifted(layout)[reg.outcome]
    state = phi.dynamical
    if isinstance(state, StateVector):
        branch = StateVector(layout, proj @ state.amplitudes)
        weight = float(np.vdot(branch.amplitudes, branch.amplitudes).real)
        s_red = partial_trace(branch, [s_label]).entries if weight > 0 else None
    else:
        branch_rho = proj @ state.entries @ proj
        weight = float(np.trace(branch_rho).real)
        s_red = partial_trace(DensityMatrix(layout, branch_rho), [s_label]).entries if weight > 0 else None
    if weight <= PROB_CLAMP:
        raise ValueError(f"branch {reg.outcome} of {observer!r} has no weight")
    s_red = s_red / weight
    p_obs = Operator(layout.sub(reg.pset.factors), reg.pset.projectors[reg.outcome])
    p_s = Operator(layout.sub([s_label]), s_red)
    out = lift_op(p_obs, p_obs.layout.labels, sub).entries @ lift_op(p_s, (s_label,), sub).entries
    return Operator(sub, out, hermitian=True)


def selected_information(dist, values) -> float:
    """``-ln var(Q)``; infinite when the dispersion vanishes."""
    p = np.asarray(dist, dtype=float)
    q = np.asarray(values, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distribution and values differ in length")
    var = float(np.dot(p, q**2) - np.dot(p, q) ** 2)
    if var < 1e-300:
        return INFINITE_INFORMATION
    return -math.log(var)
