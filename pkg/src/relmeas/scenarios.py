"""Gedankenexperiments and ensemble statistics over event-states.

Every scenario is a :class:`Protocol`: an initial event-state and a fixed list
of unitary steps. The dynamical component is the same in every event (it
never collapses), so :func:`run_protocol` evolves it once and only the outcome
registers are drawn per event, each event from its own RNG stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import models
from .core import (
    DensityMatrix,
    Layout,
    Operator,
    State,
    StateVector,
    commutator,
    density_from_pure,
    evolve,
    expectation,
    lift_op,
)
from .doublet import (
    EventState,
    OutcomeRegister,
    ProjectorSet,
    joint_distribution,
    outcome_distribution,
    redraw_distribution,
    redrawn_observers,
    sample_outcome,
)
from .models import ColemanHeppSpec, VonNeumannSpec

SCENARIOS = ("ensemble", "undoing", "sequential", "discrimination")
MODELS = ("vn", "ch")
INITIAL_INFORMATION = 0
FIDELITY_TOL = 1e-10
MIXED_B_TOL = 1e-12
PURE_B_TOL = 1e-10
NOT_APPLICABLE = "NOT-APPLICABLE"


class NotApplicable(ValueError):
    """A statistic is undefined for the given data (e.g. constant marginals)."""


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    model: str
    a1: complex
    a2: complex
    n_atoms: int = 1
    n_events: int = 1
    seed: int = 0
    sigma: float = 4.0
    include_detector: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.n_events < 1:
            raise ValueError("n_events must be at least 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        cap = max_atoms(self.scenario)
        if self.model == "ch" and not 1 <= self.n_atoms <= cap:
            raise ValueError(f"{self.scenario} runs support 1 <= n_atoms <= {cap}")

    @property
    def spec(self) -> Union[VonNeumannSpec, ColemanHeppSpec]:
        if self.model == "vn":
            return VonNeumannSpec(self.a1, self.a2, self.include_detector)
        return ColemanHeppSpec(self.a1, self.a2, self.n_atoms)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "model": self.model,
            "a1": complex(self.a1),
            "a2": complex(self.a2),
            "n_atoms": self.n_atoms,
            "n_events": self.n_events,
            "seed": self.seed,
            "sigma": float(self.sigma),
            "include_detector": self.include_detector,
        }


def max_atoms(scenario: str) -> int:
    # the sequential layout carries one extra qubit for O'
    return models.MAX_CHAIN_DENSE - 1 if scenario == "sequential" else models.MAX_CHAIN_DENSE


@dataclass(frozen=True)
class EventRecord:
    event_index: int
    stream_id: int
    outcomes: dict
    final: dict

    def to_dict(self) -> dict:
        return {
            "event": self.event_index,
            "stream": self.stream_id,
            "outcomes": {k: [list(p) for p in v] for k, v in self.outcomes.items()},
            "final": dict(self.final),
        }

    def value_after(self, observer: str, step: int, initial: Optional[int]) -> Optional[int]:
        """Register index held after ``step`` (``initial`` before any draw)."""
        current = initial
        for s, idx in self.outcomes[observer]:
            if s > step:
                break
            current = idx
        return current


@dataclass
class SummaryStats:
    frequencies: dict = field(default_factory=dict)
    correlation: Optional[float] = None
    coincidence_rate: Optional[float] = None
    expectation_b_pure: Optional[float] = None
    expectation_b_mixed: Optional[float] = None
    pass_flags: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.pass_flags.values())

    def to_dict(self) -> dict:
        return {
            "frequencies": {k: list(map(float, v)) for k, v in self.frequencies.items()},
            "correlation": self.correlation,
            "coincidence_rate": self.coincidence_rate,
            "expectation_b_pure": self.expectation_b_pure,
            "expectation_b_mixed": self.expectation_b_mixed,
            "pass_flags": dict(self.pass_flags),
            "details": self.details,
        }


# -- statistics ---------------------------------------------------------------


def correlation_coefficient(pairs: Sequence[tuple[int, int]]) -> float:
    """Pearson coefficient of integer pairs."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise NotApplicable("need at least two pairs")
    x, y = arr[:, 0], arr[:, 1]
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise NotApplicable("constant marginal")
    x = x - x.mean()
    y = y - y.mean()
    r = float(np.dot(x, y) / math.sqrt(np.dot(x, x) * np.dot(y, y)))
    return min(1.0, max(-1.0, r))


def frequency_test(counts, expected, n: int, sigma: float) -> bool:
    """Every empirical frequency within ``sigma`` binomial standard deviations."""
    counts = np.asarray(counts, dtype=float)
    p = np.asarray(expected, dtype=float)
    if counts.shape != p.shape:
        raise ValueError("counts and expected differ in shape")
    if counts.sum() != n:
        raise ValueError(f"counts sum to {counts.sum():g}, expected {n}")
    bound = sigma * np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / n)
    return bool(np.all(np.abs(counts / n - p) <= bound))


# -- protocol engine ----------------------------------------------------------


def event_rng(seed: int, stream_id: int) -> np.random.Generator:
    """Independent generator for one event, derived from the run seed."""
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Protocol:
    initial: EventState
    steps: tuple[Operator, ...]

    def trajectory(self) -> list[State]:
        states = [self.initial.dynamical]
        for U in self.steps:
            states.append(evolve(U, states[-1]))
        return states


class _Plan:
    """Per-step redraw lists and memoized conditional distributions."""

    def __init__(self, protocol: Protocol):
        self.states = protocol.trajectory()
        self.redraw: list[list[str]] = []
        self.registers: list[dict] = []
        # status template: the set/unset pattern is the same in every event
        phi = protocol.initial
        for k, U in enumerate(protocol.steps):
            names = redrawn_observers(phi, U)
            self.redraw.append(names)
            self.registers.append(dict(phi.registers))
            filled = {n: 0 for n in names if phi.registers[n].outcome is None}
            phi = replace(phi, dynamical=self.states[k + 1]).with_outcomes(filled)
        self._memo: dict = {}

    def distribution(self, k: int, current: dict) -> np.ndarray:
        names = self.redraw[k]
        kept = tuple(
            (n, current[n]) for n in self.registers[k] if n not in names and current[n] is not None
        )
        key = (k, kept)
        if key not in self._memo:
            regs = {
                n: replace(r, outcome=current[n]) for n, r in self.registers[k].items()
            }
            self._memo[key] = redraw_distribution(self.states[k + 1], regs, names)
        return self._memo[key]


def run_protocol(
    protocol: Protocol, n_events: int, seed: int, first_event: int = 0
) -> list[EventRecord]:
    """Run ``n_events`` events; event ``e`` draws from stream ``e``.

    Equivalent to calling :func:`~relmeas.doublet.step_event_state` step by
    step for each event, with the shared dynamics computed once.
    """
    plan = _Plan(protocol)
    initial = {n: r.outcome for n, r in protocol.initial.registers.items()}
    records = []
    for e in range(first_event, first_event + n_events):
        rng = event_rng(seed, e)
        current = dict(initial)
        history = {n: [] for n in current}
        for k, names in enumerate(plan.redraw):
            if not names:
                continue
            dist = plan.distribution(k, current)
            flat = sample_outcome(dist.ravel(), rng)
            for name, idx in zip(names, np.unravel_index(flat, dist.shape)):
                current[name] = int(idx)
                history[name].append((k + 1, int(idx)))
        records.append(
            EventRecord(e, e, {n: tuple(h) for n, h in history.items()}, dict(current))
        )
    return records


def final_counts(records: Sequence[EventRecord], observer: str, n_outcomes: int) -> np.ndarray:
    values = [r.final[observer] for r in records]
    if any(v is None for v in values):
        raise ValueError(f"register {observer!r} unset at the end of some events")
    return np.bincount(np.asarray(values, dtype=int), minlength=n_outcomes)


# -- model plumbing -----------------------------------------------------------


@dataclass(frozen=True)
class _Model:
    spec: object
    initial: StateVector
    initial_mixed: DensityMatrix
    measure: Operator
    undo: Operator
    observer: ProjectorSet
    interference: Operator
    q: Operator
    spin: str


def _model(config: ScenarioConfig) -> _Model:
    spec = config.spec
    if isinstance(spec, VonNeumannSpec):
        U = models.vn_measurement_unitary(spec)
        return _Model(
            spec,
            models.vn_initial(spec),
            models.vn_initial_mixed(spec),
            U,
            U.dagger,
            models.vn_observer(spec),
            models.vn_interference_operator(spec),
            models.vn_observable_q(spec),
            models.S,
        )
    n = spec.n_atoms
    return _Model(
        spec,
        models.ch_initial(spec),
        models.ch_initial_mixed(spec),
        models.ch_passage_unitary(n),
        models.ch_undo_unitary(n),
        models.ch_pointer(n),
        models.ch_interference_operator(n),
        models.ch_spin_z(n),
        models.SPIN,
    )


def _frequencies(counts: np.ndarray) -> list[float]:
    return [float(x) for x in counts / counts.sum()]


# -- scenarios ----------------------------------------------------------------


def run_ensemble(config: ScenarioConfig) -> tuple[list[EventRecord], SummaryStats]:
    """Measure the pure input and its mixed counterpart ``n_events`` times each.

    Pure-input events are numbered ``0 .. n-1`` and mixed-input events
    ``n .. 2n-1``.
    """
    m = _model(config)
    n = config.n_events
    obs = m.observer.observer
    regs = {obs: OutcomeRegister(m.observer, INITIAL_INFORMATION)}
    pure = Protocol(EventState(m.initial, regs), (m.measure,))
    mixed = Protocol(EventState(m.initial_mixed, regs), (m.measure,))
    pure_records = run_protocol(pure, n, config.seed)
    mixed_records = run_protocol(mixed, n, config.seed, first_event=n)

    k = len(m.observer)
    born = models.born_weights(m.spec)
    predicted = outcome_distribution(EventState(pure.trajectory()[-1], regs), m.observer)
    c_pure = final_counts(pure_records, obs, k)
    c_mixed = final_counts(mixed_records, obs, k)
    f_pure, f_mixed = c_pure / n, c_mixed / n
    stats = SummaryStats(
        frequencies={f"pure:{obs}": _frequencies(c_pure), f"mixed:{obs}": _frequencies(c_mixed)},
        pass_flags={
            "born_pure": frequency_test(c_pure, born, n, config.sigma),
            "born_mixed": frequency_test(c_mixed, born, n, config.sigma),
            "pure_vs_mixed": frequency_test(c_pure, f_mixed, n, config.sigma)
            and frequency_test(c_mixed, f_pure, n, config.sigma),
        },
        details={
            "observers": [obs],
            "born_weights": list(map(float, born)),
            "restricted_state_weights": list(map(float, predicted)),
            "max_frequency_difference": float(np.max(np.abs(f_pure - f_mixed))),
            "event_ranges": {"pure": [0, n], "mixed": [n, 2 * n]},
        },
    )
    return pure_records + mixed_records, stats


def _fidelity(a: StateVector, b: State) -> float:
    if isinstance(b, StateVector):
        return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
    return float(np.real(np.vdot(a.amplitudes, b.entries @ a.amplitudes)))


def run_undoing(config: ScenarioConfig) -> tuple[list[EventRecord], SummaryStats]:
    """Measure, reverse the measurement unitarily, then measure again."""
    m = _model(config)
    n = config.n_events
    obs = m.observer.observer
    regs = {obs: OutcomeRegister(m.observer, INITIAL_INFORMATION)}
    protocol = Protocol(EventState(m.initial, regs), (m.measure, m.undo, m.measure))
    records = run_protocol(protocol, n, config.seed)

    states = protocol.trajectory()
    fidelity = _fidelity(m.initial, states[2])
    first = [r.value_after(obs, 1, INITIAL_INFORMATION) for r in records]
    reset = [r.value_after(obs, 2, INITIAL_INFORMATION) for r in records]
    second = [r.value_after(obs, 3, INITIAL_INFORMATION) for r in records]
    reset_rate = float(np.mean([v == INITIAL_INFORMATION for v in reset]))

    flags = {
        "fidelity_restored": abs(fidelity - 1.0) <= FIDELITY_TOL,
        "register_reset": reset_rate == 1.0,
    }
    details = {
        "observers": [obs],
        "fidelity_after_undo": fidelity,
        "register_reset_rate": reset_rate,
        "correlation_bound": config.sigma / math.sqrt(n),
    }
    try:
        r = correlation_coefficient(list(zip(first, second)))
        flags["uncorrelated"] = abs(r) < config.sigma / math.sqrt(n)
        details["correlation_status"] = "ok"
    except NotApplicable:
        r = None
        details["correlation_status"] = NOT_APPLICABLE
    k = len(m.observer)
    stats = SummaryStats(
        frequencies={
            f"first:{obs}": _frequencies(np.bincount(first, minlength=k)),
            f"second:{obs}": _frequencies(np.bincount(second, minlength=k)),
        },
        correlation=r,
        pass_flags=flags,
        details=details,
    )
    return records, stats


def sequential_protocol(config: ScenarioConfig) -> tuple[Protocol, ProjectorSet, ProjectorSet]:
    """O measures at step 1; a second observer O' measures S at step 2."""
    m = _model(config)
    base = m.initial.layout
    layout = base.concat(Layout.of((models.O_PRIME, 2)))
    initial = StateVector(layout, np.kron(m.initial.amplitudes, [1.0, 0.0]))
    step1 = lift_op(m.measure, base.labels, layout)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    flip = np.kron(np.eye(2) - p1, np.eye(2)) + np.kron(p1, [[0, 1], [1, 0]])
    step2 = lift_op(flip, (m.spin, models.O_PRIME), layout)
    second = ProjectorSet.basis(models.O_PRIME, 2, values=(1.0, -1.0))
    regs = {
        m.observer.observer: OutcomeRegister(m.observer, INITIAL_INFORMATION),
        models.O_PRIME: OutcomeRegister(second),
    }
    return Protocol(EventState(initial, regs), (step1, step2)), m.observer, second


def run_sequential(config: ScenarioConfig) -> tuple[list[EventRecord], SummaryStats]:
    protocol, first, second = sequential_protocol(config)
    n = config.n_events
    o, o2 = first.observer, second.observer
    records = run_protocol(protocol, n, config.seed)

    final_phi = replace(protocol.initial, dynamical=protocol.trajectory()[-1])
    predicted = joint_distribution(final_phi, [first, second])
    joint = np.zeros_like(predicted)
    coincide = 0
    unset_between = 0
    for r in records:
        i, j = r.final[o], r.final[o2]
        joint[i, j] += 1
        coincide += first.values[i] == second.values[j]
        unset_between += r.value_after(o2, 1, None) is None
    coincidence = coincide / n
    stats = SummaryStats(
        frequencies={
            o: _frequencies(joint.sum(axis=1)),
            o2: _frequencies(joint.sum(axis=0)),
        },
        coincidence_rate=coincidence,
        pass_flags={
            "coincidence_exact": coincide == n,
            "joint_matches": frequency_test(joint.ravel(), predicted.ravel(), n, config.sigma),
            "second_unset_until_step2": unset_between == n,
        },
        details={
            "observers": [o, o2],
            "joint_frequencies": (joint / n).tolist(),
            "joint_predicted": predicted.tolist(),
        },
    )
    return records, stats


def run_discrimination(config: ScenarioConfig) -> SummaryStats:
    """``<B>`` on the pure final state and on its mixed counterpart."""
    m = _model(config)
    spec = m.spec
    pure = evolve(m.measure, m.initial)
    mixed = evolve(m.measure, m.initial_mixed)
    b_pure = expectation(m.interference, pure).real
    b_mixed = expectation(m.interference, mixed).real
    target = abs(2.0 * (np.conj(spec.a1) * spec.a2).real)
    excluded = target < PURE_B_TOL
    qb = commutator(m.q, m.interference).entries
    return SummaryStats(
        expectation_b_pure=float(b_pure),
        expectation_b_mixed=float(b_mixed),
        pass_flags={
            "mixed_zero": abs(b_mixed) < MIXED_B_TOL,
            "pure_magnitude": bool(abs(abs(b_pure) - target) <= PURE_B_TOL),
        },
        details={
            "excluded_configuration": bool(excluded),
            "expected_magnitude": float(target),
            "sign": 0 if excluded else int(np.sign(b_pure)),
            "commutator_q_b_max": float(np.max(np.abs(qb))),
            "purity_pure": density_from_pure(pure).purity,
            "purity_mixed": mixed.purity,
        },
    )


def run(config: ScenarioConfig) -> tuple[list[EventRecord], SummaryStats]:
    """Dispatch on ``config.scenario``; discrimination yields no events."""
    if config.scenario == "ensemble":
        return run_ensemble(config)
    if config.scenario == "undoing":
        return run_undoing(config)
    if config.scenario == "sequential":
        return run_sequential(config)
    return [], run_discrimination(config)
