"""Builders for the binary Von Neumann chain and the Coleman-Hepp spin chain.

Conventions
-----------
Every two-level factor uses index 0 for the first state (``|s1>``, ``|O1>``,
``|u>``) and index 1 for the second. The observer's ready state ``|O0>``
shares index 0 with ``|O1>``, so the Von Neumann measurement is a
controlled flip of O conditioned on ``|s2>``.

For the Coleman-Hepp chain the spin under test is ``S0`` and the atoms are
``A1 .. AN``. The sign of ``<B>`` on the final state is ``(-1)**N`` times
``2 Re(a1* a2)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .core import (
    IDENTITY_2,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DensityMatrix,
    Layout,
    Operator,
    StateVector,
    density_from_pure,
    lift_op,
    mix,
)
from .doublet import ProjectorSet

AMPLITUDE_TOL = 1e-10
MAX_CHAIN_STATE = 20
MAX_CHAIN_DENSE = 8

S, D, O, O_PRIME = "S", "D", "O", "O'"
SPIN = "S0"
CHAIN_OBSERVER = "D"


def _check_amplitudes(a1: complex, a2: complex, tol: float = AMPLITUDE_TOL) -> None:
    total = abs(a1) ** 2 + abs(a2) ** 2
    if abs(total - 1.0) > tol:
        raise ValueError(f"|a1|^2 + |a2|^2 = {total!r}, expected 1")


@dataclass(frozen=True)
class VonNeumannSpec:
    a1: complex
    a2: complex
    include_detector: bool = False

    def __post_init__(self):
        _check_amplitudes(self.a1, self.a2)

    @property
    def layout(self) -> Layout:
        if self.include_detector:
            return Layout.of((S, 2), (D, 2), (O, 2))
        return Layout.of((S, 2), (O, 2))

    @property
    def weights(self) -> tuple[float, float]:
        return abs(self.a1) ** 2, abs(self.a2) ** 2


@dataclass(frozen=True)
class ColemanHeppSpec:
    a1: complex
    a2: complex
    n_atoms: int

    def __post_init__(self):
        _check_amplitudes(self.a1, self.a2)
        if not 1 <= self.n_atoms <= MAX_CHAIN_STATE:
            raise ValueError(f"n_atoms must be in [1, {MAX_CHAIN_STATE}]")

    @property
    def layout(self) -> Layout:
        return chain_layout(self.n_atoms)

    @property
    def weights(self) -> tuple[float, float]:
        return abs(self.a1) ** 2, abs(self.a2) ** 2


def _ket(layout: Layout, index: int) -> np.ndarray:
    v = np.zeros(layout.dim, dtype=complex)
    v[index] = 1.0
    return v


def _flat(layout: Layout, **indices: int) -> int:
    return int(np.ravel_multi_index([indices.get(label, 0) for label in layout.labels], layout.dims))


def _kron_all(mats) -> np.ndarray:
    return reduce(np.kron, mats, np.eye(1, dtype=complex))


# -- Von Neumann chain -------------------------------------------------------


def vn_initial(spec: VonNeumannSpec) -> StateVector:
    """``(a1|s1> + a2|s2>) |O0>`` (with ``|D0>`` when the detector is included)."""
    layout = spec.layout
    amps = spec.a1 * _ket(layout, _flat(layout, S=0)) + spec.a2 * _ket(layout, _flat(layout, S=1))
    return StateVector(layout, amps)


def _controlled_flip(layout: Layout, control: str, target: str) -> np.ndarray:
    p1 = np.diag([0.0, 1.0]).astype(complex)
    p0 = IDENTITY_2 - p1
    return (
        lift_op(p0, control, layout).entries
        + lift_op(p1, control, layout).entries @ lift_op(SIGMA_X, target, layout).entries
    )


def vn_measurement_unitary(spec: VonNeumannSpec) -> Operator:
    """Maps ``|s_i>|O0> -> |s_i>|O_i>`` (through ``|D_i>`` when present)."""
    layout = spec.layout
    if spec.include_detector:
        u = _controlled_flip(layout, D, O) @ _controlled_flip(layout, S, D)
    else:
        u = _controlled_flip(layout, S, O)
    return Operator(layout, u)


def vn_final(spec: VonNeumannSpec) -> StateVector:
    """``a1|s1>|O1> + a2|s2>|O2>`` written out directly."""
    layout = spec.layout
    second = {S: 1, O: 1, D: 1} if spec.include_detector else {S: 1, O: 1}
    amps = spec.a1 * _ket(layout, _flat(layout)) + spec.a2 * _ket(layout, _flat(layout, **second))
    return StateVector(layout, amps)


def vn_initial_mixed(spec: VonNeumannSpec) -> DensityMatrix:
    """Incoming S mixed with weights ``|a_i|^2``, observer ready."""
    layout = spec.layout
    w1, w2 = spec.weights
    comps = [
        (w, density_from_pure(StateVector(layout, _ket(layout, _flat(layout, S=i)))))
        for i, w in enumerate((w1, w2))
    ]
    return mix(_renormalized(comps))


def vn_mixed(spec: VonNeumannSpec) -> DensityMatrix:
    layout = spec.layout
    w1, w2 = spec.weights
    branches = [{}, {S: 1, O: 1, D: 1} if spec.include_detector else {S: 1, O: 1}]
    comps = [
        (w, density_from_pure(StateVector(layout, _ket(layout, _flat(layout, **b)))))
        for w, b in zip((w1, w2), branches)
    ]
    return mix(_renormalized(comps))


def _renormalized(comps):
    # weights come from amplitudes normalized to 1e-10; mix() insists on 1e-12
    total = sum(w for w, _ in comps)
    return [(w / total, rho) for w, rho in comps]


def vn_interference_operator(spec: VonNeumannSpec) -> Operator:
    """``|O1><O2| |s1><s2| + h.c.``"""
    layout = spec.layout
    raise_op = np.array([[0, 1], [0, 0]], dtype=complex)
    mats = {S: raise_op, O: raise_op}
    if spec.include_detector:
        mats[D] = raise_op
    half = _kron_all([mats.get(label, IDENTITY_2) for label in layout.labels])
    return Operator(layout, half + half.conj().T, hermitian=True)


def vn_observer(spec: VonNeumannSpec, observer: str = O) -> ProjectorSet:
    """Basis projectors of O; reading +1 for ``|O1>`` and -1 for ``|O2>``."""
    return ProjectorSet.basis(observer, 2, values=(1.0, -1.0))


def vn_observable_q(spec: VonNeumannSpec) -> Operator:
    """The measured S observable, ``sigma_z`` on S."""
    return lift_op(Operator(Layout.of((S, 2)), SIGMA_Z, True), S, spec.layout)


# -- Coleman-Hepp chain ------------------------------------------------------


def atom(i: int) -> str:
    return f"A{i}"


def chain_layout(n_atoms: int) -> Layout:
    return Layout(((SPIN, 2),) + tuple((atom(i), 2) for i in range(1, n_atoms + 1)))


def _dense_cap(n_atoms: int) -> None:
    if not 1 <= n_atoms <= MAX_CHAIN_DENSE:
        raise ValueError(f"dense chain operators need 1 <= n_atoms <= {MAX_CHAIN_DENSE}")


def chain_up(n_atoms: int) -> np.ndarray:
    """Polarized chain ``prod |u_i>`` as a flat vector."""
    v = np.zeros(2**n_atoms, dtype=complex)
    v[0] = 1.0
    return v


def chain_down(n_atoms: int) -> np.ndarray:
    v = np.zeros(2**n_atoms, dtype=complex)
    v[-1] = 1.0
    return v


def ch_initial(spec: ColemanHeppSpec) -> StateVector:
    """``(a1|u0> + a2|d0>) prod |u_i>``."""
    spin = np.array([spec.a1, spec.a2], dtype=complex)
    return StateVector(spec.layout, np.kron(spin, chain_up(spec.n_atoms)))


def ch_final(spec: ColemanHeppSpec) -> StateVector:
    """Closed-form endpoint ``a1|u0> psi+ + a2 (-i)^N |d0> psi-``."""
    n = spec.n_atoms
    up = np.kron([1.0, 0.0], chain_up(n))
    down = np.kron([0.0, 1.0], chain_down(n))
    return StateVector(spec.layout, spec.a1 * up + spec.a2 * (-1j) ** n * down)


def ch_initial_mixed(spec: ColemanHeppSpec) -> DensityMatrix:
    layout = spec.layout
    up = StateVector(layout, np.kron([1.0, 0.0], chain_up(spec.n_atoms)))
    down = StateVector(layout, np.kron([0.0, 1.0], chain_up(spec.n_atoms)))
    w1, w2 = spec.weights
    return mix(_renormalized([(w1, density_from_pure(up)), (w2, density_from_pure(down))]))


def ch_mixed(spec: ColemanHeppSpec) -> DensityMatrix:
    """Mixture of the two completed branches with weights ``|a_i|^2``."""
    layout = spec.layout
    up = StateVector(layout, np.kron([1.0, 0.0], chain_up(spec.n_atoms)))
    down = StateVector(layout, np.kron([0.0, 1.0], chain_down(spec.n_atoms)))
    w1, w2 = spec.weights
    return mix(_renormalized([(w1, density_from_pure(up)), (w2, density_from_pure(down))]))


def ch_passage_gate(n_atoms: int, i: int) -> Operator:
    """Controlled ``-i sigma_x`` on atom ``i`` when S0 is down."""
    _dense_cap(n_atoms)
    layout = chain_layout(n_atoms)
    up = np.diag([1.0, 0.0]).astype(complex)
    down = np.diag([0.0, 1.0]).astype(complex)
    gate = lift_op(up, SPIN, layout).entries + lift_op(down, SPIN, layout).entries @ lift_op(
        -1j * SIGMA_X, atom(i), layout
    ).entries
    return Operator(layout, gate)


def ch_passage_unitary(n_atoms: int, order=None) -> Operator:
    """Ordered product of the controlled gates; ascending atom index by default."""
    _dense_cap(n_atoms)
    order = list(order) if order is not None else list(range(1, n_atoms + 1))
    u = np.eye(2 ** (n_atoms + 1), dtype=complex)
    for i in order:
        u = ch_passage_gate(n_atoms, i).entries @ u
    return Operator(chain_layout(n_atoms), u)


def ch_undo_unitary(n_atoms: int) -> Operator:
    return ch_passage_unitary(n_atoms).dagger


def ch_polarization(n_atoms: int) -> Operator:
    """``mu_z = (1/N) sum_i sigma^i_z`` on the chain, identity on S0."""
    _dense_cap(n_atoms)
    layout = chain_layout(n_atoms)
    total = sum(lift_op(SIGMA_Z, atom(i), layout).entries for i in range(1, n_atoms + 1))
    return Operator(layout, total / n_atoms, hermitian=True)


def ch_spin_z(n_atoms: int) -> Operator:
    _dense_cap(n_atoms)
    return lift_op(Operator(Layout.of((SPIN, 2)), SIGMA_Z, True), SPIN, chain_layout(n_atoms))


def ch_interference_operator(n_atoms: int) -> Operator:
    """``B = sigma^0_x prod_i sigma^i_y``."""
    _dense_cap(n_atoms)
    return Operator(chain_layout(n_atoms), _kron_all([SIGMA_X] + [SIGMA_Y] * n_atoms), hermitian=True)


def ch_commutator_reference(n_atoms: int, coefficient: complex | None = None) -> Operator:
    """``c sigma^0_x sum_i sigma^i_x prod_{j != i} sigma^j_y`` with ``c = i/N`` by default.

    With the Pauli conventions used here the numeric ``[mu_z, B]`` carries
    ``c = -2i/N``; pass that as ``coefficient`` to reproduce it.
    """
    _dense_cap(n_atoms)
    c = 1j / n_atoms if coefficient is None else coefficient
    total = np.zeros((2 ** (n_atoms + 1),) * 2, dtype=complex)
    for i in range(1, n_atoms + 1):
        total += _kron_all([SIGMA_X] + [SIGMA_X if j == i else SIGMA_Y for j in range(1, n_atoms + 1)])
    return Operator(chain_layout(n_atoms), c * total)


def ch_pointer(n_atoms: int) -> ProjectorSet:
    """Eigenspace projectors of ``mu_z`` over the atoms, from +1 (all up) to -1.

    Outcome ``k`` collects chain states with ``k`` flipped atoms; its reading
    is ``1 - 2k/N``.
    """
    _dense_cap(n_atoms)
    flips = np.array([bin(b).count("1") for b in range(2**n_atoms)])
    projs = [np.diag((flips == k).astype(complex)) for k in range(n_atoms + 1)]
    values = [1.0 - 2.0 * k / n_atoms for k in range(n_atoms + 1)]
    return ProjectorSet(CHAIN_OBSERVER, tuple(atom(i) for i in range(1, n_atoms + 1)), tuple(projs), tuple(values))


def born_weights(spec) -> np.ndarray:
    """Expected outcome distribution of the model's observer after measurement."""
    w1, w2 = spec.weights
    if isinstance(spec, ColemanHeppSpec):
        out = np.zeros(spec.n_atoms + 1)
        out[0], out[-1] = w1, w2
        return out
    return np.array([w1, w2])
