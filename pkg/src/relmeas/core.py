"""Dense complex linear algebra over labeled tensor-product spaces.

Every value here is immutable: arrays are copied on construction and marked
read-only, so states and operators can be shared freely between threads.
Factor ordering is fixed when a :class:`Layout` is built and every lift,
trace and product keeps that order explicit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np

ALGEBRA_TOL = 1e-10
NORM_TOL = 1e-8
UNITARY_TOL = 1e-10
MAX_STATE_DIM = 2**20
MAX_OPERATOR_DIM = 2**9


class LayoutError(ValueError):
    """Raised for unknown, duplicate or mismatched subsystem labels."""


def _frozen(arr, dtype=complex) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite entries")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Layout:
    """Ordered ``(label, dim)`` factors of a tensor-product Hilbert space."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(label), int(dim)) for label, dim in self.factors)
        labels = [label for label, _ in factors]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate subsystem labels in {labels}")
        if any(dim < 1 for _, dim in factors):
            raise LayoutError("factor dimensions must be positive")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, *factors: tuple[str, int]) -> "Layout":
        return cls(tuple(factors))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.factors else 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown subsystem label {label!r}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def sub(self, labels: Iterable[str]) -> "Layout":
        """Sub-layout of ``labels``, kept in this layout's order."""
        wanted = set(labels)
        for label in wanted:
            self.index(label)
        return Layout(tuple(f for f in self.factors if f[0] in wanted))

    def concat(self, other: "Layout") -> "Layout":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise LayoutError(f"duplicate subsystem labels {sorted(clash)}")
        return Layout(self.factors + other.factors)


@dataclass(frozen=True, eq=False)
class StateVector:
    layout: Layout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes).reshape(-1)
        if amps.size != self.layout.dim:
            raise LayoutError(f"{amps.size} amplitudes for layout of dim {self.layout.dim}")
        if amps.size > MAX_STATE_DIM:
            raise ValueError(f"state dimension {amps.size} exceeds cap {MAX_STATE_DIM}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        norm = self.norm
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.layout, self.amplitudes / norm)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    layout: Layout
    entries: np.ndarray

    def __post_init__(self):
        rho = _frozen(self.entries)
        d = self.layout.dim
        if rho.shape != (d, d):
            raise LayoutError(f"density matrix of shape {rho.shape} for layout of dim {d}")
        if d > MAX_OPERATOR_DIM:
            raise ValueError(f"density dimension {d} exceeds cap {MAX_OPERATOR_DIM}")
        object.__setattr__(self, "entries", rho)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))

    def check(self, tol: float = ALGEBRA_TOL, eig_tol: float = NORM_TOL) -> None:
        """Raise ``ValueError`` unless Hermitian, unit trace and positive."""
        rho = self.entries
        if np.max(np.abs(rho - rho.conj().T), initial=0.0) > tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(self.trace - 1.0) > tol:
            raise ValueError(f"density matrix trace {self.trace} != 1")
        if np.linalg.eigvalsh(rho).min() < -eig_tol:
            raise ValueError("density matrix has negative eigenvalues")


@dataclass(frozen=True, eq=False)
class Operator:
    layout: Layout
    entries: np.ndarray
    hermitian: bool = field(default=False)

    def __post_init__(self):
        mat = _frozen(self.entries)
        d = self.layout.dim
        if mat.shape != (d, d):
            raise LayoutError(f"operator of shape {mat.shape} for layout of dim {d}")
        if d > MAX_OPERATOR_DIM:
            raise ValueError(f"operator dimension {d} exceeds cap {MAX_OPERATOR_DIM}")
        object.__setattr__(self, "entries", mat)

    @property
    def dagger(self) -> "Operator":
        return Operator(self.layout, self.entries.conj().T, self.hermitian)

    def __matmul__(self, other: "Operator") -> "Operator":
        _same_layout(self.layout, other.layout)
        return Operator(self.layout, self.entries @ other.entries)

    def is_unitary(self, tol: float = UNITARY_TOL) -> bool:
        eye = np.eye(self.layout.dim)
        return bool(np.max(np.abs(self.entries.conj().T @ self.entries - eye)) <= tol)


State = Union[StateVector, DensityMatrix]

# Single-qubit basis: index 0 is |u> (spin up), index 1 is |d>.
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)


def _same_layout(a: Layout, b: Layout) -> None:
    if a != b:
        raise LayoutError(f"layout mismatch: {a.labels} vs {b.labels}")


def basis_state(layout: Layout, indices: dict[str, int] | Sequence[int]) -> StateVector:
    """Computational basis product state; ``indices`` per factor (missing -> 0)."""
    if isinstance(indices, dict):
        for label in indices:
            layout.index(label)
        idx = [indices.get(label, 0) for label in layout.labels]
    else:
        idx = list(indices)
    if len(idx) != len(layout.factors):
        raise LayoutError("one basis index per factor is required")
    amps = np.zeros(layout.dim, dtype=complex)
    amps[np.ravel_multi_index(idx, layout.dims)] = 1.0
    return StateVector(layout, amps)


def operator(label: str, matrix, hermitian: bool = False) -> Operator:
    """Single-factor operator on a factor named ``label``."""
    matrix = np.asarray(matrix, dtype=complex)
    return Operator(Layout.of((label, matrix.shape[0])), matrix, hermitian)


def tensor_product_state(a: StateVector, b: StateVector) -> StateVector:
    return StateVector(a.layout.concat(b.layout), np.kron(a.amplitudes, b.amplitudes))


def tensor_product_op(a: Operator, b: Operator) -> Operator:
    return Operator(
        a.layout.concat(b.layout), np.kron(a.entries, b.entries), a.hermitian and b.hermitian
    )


def _permute_operator(mat: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    n = len(dims)
    d = int(np.prod(dims, dtype=np.int64))
    tensor = mat.reshape(tuple(dims) * 2)
    tensor = tensor.transpose(tuple(perm) + tuple(p + n for p in perm))
    return tensor.reshape(d, d)


def lift_op(op: Operator | np.ndarray, target: str | Sequence[str], layout: Layout) -> Operator:
    """Embed ``op`` acting on ``target`` factor(s) into ``layout``.

    ``target`` may name several factors; the operator's own ordering of them is
    given by ``target`` when a bare matrix is passed, otherwise by ``op.layout``.
    """
    if isinstance(op, Operator):
        targets = op.layout.labels
        if isinstance(target, str):
            if op.layout.labels != (target,):
                # relabel a one-factor operator onto the requested factor
                if len(op.layout.factors) != 1:
                    raise LayoutError("multi-factor operator needs matching target labels")
                targets = (target,)
        elif tuple(target) != op.layout.labels:
            raise LayoutError(f"target {tuple(target)} does not match operator layout")
        mat, hermitian = op.entries, op.hermitian
    else:
        targets = (target,) if isinstance(target, str) else tuple(target)
        mat, hermitian = np.asarray(op, dtype=complex), False

    target_dims = [layout.dim_of(label) for label in targets]
    dt = int(np.prod(target_dims, dtype=np.int64))
    if mat.shape != (dt, dt):
        raise LayoutError(f"operator of shape {mat.shape} does not fit factors {targets}")
    rest = [label for label in layout.labels if label not in targets]
    rest_dim = int(np.prod([layout.dim_of(label) for label in rest], dtype=np.int64))
    full = np.kron(mat, np.eye(rest_dim, dtype=complex))
    # axes of `full` are ordered targets + rest; bring them into layout order
    order = list(targets) + rest
    dims = [layout.dim_of(label) for label in order]
    perm = [order.index(label) for label in layout.labels]
    return Operator(layout, _permute_operator(full, dims, perm), hermitian)


def apply_operator(op: Operator, s: StateVector) -> StateVector:
    _same_layout(op.layout, s.layout)
    return StateVector(s.layout, op.entries @ s.amplitudes)


def evolve_density(U: Operator, rho: DensityMatrix) -> DensityMatrix:
    """Unitary conjugation ``U rho U^dagger``."""
    _same_layout(U.layout, rho.layout)
    if not U.is_unitary():
        raise ValueError("evolution operator is not unitary")
    out = U.entries @ rho.entries @ U.entries.conj().T
    return DensityMatrix(rho.layout, 0.5 * (out + out.conj().T))


def evolve(U: Operator, state: State) -> State:
    """Evolve a pure or mixed state by a unitary."""
    if isinstance(state, StateVector):
        if not U.is_unitary():
            raise ValueError("evolution operator is not unitary")
        return apply_operator(U, state)
    return evolve_density(U, state)


def _reduced_matrix(mat: np.ndarray, layout: Layout, keep: Sequence[str], pure: bool) -> np.ndarray:
    keep_idx = [layout.index(label) for label in layout.labels if label in keep]
    drop_idx = [i for i in range(len(layout.factors)) if i not in keep_idx]
    dims = layout.dims
    dk = int(np.prod([dims[i] for i in keep_idx], dtype=np.int64))
    dr = int(np.prod([dims[i] for i in drop_idx], dtype=np.int64))
    if pure:
        psi = mat.reshape(dims).transpose(keep_idx + drop_idx).reshape(dk, dr)
        return psi @ psi.conj().T
    n = len(dims)
    tensor = mat.reshape(dims * 2)
    perm = keep_idx + drop_idx
    tensor = tensor.transpose(perm + [p + n for p in perm]).reshape(dk, dr, dk, dr)
    return np.einsum("ajbj->ab", tensor)


def partial_trace(rho: State, keep: Iterable[str]) -> DensityMatrix:
    """Trace out every factor not in ``keep``; kept factors retain their order."""
    keep = set([keep] if isinstance(keep, str) else keep)
    if not keep:
        raise LayoutError("keep set must be non-empty")
    sub = rho.layout.sub(keep)
    if isinstance(rho, StateVector):
        red = _reduced_matrix(rho.amplitudes, rho.layout, sub.labels, pure=True)
    else:
        red = _reduced_matrix(rho.entries, rho.layout, sub.labels, pure=False)
    return DensityMatrix(sub, 0.5 * (red + red.conj().T))


def expectation(op: Operator, state: State) -> complex:
    _same_layout(op.layout, state.layout)
    if isinstance(state, StateVector):
        value = complex(np.vdot(state.amplitudes, op.entries @ state.amplitudes))
    else:
        value = complex(np.trace(state.entries @ op.entries))
    if op.hermitian and abs(value.imag) >= ALGEBRA_TOL:
        raise ValueError(f"Hermitian expectation has imaginary part {value.imag:g}")
    return value


def commutator(a: Operator, b: Operator) -> Operator:
    _same_layout(a.layout, b.layout)
    return Operator(a.layout, a.entries @ b.entries - b.entries @ a.entries)


def density_from_pure(s: StateVector) -> DensityMatrix:
    if abs(s.norm - 1.0) > NORM_TOL:
        raise ValueError(f"state is not normalized (norm {s.norm})")
    psi = s.amplitudes
    return DensityMatrix(s.layout, np.outer(psi, psi.conj()))


def mix(components: Sequence[tuple[float, DensityMatrix]]) -> DensityMatrix:
    """Convex combination of density matrices on a shared layout."""
    if not components:
        raise ValueError("mix needs at least one component")
    weights = np.array([w for w, _ in components], dtype=float)
    if np.any(weights < 0):
        raise ValueError("mixture weights must be non-negative")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError(f"mixture weights sum to {weights.sum()!r}, not 1")
    layout = components[0][1].layout
    for _, rho in components:
        _same_layout(layout, rho.layout)
    total = reduce(np.add, (w * rho.entries for w, rho in components))
    return DensityMatrix(layout, total)


def acts_trivially_on(U: Operator, labels: Sequence[str], tol: float = ALGEBRA_TOL) -> bool:
    """True if ``U`` factors as identity on ``labels`` tensored with something else."""
    layout = U.layout
    inside = [layout.index(label) for label in layout.labels if label in set(labels)]
    outside = [i for i in range(len(layout.factors)) if i not in inside]
    dims = layout.dims
    di = int(np.prod([dims[i] for i in inside], dtype=np.int64))
    do = int(np.prod([dims[i] for i in outside], dtype=np.int64))
    n = len(dims)
    perm = inside + outside
    t = U.entries.reshape(dims * 2).transpose(perm + [p + n for p in perm]).reshape(di, do, di, do)
    rest = t[0, :, 0, :]
    expected = np.einsum("ab,cd->acbd", np.eye(di), rest)
    return bool(np.max(np.abs(t - expected)) <= tol)
