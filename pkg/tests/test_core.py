import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relmeas.core import (
    IDENTITY_2,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DensityMatrix,
    Layout,
    LayoutError,
    Operator,
    StateVector,
    acts_trivially_on,
    apply_operator,
    basis_state,
    commutator,
    density_from_pure,
    evolve_density,
    expectation,
    lift_op,
    mix,
    operator,
    partial_trace,
    tensor_product_op,
    tensor_product_state,
)

from conftest import random_density, random_state, random_unitary

U, D = np.array([1, 0], complex), np.array([0, 1], complex)


def ket(label, vec):
    return StateVector(Layout.of((label, len(vec))), vec)


def chain(n, prefix="A"):
    return Layout(tuple((f"{prefix}{i}", 2) for i in range(1, n + 1)))


# -- oracles -------------------------------------------------------------------


def kron_by_index(a, b):
    out = np.zeros(len(a) * len(b), complex)
    for i, j in itertools.product(range(len(a)), range(len(b))):
        out[i * len(b) + j] = a[i] * b[j]
    return out


def partial_trace_by_loops(rho, dims, keep):
    """Sum over matching traced indices, one multi-index at a time."""
    n = len(dims)
    kept_dims = [dims[k] for k in keep]
    dk = int(np.prod(kept_dims))
    out = np.zeros((dk, dk), complex)
    for row in itertools.product(*(range(d) for d in dims)):
        for col in itertools.product(*(range(d) for d in dims)):
            if any(row[i] != col[i] for i in range(n) if i not in keep):
                continue
            r = np.ravel_multi_index([row[k] for k in keep], kept_dims)
            c = np.ravel_multi_index([col[k] for k in keep], kept_dims)
            out[r, c] += rho[np.ravel_multi_index(row, dims), np.ravel_multi_index(col, dims)]
    return out


# -- layout --------------------------------------------------------------------


def test_layout_rejects_duplicates():
    with pytest.raises(LayoutError):
        Layout.of(("S", 2), ("S", 3))


def test_layout_dim_is_product():
    assert Layout.of(("S", 2), ("O", 3), ("X", 4)).dim == 24


# -- tensor products -----------------------------------------------------------


def test_tensor_basis_states():
    out = tensor_product_state(ket("a", U), ket("b", U))
    np.testing.assert_array_equal(out.amplitudes, [1, 0, 0, 0])
    assert out.layout.labels == ("a", "b")


def test_tensor_initial_product_state():
    s = ket("S", np.array([0.6, 0.8], complex))
    out = tensor_product_state(s, ket("O", U))
    np.testing.assert_allclose(out.amplitudes, [0.6, 0, 0.8, 0], atol=0)


def test_tensor_associative(rng):
    psi, phi, chi = (random_state(rng, 2) for _ in range(3))
    left = tensor_product_state(tensor_product_state(ket("a", psi), ket("b", phi)), ket("c", chi))
    right = tensor_product_state(ket("a", psi), tensor_product_state(ket("b", phi), ket("c", chi)))
    np.testing.assert_allclose(left.amplitudes, right.amplitudes, atol=1e-15)
    np.testing.assert_allclose(left.amplitudes, kron_by_index(kron_by_index(psi, phi), chi), atol=1e-15)


def test_tensor_norm_multiplies(rng):
    a = StateVector(Layout.of(("a", 3)), 2 * random_state(rng, 3))
    b = StateVector(Layout.of(("b", 2)), 0.5 * random_state(rng, 2))
    assert tensor_product_state(a, b).norm == pytest.approx(a.norm * b.norm, abs=1e-14)


def test_tensor_duplicate_label():
    with pytest.raises(LayoutError):
        tensor_product_state(ket("a", U), ket("a", U))
    with pytest.raises(LayoutError):
        tensor_product_op(operator("a", SIGMA_X), operator("a", SIGMA_X))


def test_tensor_op_single_factor_action():
    op = tensor_product_op(operator("a", SIGMA_X), operator("b", IDENTITY_2))
    out = apply_operator(op, tensor_product_state(ket("a", U), ket("b", U)))
    np.testing.assert_array_equal(out.amplitudes, np.kron(D, U))


def test_tensor_op_matches_hand_expanded_b():
    op = tensor_product_op(operator("S0", SIGMA_X), operator("A1", SIGMA_Y))
    expected = np.array(
        [[0, 0, 0, -1j], [0, 0, 1j, 0], [0, -1j, 0, 0], [1j, 0, 0, 0]]
    )
    np.testing.assert_array_equal(op.entries, expected)


def test_tensor_op_product_of_sigma_y_entries():
    op = tensor_product_op(tensor_product_op(operator("1", SIGMA_Y), operator("2", SIGMA_Y)), operator("3", SIGMA_Y))
    mods = np.abs(op.entries)
    assert np.all((mods == 0) | (mods == 1))


def test_tensor_op_mixed_product(rng):
    A, B = random_unitary(rng, 2), rng.normal(size=(2, 2))
    psi, phi = random_state(rng, 2), random_state(rng, 2)
    lhs = apply_operator(
        tensor_product_op(operator("a", A), operator("b", B)),
        tensor_product_state(ket("a", psi), ket("b", phi)),
    )
    rhs = tensor_product_state(ket("a", A @ psi), ket("b", B @ phi))
    np.testing.assert_allclose(lhs.amplitudes, rhs.amplitudes, atol=1e-14)


# -- lifting -------------------------------------------------------------------


def test_lift_onto_first_factor():
    layout = Layout.of(("S", 2), ("O", 2), ("X", 2))
    lifted = lift_op(SIGMA_Z, "S", layout)
    np.testing.assert_array_equal(lifted.entries, np.kron(SIGMA_Z, np.eye(4)))


def test_lift_onto_middle_factor_reorders():
    layout = Layout.of(("a", 2), ("b", 3), ("c", 2))
    m = np.arange(9).reshape(3, 3).astype(complex)
    lifted = lift_op(m, "b", layout)
    np.testing.assert_array_equal(lifted.entries, np.kron(np.kron(np.eye(2), m), np.eye(2)))


def test_lift_flips_only_target_atom():
    layout = chain(3)
    out = apply_operator(lift_op(SIGMA_X, "A2", layout), basis_state(layout, [0, 0, 0]))
    np.testing.assert_array_equal(out.amplitudes, basis_state(layout, [0, 1, 0]).amplitudes)


def test_lift_disjoint_factors_commute():
    layout = chain(3)
    c = commutator(lift_op(SIGMA_X, "A1", layout), lift_op(SIGMA_Y, "A2", layout))
    assert np.max(np.abs(c.entries)) == 0


def test_lift_multi_factor_order():
    layout = Layout.of(("a", 2), ("b", 2), ("c", 2))
    cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    # control c, target a: map |a b c> with c=1 flips a
    lifted = lift_op(cnot, ("c", "a"), layout)
    out = apply_operator(lifted, basis_state(layout, [0, 1, 1]))
    np.testing.assert_array_equal(out.amplitudes, basis_state(layout, [1, 1, 1]).amplitudes)


def test_lift_errors():
    layout = chain(2)
    with pytest.raises(LayoutError):
        lift_op(SIGMA_X, "B1", layout)
    with pytest.raises(LayoutError):
        lift_op(np.eye(3), "A1", layout)


# -- application and evolution --------------------------------------------------


def test_apply_identity_and_pauli_y(rng):
    psi = ket("a", random_state(rng, 2))
    out = apply_operator(operator("a", IDENTITY_2), psi)
    np.testing.assert_array_equal(out.amplitudes, psi.amplitudes)
    np.testing.assert_array_equal(apply_operator(operator("a", SIGMA_Y), ket("a", U)).amplitudes, 1j * D)


def test_apply_layout_mismatch():
    with pytest.raises(LayoutError):
        apply_operator(operator("a", SIGMA_X), ket("b", U))


def test_evolve_identity(rng):
    layout = Layout.of(("a", 2), ("b", 2))
    rho = DensityMatrix(layout, random_density(rng, 4))
    out = evolve_density(Operator(layout, np.eye(4)), rho)
    np.testing.assert_allclose(out.entries, rho.entries, atol=1e-15)


def test_evolve_preserves_spectrum_and_trace(rng):
    layout = Layout.of(("a", 2), ("b", 2))
    for _ in range(20):
        rho = DensityMatrix(layout, random_density(rng, 4))
        out = evolve_density(Operator(layout, random_unitary(rng, 4)), rho)
        np.testing.assert_allclose(
            np.linalg.eigvalsh(out.entries), np.linalg.eigvalsh(rho.entries), atol=1e-9
        )
        assert abs(out.trace - 1) < 1e-12
        assert np.max(np.abs(out.entries - out.entries.conj().T)) < 1e-10


def test_evolve_rejects_non_unitary():
    layout = Layout.of(("a", 2))
    with pytest.raises(ValueError):
        evolve_density(Operator(layout, 2 * np.eye(2)), DensityMatrix(layout, np.diag([1, 0])))


# -- partial trace -----------------------------------------------------------------


def test_partial_trace_product_state():
    layout = Layout.of(("S", 2), ("O", 2))
    rho = density_from_pure(basis_state(layout, [0, 1]))
    out = partial_trace(rho, {"O"})
    np.testing.assert_array_equal(out.entries, np.diag([0, 1]))
    assert out.layout.labels == ("O",)


def test_partial_trace_keeps_original_order(rng):
    layout = Layout.of(("a", 2), ("b", 3), ("c", 2))
    rho = random_density(rng, 12)
    out = partial_trace(DensityMatrix(layout, rho), {"c", "a"})
    assert out.layout.labels == ("a", "c")
    np.testing.assert_allclose(out.entries, partial_trace_by_loops(rho, [2, 3, 2], [0, 2]), atol=1e-14)


def test_partial_trace_of_pure_matches_density(rng):
    layout = Layout.of(("a", 3), ("b", 2), ("c", 2))
    psi = StateVector(layout, random_state(rng, 12))
    for keep in ({"a"}, {"b"}, {"a", "c"}, {"b", "c"}):
        np.testing.assert_allclose(
            partial_trace(psi, keep).entries,
            partial_trace(density_from_pure(psi), keep).entries,
            atol=1e-14,
        )


def test_partial_trace_random_three_factor_invariants():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        dims = rng.integers(1, 5, size=3)
        layout = Layout(tuple((f"f{i}", int(d)) for i, d in enumerate(dims)))
        rho = DensityMatrix(layout, random_density(rng, layout.dim))
        keep = {f"f{i}" for i in range(3) if rng.random() < 0.5} or {"f1"}
        out = partial_trace(rho, keep)
        assert abs(out.trace - 1) < 1e-12
        assert np.max(np.abs(out.entries - out.entries.conj().T)) < 1e-10
        assert np.linalg.eigvalsh(out.entries).min() > -1e-8


def test_partial_trace_errors():
    rho = density_from_pure(basis_state(Layout.of(("S", 2)), [0]))
    with pytest.raises(LayoutError):
        partial_trace(rho, {"X"})
    with pytest.raises(LayoutError):
        partial_trace(rho, set())


# -- expectation, commutator, density, mix ------------------------------------------


def test_expectation_identity(rng):
    psi = ket("a", random_state(rng, 2))
    assert expectation(operator("a", IDENTITY_2, True), psi) == pytest.approx(1.0, abs=1e-14)


def test_expectation_density_matches_vector(rng):
    layout = Layout.of(("a", 4))
    psi = StateVector(layout, random_state(rng, 4))
    h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    op = Operator(layout, h + h.conj().T, hermitian=True)
    assert expectation(op, psi) == pytest.approx(expectation(op, density_from_pure(psi)), abs=1e-13)


def test_expectation_hermitian_guard():
    layout = Layout.of(("a", 2))
    op = Operator(layout, SIGMA_Y @ SIGMA_X, hermitian=True)  # actually -i sigma_z
    with pytest.raises(ValueError):
        expectation(op, basis_state(layout, [0]))


def test_commutator_self_and_antisymmetry(rng):
    layout = Layout.of(("a", 3))
    a = Operator(layout, rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    b = Operator(layout, rng.normal(size=(3, 3)))
    assert np.max(np.abs(commutator(a, a).entries)) == 0
    np.testing.assert_allclose(commutator(a, b).entries, -commutator(b, a).entries, atol=1e-14)


def test_commutator_disjoint_sigma_z():
    layout = chain(2)
    c = commutator(lift_op(SIGMA_Z, "A1", layout), lift_op(SIGMA_Z, "A2", layout))
    assert np.max(np.abs(c.entries)) == 0


def test_density_from_pure():
    rho = density_from_pure(ket("a", U))
    np.testing.assert_array_equal(rho.entries, np.diag([1, 0]))
    with pytest.raises(ValueError):
        density_from_pure(ket("a", 2 * U))


def test_density_from_entangled_off_diagonal():
    layout = Layout.of(("S", 2), ("O", 2))
    psi = StateVector(layout, [0.6, 0, 0, 0.8])
    rho = density_from_pure(psi)
    assert rho.entries[0, 3] == pytest.approx(0.6 * 0.8)


def test_density_purity_random(rng):
    for _ in range(10):
        rho = density_from_pure(ket("a", random_state(rng, 5)))
        assert abs(rho.purity - 1) < 1e-12
        rho.check()


def test_mix():
    layout = Layout.of(("S", 2), ("O", 2))
    p1 = density_from_pure(basis_state(layout, [0, 0]))
    p2 = density_from_pure(basis_state(layout, [1, 1]))
    np.testing.assert_array_equal(mix([(1.0, p1)]).entries, p1.entries)
    m = mix([(0.36, p1), (0.64, p2)])
    np.testing.assert_allclose(np.diag(m.entries).real, [0.36, 0, 0, 0.64])
    assert m.purity == pytest.approx(0.36**2 + 0.64**2, abs=1e-15)
    with pytest.raises(ValueError):
        mix([(-0.1, p1), (1.1, p2)])
    with pytest.raises(ValueError):
        mix([(0.5, p1), (0.6, p2)])


def test_values_are_read_only(rng):
    psi = ket("a", random_state(rng, 2))
    with pytest.raises(ValueError):
        psi.amplitudes[0] = 0


def test_acts_trivially_on():
    layout = Layout.of(("a", 2), ("b", 2), ("c", 2))
    assert acts_trivially_on(lift_op(SIGMA_X, "a", layout), ["b", "c"])
    assert not acts_trivially_on(lift_op(SIGMA_X, "b", layout), ["b"])
    cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    assert not acts_trivially_on(lift_op(cnot, ("a", "c"), layout), ["a"])
    assert acts_trivially_on(lift_op(cnot, ("a", "c"), layout), ["b"])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_property_tensor_op_on_product(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    B = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    psi, phi = random_state(rng, 2), random_state(rng, 2)
    lhs = apply_operator(
        tensor_product_op(operator("a", A), operator("b", B)),
        tensor_product_state(ket("a", psi), ket("b", phi)),
    )
    np.testing.assert_allclose(lhs.amplitudes, np.kron(A @ psi, B @ phi), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_property_built_states_are_valid(seed):
    rng = np.random.default_rng(seed)
    layout = Layout.of(("a", 2), ("b", 3))
    rho = density_from_pure(StateVector(layout, random_state(rng, 6)))
    rho.check(tol=1e-10, eig_tol=1e-8)
    mixed = mix([(0.3, rho), (0.7, DensityMatrix(layout, random_density(rng, 6)))])
    mixed.check(tol=1e-10, eig_tol=1e-8)
