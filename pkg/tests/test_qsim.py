import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgat import oracle
from qgat.qsim import (
    CircuitError, DensityMatrix, Gate, Observable, Program, StateVector, apply_gate,
    expectation, expectation_on_survivors, gradient, rg_matrix,
)

from conftest import Circuit, random_circuit, random_state

angles = st.floats(-2 * np.pi, 2 * np.pi, allow_nan=False)


class TestApplyGate:
    def test_rx_pi_flips(self):
        out = apply_gate(StateVector.zero(1), Gate("RX", (0,), ("t",)), [np.pi])
        np.testing.assert_allclose(out.amplitudes, [0, -1j], atol=1e-15)
        assert expectation(out, Observable.magnetization([0])) == pytest.approx(-1.0)

    def test_cz_phases_11(self):
        state = StateVector(2, np.full(4, 0.5))
        out = apply_gate(state, Gate("CZ", (0, 1)))
        np.testing.assert_allclose(out.amplitudes, [0.5, 0.5, 0.5, -0.5])
        np.testing.assert_allclose(np.abs(out.amplitudes), np.abs(state.amplitudes))

    def test_cx_control_is_first_target(self):
        # |q1 q0> = |01>: qubit 0 set, control 0 -> flips qubit 1
        out = apply_gate(StateVector.basis("01"), Gate("CX", (0, 1)))
        assert np.argmax(np.abs(out.amplitudes)) == 0b11
        out = apply_gate(StateVector.basis("10"), Gate("CX", (0, 1)))
        assert np.argmax(np.abs(out.amplitudes)) == 0b10

    def test_rg_zero_is_identity(self, rng):
        state = StateVector(3, random_state(rng, 3))
        out = apply_gate(state, Gate("RG", (1,), ("a", "b", "c")), [0, 0, 0])
        np.testing.assert_array_equal(out.amplitudes, state.amplitudes)

    def test_target_out_of_range(self):
        with pytest.raises(CircuitError):
            apply_gate(StateVector.zero(2), Gate("RX", (2,), ("t",)), [0.1])

    def test_wrong_angle_count(self):
        with pytest.raises(CircuitError):
            apply_gate(StateVector.zero(1), Gate("RG", (0,), ("a", "b", "c")), [0.1])

    @pytest.mark.parametrize("kind,targets,slots", [
        ("RX", (0, 1), ("t",)), ("CZ", (0,), ()), ("CZ", (1, 1), ()), ("RG", (0,), ("a",)), ("H", (0,), ()),
    ])
    def test_malformed_gate(self, kind, targets, slots):
        with pytest.raises(CircuitError):
            Gate(kind, targets, slots)

    def test_matches_dense_oracle(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 5))
            gates, slots = random_circuit(rng, n, 1)
            state = StateVector(n, random_state(rng, n))
            ang = rng.uniform(-np.pi, np.pi, len(slots))
            out = apply_gate(state, gates[0], ang)
            ref = oracle.gate_unitary(gates[0], ang, n) @ state.amplitudes
            np.testing.assert_allclose(out.amplitudes, ref, atol=1e-12)

    def test_norm_preservation_1000_pairs(self, rng):
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            gates, slots = random_circuit(rng, n, 1)
            state = StateVector(n, random_state(rng, n))
            out = apply_gate(state, gates[0], rng.uniform(-10, 10, len(slots)))
            worst = max(worst, abs(out.norm() - 1))
        assert worst < 1e-10


class TestRG:
    def test_zero(self):
        np.testing.assert_allclose(rg_matrix(0, 0, 0), np.eye(2), atol=1e-15)

    def test_pi_first_angle_is_minus_i_x(self):
        np.testing.assert_allclose(rg_matrix(np.pi, 0, 0), -1j * np.array([[0, 1], [1, 0]]), atol=1e-15)

    def test_half_pi_frozen_from_oracle(self):
        # product of eigendecomposition exponentials (oracle.single_qubit_unitary): -i * Hadamard
        expected = -1j / np.sqrt(2) * np.array([[1, 1], [1, -1]])
        np.testing.assert_allclose(rg_matrix(np.pi / 2, np.pi / 2, np.pi / 2), expected, atol=1e-14)

    def test_matches_oracle_random(self, rng):
        g = Gate("RG", (0,), ("a", "b", "c"))
        for _ in range(20):
            t = rng.uniform(-np.pi, np.pi, 3)
            np.testing.assert_allclose(rg_matrix(*t), oracle.single_qubit_unitary(g, t), atol=1e-13)

    def test_unitarity_100_triples(self, rng):
        for _ in range(100):
            u = rg_matrix(*rng.uniform(-4 * np.pi, 4 * np.pi, 3))
            assert np.abs(u.conj().T @ u - np.eye(2)).max() < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(angles, angles, angles)
    def test_unitarity_property(self, a, b, c):
        u = rg_matrix(a, b, c)
        assert np.abs(u.conj().T @ u - np.eye(2)).max() < 1e-12


class TestExpectation:
    def test_zero_state(self):
        assert expectation(StateVector.zero(1), Observable(((0, 1.0),), 1)) == 1.0

    def test_mixed_signs_average(self):
        obs = Observable(((0, 1.0), (1, 1.0)), 2)
        assert expectation(StateVector.basis("10"), obs) == pytest.approx(0.0)

    def test_rx_half_pi(self):
        state = apply_gate(StateVector.zero(1), Gate("RX", (0,), ("t",)), [np.pi / 2])
        assert expectation(state, Observable(((0, 1.0),), 1)) == pytest.approx(0.0, abs=1e-15)

    def test_index_out_of_range(self):
        with pytest.raises(CircuitError):
            expectation(StateVector.zero(2), Observable(((2, 1.0),), 1))

    def test_bounded_by_max_weight(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 5))
            qs = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
            obs = Observable(tuple((int(q), float(rng.normal())) for q in qs), 1)
            val = expectation(StateVector(n, random_state(rng, n)), obs)
            assert abs(val) <= obs.bound() * len(qs) + 1e-12

    def test_duplicate_qubits_rejected(self):
        with pytest.raises(CircuitError):
            Observable(((0, 1.0), (0, 2.0)), 1)


class TestSurvivors:
    def test_product_state(self):
        # |q1 q0> = |10>: qubit 0 in |0>, discarded qubit 1 in |1>
        val = expectation_on_survivors(StateVector.basis("10"), Observable(((0, 1.0),), 1), {1})
        assert val == pytest.approx(1.0)

    def test_bell_state_marginal_is_mixed(self):
        bell = StateVector(2, np.array([1, 0, 0, 1]) / np.sqrt(2))
        assert expectation_on_survivors(bell, Observable(((0, 1.0),), 1), {1}) == pytest.approx(0.0, abs=1e-15)

    def test_observable_on_discarded_rejected(self):
        with pytest.raises(CircuitError):
            expectation_on_survivors(StateVector.zero(2), Observable(((1, 1.0),), 1), {1})

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_matches_partial_trace_oracle(self, rng, n):
        for _ in range(20):
            gates, slots = random_circuit(rng, n, 12)
            ang = rng.uniform(-np.pi, np.pi, len(slots))
            psi = oracle.dense_state(Circuit(n, gates, slots), ang)
            state = StateVector(n, psi)
            k = int(rng.integers(1, n))
            discarded = set(rng.choice(n, size=k, replace=False).tolist())
            keep = sorted(set(range(n)) - discarded)
            terms = tuple((q, float(rng.normal())) for q in keep)
            obs = Observable(terms, len(terms))
            rho = oracle.partial_trace(DensityMatrix.from_state(state), keep)
            relabel = {q: j for j, q in enumerate(keep)}
            ref = oracle.expectation_dm(rho, Observable(tuple((relabel[q], w) for q, w in terms), len(terms)))
            assert expectation_on_survivors(state, obs, discarded) == pytest.approx(ref, abs=1e-10)


class TestGradient:
    def test_single_rx(self):
        circ = Circuit(1, [Gate("RX", (0,), ("t",))], ["t"])
        g = gradient(circ, [np.pi / 3], None, Observable.magnetization([0]))
        assert g[0] == pytest.approx(-np.sin(np.pi / 3), abs=1e-12)

    def test_length_mismatch(self):
        circ = Circuit(1, [Gate("RX", (0,), ("t",))], ["t"])
        with pytest.raises(CircuitError):
            gradient(circ, [0.1, 0.2], None, Observable.magnetization([0]))

    def test_isolated_discarded_slot_has_zero_gradient(self):
        gates = [Gate("RY", (0,), ("a",)), Gate("RX", (1,), ("b",))]
        circ = Circuit(2, gates, ["a", "b"])
        g = gradient(circ, [0.3, 0.9], None, Observable.magnetization([0]), discarded={1})
        assert abs(g[1]) < 1e-15
        assert g[0] == pytest.approx(-np.sin(0.3))

    def test_w_cell_circuit_matches_finite_differences(self, rng):
        from qgat.circuits import build_w_cell
        gates, slots = build_w_cell((0, 1), "w")
        gates2, slots2 = build_w_cell((2, 3), "v")
        circ = Circuit(4, gates + gates2, slots + slots2)
        obs = Observable.magnetization([1, 3])
        params = rng.uniform(-np.pi, np.pi, len(circ.slot_names))
        init = StateVector(4, random_state(rng, 4))
        g = gradient(circ, params, init, obs, discarded={0, 2})
        f = lambda p: expectation(StateVector(4, oracle.dense_state(circ, p, init.amplitudes)), obs)
        fd = oracle.finite_difference_gradient(f, params, 1e-4)
        assert np.abs(g - fd).max() <= 1e-5

    def test_random_circuits_match_finite_differences(self, rng):
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(1, 5))
            gates, slots = random_circuit(rng, n, int(rng.integers(3, 25)), max_slots=30)
            if not slots:
                continue
            circ = Circuit(n, gates, slots)
            k = int(rng.integers(1, n + 1))
            obs = Observable(tuple((int(q), float(rng.normal())) for q in rng.choice(n, k, replace=False)), k)
            params = rng.uniform(-np.pi, np.pi, len(slots))
            g = gradient(circ, params, None, obs)
            f = lambda p: expectation(StateVector(n, oracle.dense_state(circ, p)), obs)
            worst = max(worst, np.abs(g - oracle.finite_difference_gradient(f, params, 1e-4)).max())
        assert worst <= 1e-5

    def test_shared_slots_accumulate(self):
        gates = [Gate("RY", (0,), ("a",)), Gate("RY", (0,), ("a",))]
        g = gradient(Circuit(1, gates, ["a"]), [0.4], None, Observable.magnetization([0]))
        assert g[0] == pytest.approx(-2 * np.sin(0.8))


class TestProgram:
    def test_batched_equals_looped(self, rng):
        gates, slots = random_circuit(rng, 3, 15)
        prog = Program.compile(3, gates, slots)
        ang = rng.uniform(-np.pi, np.pi, (4, len(slots)))
        diag = Observable.magnetization([0, 2]).diagonal(3)
        vals, grads = prog.expectation_and_gradient(ang, diag)
        for b in range(4):
            v, g = prog.expectation_and_gradient(ang[b], diag)
            assert vals[b] == pytest.approx(v, abs=1e-14)
            np.testing.assert_allclose(grads[b], g, atol=1e-14)

    def test_determinism(self, rng):
        gates, slots = random_circuit(rng, 4, 20)
        prog = Program.compile(4, gates, slots)
        ang = rng.uniform(-np.pi, np.pi, len(slots))
        diag = Observable.magnetization([1]).diagonal(4)
        a = prog.expectation_and_gradient(ang, diag)
        b = prog.expectation_and_gradient(ang.copy(), diag)
        assert a[0] == b[0]
        assert np.array_equal(a[1], b[1])

    def test_width_cap(self):
        with pytest.raises(CircuitError):
            StateVector.zero(13)


class TestDensityMatrix:
    def test_from_state_is_valid(self, rng):
        rho = DensityMatrix.from_state(StateVector(3, random_state(rng, 3)))
        assert rho.is_valid()
        assert rho.trace() == pytest.approx(1.0)

    def test_size_cap(self):
        with pytest.raises(CircuitError):
            DensityMatrix(7, np.eye(128))
