from pathlib import Path

import numpy as np
import pytest

from qgat import oracle
from qgat.circuits import (
    build_conv_layer, build_feature_map, build_pool_layer, build_qgcn, build_w_cell, conv_pairs,
    parse_dump, survivor_observable,
)
from qgat.qsim import CircuitError, Gate, Observable, StateVector, expectation_on_survivors

from conftest import Circuit, random_state

GOLDEN = Path(__file__).parent / "golden"


class TestConvPairs:
    @pytest.mark.parametrize("n,j,expected", [
        (8, 0, [(0, 1), (2, 3), (4, 5), (6, 7)]),
        (8, 1, [(1, 2), (3, 4), (5, 6)]),
        (8, 2, [(0, 1), (2, 3), (4, 5), (6, 7)]),
        (4, 1, [(1, 2)]),
        (2, 0, [(0, 1)]),
        (2, 1, []),
    ])
    def test_examples(self, n, j, expected):
        assert conv_pairs(n, j) == expected

    def test_one_qubit_rejected(self):
        with pytest.raises(CircuitError):
            conv_pairs(1, 0)


class TestWCell:
    def test_slot_count_and_shape(self):
        gates, slots = build_w_cell((0, 1), "w")
        assert len(slots) == 15
        assert len(set(slots)) == 15
        assert [g.kind for g in gates].count("RG") == 4
        assert [g.kind for g in gates].count("CZ") == 3
        assert sum(len(g.param_slots) for g in gates) == 15

    def test_zero_angles_fix_00(self):
        gates, slots = build_w_cell((0, 1), "w")
        psi = oracle.dense_state(Circuit(2, gates, slots), np.zeros(15))
        np.testing.assert_allclose(np.abs(psi), [1, 0, 0, 0], atol=1e-15)

    def test_unitary(self, rng):
        gates, slots = build_w_cell((0, 1), "w")
        u = oracle.dense_circuit_matrix(Circuit(2, gates, slots), rng.uniform(-np.pi, np.pi, 15))
        np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-12)

    def test_same_qubit_rejected(self):
        with pytest.raises(CircuitError):
            build_w_cell((1, 1), "w")


class TestConvLayer:
    @pytest.mark.parametrize("live,r,slots", [(8, 3, 165), (4, 1, 30), (2, 1, 15), (2, 3, 30)])
    def test_slot_counts(self, live, r, slots):
        assert len(build_conv_layer(live, r)[1]) == slots

    def test_shared_cells_use_15_slots(self):
        gates, slots = build_conv_layer(8, 3, share=True)
        assert len(slots) == 15
        assert len(gates) == 11 * 10

    def test_labels_are_relabelled(self):
        gates, _ = build_conv_layer([1, 3, 5, 7], 1)
        touched = sorted({q for g in gates for q in g.targets})
        assert touched == [1, 3, 5, 7]

    def test_odd_width_rejected(self):
        with pytest.raises(CircuitError):
            build_conv_layer(3, 1)


class TestPool:
    def test_discard_even_positions(self):
        step = build_pool_layer(range(8))
        assert step.discarded == (0, 2, 4, 6)
        assert step.survivors == (1, 3, 5, 7)
        assert step.gates[0] == Gate("CX", (0, 1))

    def test_second_layer(self):
        step = build_pool_layer([1, 3, 5, 7])
        assert step.discarded == (1, 5)
        assert step.survivors == (3, 7)

    def test_no_gate(self):
        assert build_pool_layer([0, 1], "none").gates == ()

    def test_bad_gate(self):
        with pytest.raises(CircuitError):
            build_pool_layer([0, 1], "SWAP")


class TestQGCN:
    def test_eight_qubit_counts(self):
        spec, plan = build_qgcn(8, [3, 1, 1])
        assert spec.num_trainable == 210
        assert plan.survivors == (7,)
        assert plan.discarded == (0, 1, 2, 3, 4, 5, 6)
        spec, _ = build_qgcn(8, [3, 1, 1], trainable_scales=True)
        assert spec.num_trainable == 218
        assert spec.trainable_names[-8:] == tuple(f"scale{q}" for q in range(8))

    def test_multi_step_counts(self):
        spec, _ = build_qgcn(8, [1, 1, 1])
        assert spec.num_trainable == 4 * 15 + 2 * 15 + 15

    def test_two_qubits(self):
        spec, plan = build_qgcn(2, [1])
        assert spec.num_trainable == 15
        assert plan.survivors == (1,)

    def test_indivisible_rejected(self):
        with pytest.raises(CircuitError):
            build_qgcn(6, [1, 1])

    def test_bind_layout(self, rng):
        spec, _ = build_qgcn(4, [1, 1], trainable_scales=True)
        theta = rng.normal(size=spec.num_trainable)
        x = rng.uniform(0, np.pi, 4)
        angles = spec.bind(theta, x)
        np.testing.assert_allclose(angles[:4], x * theta[-4:])
        np.testing.assert_allclose(angles[4:], theta[:-4])

    def test_bind_vjp_matches_finite_differences(self, rng):
        spec, _ = build_qgcn(4, [1, 1], trainable_scales=True)
        theta = rng.normal(size=spec.num_trainable)
        x = rng.uniform(0, np.pi, (3, 4))
        d = rng.normal(size=(3, len(spec.slot_names)))
        d_theta, d_x = spec.bind_vjp(theta, x, d)
        f_theta = lambda t: float((spec.bind(t, x) * d).sum())
        np.testing.assert_allclose(d_theta, oracle.finite_difference_gradient(f_theta, theta), atol=1e-8)
        f_x = lambda flat: float((spec.bind(theta, flat.reshape(3, 4)) * d).sum())
        np.testing.assert_allclose(d_x.ravel(), oracle.finite_difference_gradient(f_x, x.ravel()), atol=1e-8)

    def test_unitary_against_oracle(self, rng):
        spec, _ = build_qgcn(4, [1, 1], include_feature_map=False)
        params = rng.uniform(-np.pi, np.pi, spec.num_trainable)
        angles = spec.bind(params)
        u = oracle.dense_circuit_matrix(spec, angles)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(16), atol=1e-12)
        for b in range(16):
            e = np.zeros(16, dtype=complex)
            e[b] = 1
            np.testing.assert_allclose(spec.program.run(angles, e), u[:, b], atol=1e-12)

    def test_deferred_discard_matches_early_trace(self, rng):
        spec, plan = build_qgcn(4, [1, 1], include_feature_map=False)
        obs = survivor_observable(plan)
        for _ in range(5):
            angles = spec.bind(rng.uniform(-np.pi, np.pi, spec.num_trainable))
            init = random_state(rng, 4)
            late = expectation_on_survivors(StateVector(4, spec.program.run(angles, init)), obs,
                                            set(plan.discarded))
            early = oracle.density_pipeline_expectation(spec, angles, obs, plan.discarded, init)
            assert late == pytest.approx(early, abs=1e-12)

    def test_golden_dump(self):
        spec, _ = build_qgcn(4, [1, 1])
        assert spec.dump() == (GOLDEN / "qgcn_4q_d11.txt").read_text()

    def test_dump_round_trip(self):
        spec, _ = build_qgcn(8, [3, 1, 1], trainable_scales=True)
        assert tuple(parse_dump(spec.dump())) == spec.gates


class TestFeatureMap:
    def test_plain(self):
        fm = build_feature_map(3)
        assert fm.scale_names == ()
        np.testing.assert_array_equal(fm.angles([1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_trainable_scales(self):
        fm = build_feature_map(2, trainable=True)
        np.testing.assert_allclose(fm.angles([1.0, 2.0], [0.5, 2.0]), [0.5, 4.0])

    def test_width_checked(self):
        with pytest.raises(CircuitError):
            build_feature_map(2).angles([1.0, 2.0, 3.0])


def test_survivor_observable_weights():
    _, plan = build_qgcn(4, [1])
    obs = survivor_observable(plan, [2.0, 1.0])
    assert obs.qubits == (1, 3)
    assert isinstance(obs, Observable)
