from unittest import TestCase
import json
import logging
import math
import os
import sys

import numpy as np

currentdir = os.path.dirname(__file__)
parentdir = os.path.dirname(currentdir)
sys.path.insert(0, os.path.join(parentdir, "src"))

from bn_structure_py.graphs import iter_permutations, mask_of, node_subset_pairs
from bn_structure_py.interfaces import Control
from bn_structure_py.qprep import *
from bn_structure_py.qsim import StateVector, extract_claim_amplitudes, run
from bn_structure_py.scoring import LocalScoreTable
from bn_structure_py.exceptions import *


def random_angles(n: int, rng, lmax=None) -> AngleTable:
    layout = QubitLayout(n, lmax)
    theta = {pair: float(rng.uniform(0.0, math.pi / 2))
             for level in range(layout.kept_levels) for pair in node_subset_pairs(n, level)}
    return AngleTable(n, theta, [0.0] * layout.kept_levels)


def constant_angles(n: int, value: float, lmax=None) -> AngleTable:
    layout = QubitLayout(n, lmax)
    theta = {pair: value for level in range(layout.kept_levels) for pair in node_subset_pairs(n, level)}
    return AngleTable(n, theta, [0.0] * layout.kept_levels)


def simulate(n: int, angles: AngleTable, lmax=None):
    layout = QubitLayout(n, lmax)
    state = run(build_state_prep(layout, angles, lmax))
    return extract_claim_amplitudes(state, layout)


class LayoutTest(TestCase):
    def test_unrestricted_n3(self):
        layout = QubitLayout(3)
        self.assertEqual(18, layout.total_qubits)
        self.assertEqual([3, 6, 3], layout.selector_widths())
        self.assertEqual([0, 1, 2], layout.alpha)
        self.assertEqual((15, 16, 17), (layout.gamma, layout.mu0, layout.omega))
        self.assertEqual([0, 1, 2, 16], layout.mu_register)
        self.assertEqual(list(range(3, 15)) + [15], layout.nu_register)
        self.assertFalse(layout.restricted)

    def test_restricted(self):
        self.assertEqual(15, QubitLayout(3, 1).total_qubits)
        self.assertEqual(23, QubitLayout(4, 1).total_qubits)
        self.assertTrue(QubitLayout(3, 1).restricted)
        self.assertFalse(QubitLayout(3, 2).restricted)

    def test_pairing(self):
        layout = QubitLayout(3)
        self.assertEqual(node_subset_pairs(3, 1), layout.pairs[1])
        entry = layout.to_dict()["betaLevels"][1][0]
        self.assertEqual({"qubit": 6, "node": 0, "parents": [1]}, entry)

    def test_epsilon(self):
        self.assertAlmostEqual(1 / 54, epsilon(QubitLayout(3)), places=15)
        self.assertAlmostEqual(1 / 18, epsilon(QubitLayout(3, 1)), places=15)


class CircuitTest(TestCase):
    def setUp(self) -> None:
        logging.basicConfig(level=logging.DEBUG)

    def test_gate_counts(self):
        layout = QubitLayout(3)
        circuit = build_state_prep(layout, constant_angles(3, 0.3))
        self.assertEqual(12, circuit.count("halfmoon"))
        self.assertEqual(6, circuit.count("unary_prepare"))
        self.assertEqual(0, circuit.count("dicke_prepare"))
        halfmoons = [g for g in circuit.gates if g.kind == "halfmoon"]
        self.assertEqual([3, 6, 3], [sum(1 for g in halfmoons if len(g.alpha_controls) == level) for level in range(3)])

    def test_restricted_gate_counts(self):
        layout = QubitLayout(3, 1)
        circuit = build_state_prep(layout, constant_angles(3, 0.3, lmax=1), lmax=1)
        self.assertEqual(15, circuit.qubit_count)
        # 3 + 6 branches, each level-1 branch also completing its one remaining node
        self.assertEqual(15, circuit.count("halfmoon"))
        self.assertEqual(4, circuit.count("unary_prepare"))
        self.assertTrue(all(len(g.alpha_controls) <= 1 for g in circuit.gates if g.kind == "halfmoon"))
        completions = [g for g in circuit.gates if g.kind == "halfmoon" and g.angle == math.pi / 2]
        self.assertEqual(6, len(completions))
        self.assertEqual(set(layout.beta_levels[1]), {g.selector.qubit for g in completions})

    def test_final_flip_controls(self):
        layout = QubitLayout(3)
        flip = build_state_prep(layout, constant_angles(3, 0.3)).gates[-1]
        self.assertEqual(layout.omega, flip.target)
        self.assertEqual({Control(q, 1) for q in layout.alpha} | {Control(q, 0) for q in layout.beta},
                         set(flip.controls))

    def test_unit_norm(self):
        state = run(build_state_prep(QubitLayout(3), random_angles(3, np.random.default_rng(0))))
        self.assertAlmostEqual(1.0, state.norm(), places=10)

    def test_mismatch(self):
        with self.assertRaises(CircuitException):
            build_state_prep(QubitLayout(3), constant_angles(4, 0.3))
        with self.assertRaises(CircuitException):
            build_state_prep(QubitLayout(3, 1), constant_angles(3, 0.3))
        with self.assertRaises(CircuitException):
            build_state_prep(QubitLayout(3), constant_angles(3, 0.3), lmax=1)
        angles = constant_angles(3, 0.3)
        del angles.theta[(2, mask_of([0, 1]))]
        with self.assertRaises(CircuitException):
            build_state_prep(QubitLayout(3), angles)

    def test_invalid_gates(self):
        with self.assertRaises(CircuitException):
            Circuit(2).append(CNOT(1, 1))
        with self.assertRaises(CircuitException):
            Circuit(2).append(X(2))
        with self.assertRaises(CircuitException):
            gate_from_dict({"kind": "toffoli"})

    def test_serialized_circuit_is_self_describing(self):
        layout = QubitLayout(3, 1)
        circuit = build_state_prep(layout, random_angles(3, np.random.default_rng(4), lmax=1), lmax=1)
        data = json.loads(json.dumps(circuit.to_dict()))
        self.assertEqual(15, data["layout"]["totalQubits"])
        again = Circuit.from_dict(data)
        np.testing.assert_allclose(run(circuit).amplitudes, run(again).amplitudes, atol=1e-15)
        self.assertEqual(1, again.layout.lmax)


class AngleTableTest(TestCase):
    def test_equal_level_gives_right_angle(self):
        log_h = {pair: -2.0 for level in range(3) for pair in node_subset_pairs(3, level)}
        angles = angles_from_scores(LocalScoreTable(3, log_h))
        self.assertTrue(all(abs(t - math.pi / 2) < 1e-15 for t in angles.theta.values()))
        self.assertEqual((-2.0, -2.0, -2.0), angles.level_scale)

    def test_zero_entries(self):
        log_h = {pair: -math.inf for level in range(3) for pair in node_subset_pairs(3, level)}
        log_h[(0, 0)] = -1.0
        angles = angles_from_scores(LocalScoreTable(3, log_h))
        self.assertEqual(0.0, angles.theta[(1, 0)])
        self.assertEqual(0.0, angles.sin(2, mask_of([0, 1])))
        # an all-zero level keeps the scale 1
        self.assertEqual(0.0, angles.level_scale[2])

    def test_scaled_back(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            log_h = {pair: float(rng.normal(scale=3.0)) for level in range(3) for pair in node_subset_pairs(3, level)}
            table = LocalScoreTable(3, log_h)
            angles = angles_from_scores(table)
            for (j, S), value in table.items():
                scale = angles.level_scale[bin(S).count("1")]
                self.assertAlmostEqual(1.0, math.sin(angles.theta[(j, S)]) * math.exp(scale - value), delta=1e-14)

    def test_encoding_scales(self):
        rng = np.random.default_rng(21)
        log_h = {pair: float(rng.normal(-30.0, 5.0)) for level in range(3) for pair in node_subset_pairs(3, level)}
        table = LocalScoreTable(3, log_h)
        node_scale, level_scale = encoding_scales(table)
        for j in range(3):
            self.assertEqual(max(v for (k, _), v in table.items() if k == j), node_scale[j])
        angles = angles_from_scores(table, node_scale=node_scale)
        self.assertEqual(tuple(node_scale), angles.node_scale)
        self.assertEqual(tuple(level_scale), angles.level_scale)
        self.assertAlmostEqual(sum(node_scale) + sum(level_scale), angles.log_scale, places=12)
        for (j, S), value in table.items():
            scale = node_scale[j] + level_scale[bin(S).count("1")]
            self.assertLessEqual(math.sin(angles.theta[(j, S)]), 1.0)
            self.assertAlmostEqual(1.0, angles.sin(j, S) * math.exp(scale - value), delta=1e-12)

    def test_node_scales_need_every_level(self):
        log_h = {pair: -1.0 for level in range(2) for pair in node_subset_pairs(3, level)}
        table = LocalScoreTable(3, log_h, lmax=1)
        node_scale, level_scale = encoding_scales(table)
        self.assertEqual([0.0, 0.0, 0.0], node_scale)
        self.assertEqual([-1.0, -1.0], level_scale)
        with self.assertRaises(CircuitException):
            angles_from_scores(table, node_scale=[-1.0, 0.0, 0.0])
        with self.assertRaises(DimensionMismatchException):
            angles_from_scores(LocalScoreTable(3, {p: 0.0 for l in range(3) for p in node_subset_pairs(3, l)}),
                               node_scale=[0.0])

    def test_foreign_scale(self):
        log_h = {pair: 0.0 for level in range(3) for pair in node_subset_pairs(3, level)}
        table = LocalScoreTable(3, log_h)
        with self.assertRaises(CircuitException):
            angles_from_scores(table, [-1.0, -1.0, -1.0])
        with self.assertRaises(DimensionMismatchException):
            angles_from_scores(table, [0.0])


class ClaimAmplitudeTest(TestCase):
    def setUp(self) -> None:
        logging.basicConfig(level=logging.INFO)

    def test_all_right_angles(self):
        pair = simulate(3, constant_angles(3, math.pi / 2))
        self.assertAlmostEqual((1 / 54) * 6 / math.sqrt(2), pair.z1.real, delta=1e-12)
        self.assertAlmostEqual(1 / 36, pair.z0.real, delta=1e-12)

    def test_zero_angles(self):
        pair = simulate(3, constant_angles(3, 0.0))
        self.assertAlmostEqual(0.0, abs(pair.z1), delta=1e-12)
        self.assertAlmostEqual(1 / 36, pair.z0.real, delta=1e-12)

    def test_random_tables_n3(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            angles = random_angles(3, rng)
            pair = simulate(3, angles)
            total = sum(
                math.sin(angles.theta[(p.sigma[2], p.predecessors(2))])
                * math.sin(angles.theta[(p.sigma[1], p.predecessors(1))])
                * math.sin(angles.theta[(p.sigma[0], 0)])
                for p in iter_permutations(3)
            )
            self.assertAlmostEqual((1 / 54) / math.sqrt(2) * total, pair.z1.real, delta=1e-12)
            self.assertAlmostEqual(1 / 36, pair.z0.real, delta=1e-12)
            self.assertLess(pair.residual, 1e-10)
            self.assertAlmostEqual(0.0, pair.z1.imag, delta=1e-15)

    def test_claim_formula_matches_direct_sum(self):
        angles = random_angles(3, np.random.default_rng(1))
        z1, z0 = claim_amplitudes(angles, 3)
        self.assertAlmostEqual(1 / 36, z0, delta=1e-15)
        self.assertAlmostEqual(restricted_order_sum(angles) / 54 / math.sqrt(2), z1, delta=1e-15)

    def test_restricted_n3(self):
        pair = simulate(3, constant_angles(3, math.pi / 2, lmax=1), lmax=1)
        self.assertAlmostEqual(1 / (3 * math.sqrt(2)), pair.z1.real, delta=1e-12)
        self.assertAlmostEqual(1 / 12, pair.z0.real, delta=1e-12)
        self.assertAlmostEqual(2 * math.sqrt(2), pair.ratio, places=10)

        rng = np.random.default_rng(7)
        eps = 1 / 18
        for _ in range(20):
            angles = random_angles(3, rng, lmax=1)
            pair = simulate(3, angles, lmax=1)
            total = restricted_order_sum(angles)
            # one dropped level: z1 = (ε/√2) Σ', z0 = ε n!/√2^{n+1}
            self.assertAlmostEqual(eps / math.sqrt(2) * total, pair.z1.real, delta=1e-12)
            self.assertAlmostEqual(eps * 6 / math.sqrt(2) ** 4, pair.z0.real, delta=1e-12)
            self.assertAlmostEqual(total * 2 ** 1.5 / 6, pair.ratio, places=10)
            z1, z0 = claim_amplitudes(angles, 3, 1)
            self.assertAlmostEqual(z1, pair.z1.real, delta=1e-12)
            self.assertAlmostEqual(z0, pair.z0.real, delta=1e-12)
            self.assertLess(pair.residual, 1e-10)

    def test_restricted_n4(self):
        rng = np.random.default_rng(8)
        eps = 1 / (4 * 12)
        for _ in range(3):
            angles = random_angles(4, rng, lmax=1)
            pair = simulate(4, angles, lmax=1)
            total = restricted_order_sum(angles)
            # two dropped levels: the completed tails repeat each prefix (n-k)! = 2 times
            self.assertAlmostEqual(eps / math.sqrt(2) * total / 2, pair.z1.real, delta=1e-12)
            self.assertAlmostEqual(eps / math.sqrt(2) * 12 / 4, pair.z0.real, delta=1e-12)
            z1, z0 = claim_amplitudes(angles, 4, 1)
            self.assertAlmostEqual(z1, pair.z1.real, delta=1e-12)
            self.assertAlmostEqual(z0, pair.z0.real, delta=1e-12)
            self.assertLess(pair.residual, 1e-10)

    def test_target_projector(self):
        layout = QubitLayout(3)
        projector = target_projector(layout)
        self.assertEqual({layout.omega: 0}, projector.assignments)
        state = run(build_state_prep(layout, random_angles(3, np.random.default_rng(3))))
        projected = projector.apply(state)
        self.assertAlmostEqual(abs(projected.amplitudes).max(),
                               max(abs(extract_claim_amplitudes(state, layout).z1),
                                   abs(extract_claim_amplitudes(state, layout).z0)), places=14)

    def test_residual_detection(self):
        layout = QubitLayout(3, 1)
        state = StateVector(layout.total_qubits)
        with self.assertRaises(CircuitException):
            extract_claim_amplitudes(state, layout)
