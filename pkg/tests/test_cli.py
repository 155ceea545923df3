from unittest import TestCase
import contextlib
import io
import json
import logging
import os
import sys
import tempfile
from unittest import mock

import numpy as np

currentdir = os.path.dirname(__file__)
parentdir = os.path.dirname(currentdir)
sys.path.insert(0, os.path.join(parentdir, "src"))

from bn_structure_py.cli import RunConfig, main
from bn_structure_py.constants import MAX_QUBITS_ENV


def write_dataset(path: str, n: int, M: int, seed: int, copy_rate: float = 0.8):
    rng = np.random.default_rng(seed)
    values = np.zeros((M, n), dtype=int)
    values[:, 0] = rng.integers(0, 2, size=M)
    for j in range(1, n):
        # each column copies its left neighbour with probability copy_rate
        copy = rng.random(M) < copy_rate
        values[:, j] = np.where(copy, values[:, j - 1], rng.integers(0, 2, size=M))
    lines = [",".join(f"x{j}" for j in range(n))]
    lines += [",".join("ab"[v] for v in row) for row in values]
    with open(path, "w") as writer:
        writer.write("\n".join(lines) + "\n")


class CliTest(TestCase):
    def setUp(self) -> None:
        logging.basicConfig(level=logging.DEBUG)
        self.folder = tempfile.TemporaryDirectory()
        self.data = self.path("data.csv")
        write_dataset(self.data, 3, 60, 1)

    def tearDown(self) -> None:
        self.folder.cleanup()

    def path(self, name: str) -> str:
        return os.path.join(self.folder.name, name)

    def call(self, *argv) -> dict:
        out = self.path("out.json")
        with contextlib.redirect_stderr(io.StringIO()):
            code = main(list(argv) + ["--output", out])
        self.assertEqual(0, code)
        with open(out, "r") as reader:
            return json.load(reader)

    def test_enumerate(self):
        dags = self.call("enumerate", "dags", "--n", "2")
        self.assertEqual(2, dags["count"])
        self.assertEqual("enumerate", dags["config"]["command"])
        self.assertIn("generatedAt", dags)
        self.assertEqual(8, self.call("enumerate", "dags", "--n", "3")["count"])
        self.assertEqual(10, self.call("enumerate", "combinations", "--n", "5", "--k", "3")["count"])
        self.assertEqual(6, self.call("enumerate", "fcg", "--n", "3")["count"])
        sym = self.call("enumerate", "sym", "--n", "3", "--graph", "[[], [0], [0]]")
        self.assertEqual([[0, 1, 2], [0, 2, 1]], [row["sigma"] for row in sym["rows"]])

    def test_enumerate_text(self):
        buffer = io.StringIO()
        with contextlib.redirect_stdout(buffer):
            self.assertEqual(0, main(["enumerate", "combinations", "--n", "4", "--k", "2", "--text"]))
        self.assertEqual(6, len(buffer.getvalue().splitlines()))

    def test_exit_codes(self):
        with contextlib.redirect_stderr(io.StringIO()):
            self.assertEqual(1, main(["enumerate", "dags", "--n", "9"]))
            self.assertEqual(2, main(["enumerate", "combinations", "--n", "4"]))
            self.assertEqual(1, main(["score", "--data", self.path("missing.csv")]))
            self.assertEqual(2, main(["score"]))
            with self.assertRaises(SystemExit) as ctx:
                main(["enumerate", "trees", "--n", "3"])
        self.assertEqual(2, ctx.exception.code)

    def test_score(self):
        self.assertEqual(12, self.call("score", "--data", self.data)["entryCount"])
        restricted = self.call("score", "--data", self.data, "--lmax", "1")
        self.assertEqual(9, restricted["entryCount"])
        self.assertEqual(["x0", "x1", "x2"], restricted["columns"])

    def test_posterior(self):
        unordered = self.call("posterior", "--data", self.data, "--feature", "edge:0-1", "--model", "unordered")
        ordered = self.call("posterior", "--data", self.data, "--feature", "edge:0-1", "--phi", "delta-id")
        self.assertAlmostEqual(unordered["featureValue"], ordered["featureValue"], delta=1e-12)

        per_graph = self.call("posterior", "--data", self.data, "--feature", "edge:0-1", "--model", "unordered",
                              "--per-graph")
        self.assertEqual(8, len(per_graph["perGraph"]))
        self.assertAlmostEqual(unordered["featureValue"], per_graph["featureValue"], delta=1e-12)

    def test_estimate(self):
        circuit = self.path("circuit.json")
        result = self.call("estimate", "--data", self.data, "--feature", "edge:2-0", "--emit-circuit", circuit)
        self.assertEqual("estimate", result["kind"])
        self.assertLess(result["discrepancy"], 1e-8)
        self.assertEqual(18, result["qubits"])

        simulated = self.call("simulate", circuit, "--qubits", "17,16", "--shots", "500", "--seed", "2")
        self.assertEqual(18, simulated["qubitCount"])
        self.assertAlmostEqual(1.0, simulated["norm"], places=10)
        self.assertAlmostEqual(result["denominator"]["z0"], simulated["claim"]["z0"], delta=1e-14)
        self.assertEqual(500, sum(simulated["histogram"].values()))

    def test_estimate_sampled(self):
        independent = self.path("independent.csv")
        write_dataset(independent, 3, 60, 4, copy_rate=0.0)
        result = self.call("estimate", "--data", independent, "--feature", "edge:0-1", "--mode", "sampled",
                           "--shots", "5000", "--seed", "11")
        self.assertEqual(5000, result["shots"])
        self.assertEqual(2, len(result["interval"]))
        self.assertEqual(11, result["config"]["seed"])
        self.assertGreater(result["denominator"]["counts"]["01"], 0)
        self.assertLessEqual(result["interval"][0], result["posterior"])
        self.assertLessEqual(result["posterior"], result["interval"][1])

    def test_qubit_bound_from_config(self):
        config = self.path("run.json")
        with open(config, "w") as writer:
            json.dump({"data": self.data, "bounds": {"qubits": 10}}, writer)
        with mock.patch.dict(os.environ):
            os.environ.pop(MAX_QUBITS_ENV, None)
            with contextlib.redirect_stderr(io.StringIO()):
                self.assertEqual(1, main(["estimate", "--config", config]))
            self.assertNotIn(MAX_QUBITS_ENV, os.environ)
            # the bound of one run does not leak into the next
            self.assertEqual(18, self.call("estimate", "--data", self.data, "--feature", "edge:0-1")["qubits"])

    def test_qubit_bound_for_simulate(self):
        circuit = self.path("circuit.json")
        self.call("estimate", "--data", self.data, "--feature", "edge:0-1", "--emit-circuit", circuit)
        config = self.path("run.json")
        with open(config, "w") as writer:
            json.dump({"bounds": {"qubits": 17}}, writer)
        with contextlib.redirect_stderr(io.StringIO()):
            self.assertEqual(1, main(["simulate", circuit, "--config", config]))

    def test_report(self):
        first = self.path("posterior.json")
        second = self.path("estimate.json")
        with contextlib.redirect_stderr(io.StringIO()):
            self.assertEqual(0, main(["posterior", "--data", self.data, "--feature", "edge:1-2", "-o", first]))
            self.assertEqual(0, main(["estimate", "--data", self.data, "--feature", "edge:1-2", "-o", second]))
        report = self.call("report", first, second)
        self.assertEqual({"posterior": 1, "estimate": 1}, report["kinds"])
        self.assertAlmostEqual(report["summary"]["posterior.json"]["featureValue"],
                               report["summary"]["estimate.json"]["posterior"], delta=1e-8)


class RunConfigTest(TestCase):
    def test_toml(self):
        with tempfile.TemporaryDirectory() as folder:
            path = os.path.join(folder, "run.toml")
            with open(path, "w") as writer:
                writer.write('feature = "edge:0-2"\nlmax = 1\nmode = "sampled"\nshots = 2000\n'
                             '[bounds]\nqubits = 20\n')
            config = RunConfig.from_file(path)
        self.assertEqual("edge:0-2", config.feature)
        self.assertEqual(1, config.lmax)
        self.assertEqual(2000, config.shots)
        self.assertEqual(20, config.bound("qubits", 26))
        self.assertEqual(26, config.bound("graphs", 26))

    def test_json_round_trip(self):
        config = RunConfig(command="posterior", phi="delta-id", seed=3)
        with tempfile.TemporaryDirectory() as folder:
            path = os.path.join(folder, "report.json")
            with open(path, "w") as writer:
                json.dump({"kind": "posterior", "config": config.to_dict()}, writer)
            again = RunConfig.from_file(path)
        self.assertEqual(config, again)
        self.assertEqual(-float("inf"), again.prior().log_phi(2, 0b001))

    def test_unknown_keys(self):
        with tempfile.TemporaryDirectory() as folder:
            path = os.path.join(folder, "run.json")
            with open(path, "w") as writer:
                json.dump({"shot": 10}, writer)
            with self.assertRaises(ValueError):
                RunConfig.from_file(path)
