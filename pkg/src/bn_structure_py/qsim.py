"""
Dense statevector simulation, amplitude amplification and sampling.

Basis indexing is little-endian: qubit q is bit q of the flat index. Viewed
as a tensor of shape (2,)*N, qubit q lives on axis N-1-q.
"""
import itertools
import json
import logging
import math
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .constants import MAX_QUBITS, MAX_QUBITS_ENV, NORM_TOLERANCE, RESIDUAL_TOLERANCE
from .exceptions import CircuitException, NoTargetException, SizeBoundException
from .interfaces import Control


# global logger object
_LOGGER = logging.getLogger(__name__)

HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])


def rot_y(theta: float) -> np.ndarray:
    """exp(-i σ_Y θ); maps |0> to cos θ |0> + sin θ |1>"""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def max_qubits() -> int:
    """The simulation bound, overridable through the environment"""
    value = os.environ.get(MAX_QUBITS_ENV)
    if value is None:
        return MAX_QUBITS
    try:
        return int(value)
    except ValueError:
        _LOGGER.warning(f"Ignoring non-integer {MAX_QUBITS_ENV}={value!r}")
        return MAX_QUBITS


class StateVector:
    """Amplitudes of an N-qubit register.

    :param qubit_count: Number of qubits
    :type qubit_count: int
    :param amplitudes: Optional flat array of 2^N amplitudes, |0...0> if omitted
    :type amplitudes: np.ndarray
    """

    def __init__(self, qubit_count: int, amplitudes: Optional[np.ndarray] = None):
        self.qubit_count = qubit_count
        if amplitudes is None:
            amplitudes = np.zeros(1 << qubit_count, dtype=np.complex128)
            amplitudes[0] = 1.0
        elif amplitudes.shape != (1 << qubit_count,):
            raise CircuitException(
                f"Expected {1 << qubit_count} amplitudes for {qubit_count} qubits, got {amplitudes.shape}.")
        self.amplitudes = np.asarray(amplitudes, dtype=np.complex128)

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.qubit_count)

    def axis(self, qubit: int) -> int:
        return self.qubit_count - 1 - qubit

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def index_of(self, bits: Dict[int, int]) -> int:
        """Flat index of the basis state with the given qubit values, all others 0"""
        return sum(value << qubit for qubit, value in bits.items())

    def amplitude(self, bits: Dict[int, int]) -> complex:
        return complex(self.amplitudes[self.index_of(bits)])

    def copy(self) -> "StateVector":
        return StateVector(self.qubit_count, self.amplitudes.copy())

    def dump(self, path) -> Tuple[Path, Path]:
        """Writes the amplitudes as little-endian complex doubles plus a JSON header"""
        path = Path(path)
        header = path.with_suffix(path.suffix + ".json")
        self.amplitudes.astype("<c16").tofile(path)
        header.write_text(json.dumps({
            "qubitCount": self.qubit_count,
            "dtype": "<c16",
            "order": "little-endian",
            "norm": self.norm(),
        }, indent=2))
        _LOGGER.debug(f"Dumped {self} to {path}")
        return path, header

    @classmethod
    def load(cls, path) -> "StateVector":
        path = Path(path)
        header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        amplitudes = np.fromfile(path, dtype=header["dtype"]).astype(np.complex128)
        return cls(header["qubitCount"], amplitudes)

    def __repr__(self):
        return f"StateVector(qubit_count={self.qubit_count}, norm={self.norm():.12f})"


def _selector(state: StateVector, controls: Iterable[Control]) -> List:
    index = [slice(None)] * state.qubit_count
    for c in controls:
        index[state.axis(c.qubit)] = c.polarity
    return index


def apply_matrix(state: StateVector, target: int, matrix: np.ndarray, controls: Sequence[Control] = ()):
    """Apply a 2x2 matrix to ``target`` on the subspace where every control holds"""
    psi = state.tensor
    index = _selector(state, controls)
    zero, one = list(index), list(index)
    zero[state.axis(target)] = 0
    one[state.axis(target)] = 1
    zero, one = tuple(zero), tuple(one)

    v0 = psi[zero].copy()
    v1 = psi[one].copy()
    psi[zero] = matrix[0, 0] * v0 + matrix[0, 1] * v1
    psi[one] = matrix[1, 0] * v0 + matrix[1, 1] * v1


def reflect_register(state: StateVector, targets: Sequence[int], weight: int):
    """Householder reflection exchanging |0...0> with the uniform superposition
       of all weight-``weight`` patterns on ``targets``. Self-inverse.
    """
    if not 0 < weight <= len(targets):
        raise CircuitException(f"Cannot prepare weight {weight} on {len(targets)} qubits.")

    psi = state.tensor
    base = [slice(None)] * state.qubit_count
    for q in targets:
        base[state.axis(q)] = 0

    patterns = []
    for chosen in itertools.combinations(targets, weight):
        index = list(base)
        for q in chosen:
            index[state.axis(q)] = 1
        patterns.append(tuple(index))

    scale = 1.0 / math.sqrt(len(patterns))
    zero = tuple(base)
    a = psi[zero].copy()
    values = [psi[index].copy() for index in patterns]
    d = scale * sum(values)
    shift = scale * (a - d)

    psi[zero] = d
    for index, value in zip(patterns, values):
        psi[index] = value + shift


class Projector:
    """Product of single-qubit basis projectors, identity elsewhere.

    :param assignments: qubit -> required basis value
    :type assignments: dict
    """

    def __init__(self, assignments: Dict[int, int]):
        self.assignments = dict(assignments)

    def mask(self, qubit_count: int) -> np.ndarray:
        indices = np.arange(1 << qubit_count)
        keep = np.ones(1 << qubit_count, dtype=bool)
        for qubit, value in self.assignments.items():
            keep &= ((indices >> qubit) & 1) == value
        return keep

    def apply(self, state: StateVector) -> StateVector:
        """P|s>, left unnormalized"""
        out = np.where(self.mask(state.qubit_count), state.amplitudes, 0.0)
        return StateVector(state.qubit_count, out.astype(np.complex128))

    def to_dict(self) -> dict:
        return {"kind": "projector", "assignments": {str(q): v for q, v in sorted(self.assignments.items())}}

    def __repr__(self):
        return f"Projector({self.assignments})"


def run(circuit, bound: Optional[int] = None, check_norm: bool = True) -> StateVector:
    """Applies every gate of ``circuit`` in order to |0...0>.

    :param circuit: The circuit, anything with ``qubit_count`` and ``gates``
    :param bound: Optional qubit bound; defaults to the environment or MAX_QUBITS
    :type bound: int
    :param check_norm: Verify the norm after every gate
    :type check_norm: bool
    :return: The final state
    :rtype: StateVector
    """
    limit = max_qubits() if bound is None else bound
    if circuit.qubit_count > limit:
        _LOGGER.error(f"Circuit needs {circuit.qubit_count} qubits, bound is {limit}")
        raise SizeBoundException(
            f"Simulating {circuit.qubit_count} qubits exceeds the bound of {limit} (set {MAX_QUBITS_ENV}).")

    state = StateVector(circuit.qubit_count)
    for position, gate in enumerate(circuit.gates):
        gate.apply(state)
        if check_norm:
            drift = abs(state.norm() - 1.0)
            if drift > NORM_TOLERANCE:
                _LOGGER.error(f"Norm drifted by {drift} after gate {position} ({gate.kind})")
                raise CircuitException(f"Gate {position} ({gate.kind}) is not norm preserving.")

    _LOGGER.debug(f"Ran {len(circuit.gates)} gates on {circuit.qubit_count} qubits")
    return state


class AmplitudePair:
    """The two claim amplitudes read out of a prepared state"""

    def __init__(self, z1: complex, z0: complex, residual: float = 0.0):
        self.z1 = complex(z1)
        self.z0 = complex(z0)
        self.residual = residual

    @property
    def ratio(self) -> float:
        return abs(self.z1) / abs(self.z0)

    def to_dict(self) -> dict:
        return {"z1": self.z1.real, "z1Imag": self.z1.imag, "z0": self.z0.real, "z0Imag": self.z0.imag,
                "residual": self.residual}

    def __repr__(self):
        return f"AmplitudePair(z1={self.z1}, z0={self.z0}, residual={self.residual})"


def claim_indices(layout) -> Tuple[int, int]:
    """Flat indices of the z1 and z0 basis states of a layout"""
    ones = {q: 1 for q in layout.alpha}
    z1 = {**ones, layout.mu0: 1, layout.gamma: 1}
    z0 = dict(ones)
    return (sum(1 << q for q, v in z1.items() if v),
            sum(1 << q for q, v in z0.items() if v))


def extract_claim_amplitudes(s: StateVector, layout, tolerance: float = RESIDUAL_TOLERANCE) -> AmplitudePair:
    """Reads z1 and z0 and asserts that nothing else survives in ω=0.

    :param s: A prepared (possibly amplified) state
    :type s: StateVector
    :param layout: The layout the circuit was built for
    :type layout: QubitLayout
    :raises CircuitException: When an ω=0 amplitude outside the two basis states exceeds ``tolerance``
    """
    if s.qubit_count != layout.total_qubits:
        raise CircuitException(f"State has {s.qubit_count} qubits, layout has {layout.total_qubits}.")

    i1, i0 = claim_indices(layout)
    z1, z0 = s.amplitudes[i1], s.amplitudes[i0]

    rest = np.where(Projector({layout.omega: 0}).mask(s.qubit_count), s.amplitudes, 0.0)
    rest[i1] = 0.0
    rest[i0] = 0.0
    residual = float(np.max(np.abs(rest))) if rest.size else 0.0
    if residual > tolerance:
        _LOGGER.error(f"Residual ω=0 amplitude {residual} outside the claimed support")
        raise CircuitException(f"Residual ω=0 amplitude {residual} exceeds {tolerance}.")

    return AmplitudePair(z1, z0, residual)


def target_weight(s: StateVector, target: Projector) -> float:
    """‖P s‖²"""
    return float(np.sum(s.probabilities()[target.mask(s.qubit_count)]))


def optimal_iterations(p: float) -> int:
    """round(π / (4 asin √p) - 1/2), never negative"""
    if p <= 0.0:
        raise NoTargetException("The target weight is zero.")
    if p >= 1.0:
        return 0
    return max(0, round(math.pi / (4.0 * math.asin(math.sqrt(p))) - 0.5))


def amplify(s: StateVector, target: Projector, iterations: int) -> StateVector:
    """Applies the Grover iterate (2|s><s| - I)(I - 2P) ``iterations`` times
       to |s>.

    :raises NoTargetException: When ‖P s‖ = 0
    """
    if iterations < 0:
        raise ValueError("iterations must be non-negative.")

    p = target_weight(s, target)
    if p <= 0.0:
        _LOGGER.error("Cannot amplify a state without target weight")
        raise NoTargetException("The target weight is zero.")
    if iterations == 0 or p >= 1.0 - NORM_TOLERANCE:
        return s.copy()

    mask = target.mask(s.qubit_count)
    start = s.amplitudes
    psi = start.copy()
    for _ in range(iterations):
        psi[mask] *= -1.0
        psi = 2.0 * np.vdot(start, psi) * start - psi

    out = StateVector(s.qubit_count, psi)
    _LOGGER.debug(f"Amplified {iterations} times: target weight {p} -> {target_weight(out, target)}")
    return out


def marginal_probabilities(s: StateVector, qubits: Sequence[int]) -> Dict[str, float]:
    """Distribution of the listed qubits; character i of a key is qubit ``qubits[i]``"""
    if not qubits:
        raise ValueError("Need at least one qubit.")
    if len(set(qubits)) != len(qubits) or any(not 0 <= q < s.qubit_count for q in qubits):
        raise CircuitException(f"Invalid qubit list {list(qubits)}.")

    probabilities = np.abs(s.tensor) ** 2
    axes = [s.axis(q) for q in qubits]
    others = tuple(a for a in range(s.qubit_count) if a not in axes)
    marginal = np.transpose(probabilities.sum(axis=others, keepdims=True), axes + list(others))
    marginal = marginal.reshape((2,) * len(qubits))

    return {"".join(map(str, bits)): float(marginal[bits])
            for bits in itertools.product((0, 1), repeat=len(qubits))}


def sample(s: StateVector, qubits: Sequence[int], shots: int, seed: int) -> Dict[str, int]:
    """Draws ``shots`` outcomes of ``qubits`` from the marginal distribution.

    :return: Histogram of the observed bitstrings
    :rtype: dict
    """
    if shots < 1:
        raise ValueError("shots must be at least 1.")
    marginal = marginal_probabilities(s, qubits)
    outcomes = list(marginal)
    p = np.array([marginal[o] for o in outcomes])
    p = p / p.sum()

    rng = np.random.default_rng(seed)
    drawn = rng.multinomial(shots, p)
    return {outcome: int(count) for outcome, count in zip(outcomes, drawn) if count}
