"""
Gate-level IR and construction of the |s> state-preparation circuit.

Qubit ids are assigned in register order: α_0..α_{n-1}, then the β selector
qubits level by level, then γ, μ₀ and ω.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

from .exceptions import CircuitException, DimensionMismatchException
from .graphs import (format_set, iter_permutations, log_factorial_stirling, members, node_subset_pairs, popcount,
                     total_selector_width)
from .interfaces import Control, Gate
from .qsim import HADAMARD, PAULI_X, Projector, apply_matrix, reflect_register, rot_y
from .scoring import NEG_INF, LocalScoreTable


# global logger object
_LOGGER = logging.getLogger(__name__)


class QubitLayout:
    """Register allocation of the preparation circuit.

    :param n: Number of nodes
    :type n: int
    :param lmax: Optional in-degree bound; levels 0..lmax are kept
    :type lmax: int
    """

    def __init__(self, n: int, lmax: Optional[int] = None):
        if n < 1:
            raise ValueError("A layout needs at least one node.")
        if lmax is not None and lmax < 0:
            raise ValueError("lmax must be non-negative.")
        self.n = n
        self.lmax = lmax
        self.kept_levels = n if lmax is None else min(lmax + 1, n)

        self.alpha = list(range(n))
        self.beta_levels: List[List[int]] = []
        self.pairs: List[List[Tuple[int, int]]] = []
        next_id = n
        for level in range(self.kept_levels):
            level_pairs = node_subset_pairs(n, level)
            self.pairs.append(level_pairs)
            self.beta_levels.append(list(range(next_id, next_id + len(level_pairs))))
            next_id += len(level_pairs)

        self.gamma = next_id
        self.mu0 = next_id + 1
        self.omega = next_id + 2

    @property
    def restricted(self) -> bool:
        return self.kept_levels < self.n

    @property
    def beta(self) -> List[int]:
        return [q for level in self.beta_levels for q in level]

    @property
    def total_qubits(self) -> int:
        return self.n + len(self.beta) + 3

    @property
    def mu_register(self) -> List[int]:
        return self.alpha + [self.mu0]

    @property
    def nu_register(self) -> List[int]:
        return self.beta + [self.gamma]

    def selector_widths(self) -> List[int]:
        return [len(level) for level in self.beta_levels]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "lmax": self.lmax,
            "alpha": self.alpha,
            "betaLevels": [
                [{"qubit": q, "node": j, "parents": list(members(S))} for q, (j, S) in zip(qubits, pairs)]
                for qubits, pairs in zip(self.beta_levels, self.pairs)
            ],
            "gamma": self.gamma,
            "mu0": self.mu0,
            "omega": self.omega,
            "totalQubits": self.total_qubits,
        }

    def __repr__(self):
        return f"QubitLayout(n={self.n}, lmax={self.lmax}, widths={self.selector_widths()}, " \
               f"total_qubits={self.total_qubits})"


def _controls_to_list(controls: Sequence[Control]) -> List[dict]:
    return [c.to_dict() for c in controls]


def _controls_from_list(data: Sequence[dict]) -> Tuple[Control, ...]:
    return tuple(Control(int(c["qubit"]), int(c.get("polarity", 1))) for c in data)


class UnaryPrepare(Gate):
    """|0...0> -> (1/√N) Σ_c |one-hot c>. Forward and inverse share one
       self-inverse reflection.
    """

    kind = "unary_prepare"

    def __init__(self, targets: Sequence[int], inverse: bool = False):
        self.targets = tuple(targets)
        self.inverse = inverse

    def qubits(self) -> Tuple[int, ...]:
        return self.targets

    def apply(self, state):
        reflect_register(state, self.targets, 1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "targets": list(self.targets),
                "direction": "inverse" if self.inverse else "forward"}

    def __repr__(self):
        return f"UnaryPrepare(targets={list(self.targets)}, inverse={self.inverse})"


class MatrixGate(Gate):
    """A controlled 2x2 gate on one target"""

    kind = "matrix"

    def __init__(self, target: int, controls: Sequence[Control] = ()):
        self.target = target
        self.controls = tuple(controls)

    def matrix(self):
        raise NotImplementedError

    def qubits(self) -> Tuple[int, ...]:
        return (self.target,) + tuple(c.qubit for c in self.controls)

    def apply(self, state):
        apply_matrix(state, self.target, self.matrix(), self.controls)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "target": self.target, "controls": _controls_to_list(self.controls)}

    def __repr__(self):
        return f"{type(self).__name__}(target={self.target}, controls={len(self.controls)})"


class RotY(MatrixGate):
    kind = "ry"

    def __init__(self, target: int, angle: float, controls: Sequence[Control] = ()):
        super().__init__(target, controls)
        self.angle = angle

    def matrix(self):
        return rot_y(self.angle)

    def to_dict(self) -> dict:
        return dict(super().to_dict(), angle=self.angle)


class Hadamard(MatrixGate):
    kind = "h"

    def matrix(self):
        return HADAMARD


class X(MatrixGate):
    kind = "x"

    def matrix(self):
        return PAULI_X


class CNOT(X):
    kind = "cnot"

    def __init__(self, control: int, target: int):
        super().__init__(target, (Control(control, 1),))

    @property
    def control(self) -> int:
        return self.controls[0].qubit

    def to_dict(self) -> dict:
        return {"kind": self.kind, "control": self.control, "target": self.target}


class Halfmoon(Gate):
    """Two-mode gate on α_j: R_y(θ) when γ = 1 and H when γ = 0, both gated
       by the selector qubit and the α qubits of the parent set.
    """

    kind = "halfmoon"

    def __init__(self, target: int, angle: float, selector: Control,
                 alpha_controls: Sequence[Control], gamma: int):
        self.target = target
        self.angle = angle
        self.selector = selector
        self.alpha_controls = tuple(alpha_controls)
        self.gamma = gamma

    def qubits(self) -> Tuple[int, ...]:
        return (self.target, self.selector.qubit, self.gamma) + tuple(c.qubit for c in self.alpha_controls)

    def apply(self, state):
        controls = (self.selector,) + self.alpha_controls
        apply_matrix(state, self.target, rot_y(self.angle), controls + (Control(self.gamma, 1),))
        apply_matrix(state, self.target, HADAMARD, controls + (Control(self.gamma, 0),))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "target": self.target, "angle": self.angle,
                "selector": self.selector.to_dict(), "alphaControls": _controls_to_list(self.alpha_controls),
                "gamma": self.gamma}

    def __repr__(self):
        return f"Halfmoon(target={self.target}, angle={self.angle}, selector={self.selector.qubit})"


def gate_from_dict(data: dict) -> Gate:
    kind = data.get("kind")
    direction = data.get("direction", "forward") == "inverse"
    if kind == UnaryPrepare.kind:
        return UnaryPrepare(data["targets"], direction)
    if kind == RotY.kind:
        return RotY(data["target"], float(data["angle"]), _controls_from_list(data.get("controls", [])))
    if kind == Hadamard.kind:
        return Hadamard(data["target"], _controls_from_list(data.get("controls", [])))
    if kind == X.kind:
        return X(data["target"], _controls_from_list(data.get("controls", [])))
    if kind == CNOT.kind:
        return CNOT(data["control"], data["target"])
    if kind == Halfmoon.kind:
        return Halfmoon(data["target"], float(data["angle"]), _controls_from_list([data["selector"]])[0],
                        _controls_from_list(data.get("alphaControls", [])), data["gamma"])
    raise CircuitException(f"Unknown gate kind {kind!r}.")


class Circuit:
    """Ordered gate list on ``qubit_count`` qubits.

    :param qubit_count: Number of qubits
    :type qubit_count: int
    :param layout: Optional layout the circuit was built for
    :type layout: QubitLayout
    """

    def __init__(self, qubit_count: int, layout: Optional[QubitLayout] = None):
        self.qubit_count = qubit_count
        self.layout = layout
        self.gates: List[Gate] = []

    def append(self, gate: Gate) -> "Circuit":
        qubits = gate.qubits()
        if len(set(qubits)) != len(qubits):
            _LOGGER.error(f"Gate {gate} repeats a qubit")
            raise CircuitException(f"Gate {gate.kind} uses a qubit twice: {list(qubits)}.")
        if any(not 0 <= q < self.qubit_count for q in qubits):
            _LOGGER.error(f"Gate {gate} leaves the register of {self.qubit_count} qubits")
            raise CircuitException(f"Gate {gate.kind} has a qubit outside 0..{self.qubit_count - 1}.")
        self.gates.append(gate)
        return self

    def count(self, kind: str) -> int:
        return sum(1 for g in self.gates if g.kind == kind)

    def to_dict(self) -> dict:
        data = {"kind": "circuit", "qubitCount": self.qubit_count, "gates": [g.to_dict() for g in self.gates]}
        if self.layout is not None:
            data["layout"] = self.layout.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Circuit":
        layout = None
        if "layout" in data:
            layout = QubitLayout(data["layout"]["n"], data["layout"].get("lmax"))
            if layout.total_qubits != data["qubitCount"]:
                raise CircuitException("Layout block does not match the qubit count.")
        circuit = cls(int(data["qubitCount"]), layout)
        for gate in data.get("gates", []):
            circuit.append(gate_from_dict(gate))
        return circuit

    def __len__(self):
        return len(self.gates)

    def __repr__(self):
        return f"Circuit(qubit_count={self.qubit_count}, gates={len(self.gates)})"


class AngleTable:
    """θ_{j|S} in [0, π/2] with sin θ = h(j|S) / (c_{|S|} d_j).

    :param n: Number of nodes
    :type n: int
    :param theta: Angles keyed by (j, S mask)
    :type theta: dict
    :param level_scale: log c_ℓ per kept level, including any scale already
        divided out of the source table
    :type level_scale: Sequence[float]
    :param node_scale: Optional log d_j per node, all zero when omitted
    :type node_scale: Sequence[float]
    """

    def __init__(self, n: int, theta: Dict[Tuple[int, int], float], level_scale: Sequence[float],
                 node_scale: Optional[Sequence[float]] = None):
        self.n = n
        self.theta = dict(theta)
        self.level_scale = tuple(level_scale)
        self.node_scale = tuple(node_scale) if node_scale is not None else (0.0,) * n

    @property
    def kept_levels(self) -> int:
        return len(self.level_scale)

    @property
    def log_scale(self) -> float:
        """log of the factor divided out of every order product"""
        return sum(self.level_scale) + sum(self.node_scale)

    def sin(self, j: int, S: int) -> float:
        return math.sin(self.theta[(j, S)])

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "levelScale": list(self.level_scale),
            "nodeScale": list(self.node_scale),
            "theta": [{"node": j, "parents": list(members(S)), "angle": value}
                      for (j, S), value in sorted(self.theta.items(), key=lambda kv: (popcount(kv[0][1]), kv[0]))],
        }

    def __repr__(self):
        return f"AngleTable(n={self.n}, angles={len(self.theta)}, level_scale={self.level_scale})"


def _level_maxima(t: LocalScoreTable, node_scale: Sequence[float]) -> List[float]:
    scales = []
    for level in range(t.top_level + 1):
        values = [value - node_scale[j] for (j, _), value in t.level_entries(level)]
        m = max(values) if values else NEG_INF
        scales.append(m if m != NEG_INF else 0.0)
    return scales


def level_scales(t: LocalScoreTable) -> List[float]:
    """log c_ℓ = log of the largest h at each level, 0 when the level is all zero"""
    return _level_maxima(t, [0.0] * t.n)


def encoding_scales(t: LocalScoreTable) -> Tuple[List[float], List[float]]:
    """(node_scale, level_scale) used to encode a table.

    Every order product has exactly one factor per level. When all levels
    are kept it also has exactly one factor per node, so node j is first
    divided by d_j, its largest h, and each level by the largest remaining
    value. With an in-degree bound only the level scales apply.
    """
    if t.top_level < t.n - 1:
        return [0.0] * t.n, level_scales(t)

    node_scale = []
    for j in range(t.n):
        values = [value for (k, _), value in t.items() if k == j]
        m = max(values) if values else NEG_INF
        node_scale.append(m if m != NEG_INF else 0.0)
    return node_scale, _level_maxima(t, node_scale)


def angles_from_scores(
    t: LocalScoreTable,
    level_scale: Optional[Sequence[float]] = None,
    node_scale: Optional[Sequence[float]] = None
) -> AngleTable:
    """Encode h(j|S) as sin θ_{j|S} after dividing by d_j and c_{|S|}.

    :param t: The score table
    :type t: LocalScoreTable
    :param level_scale: Optional log c_ℓ to use instead of the table's own level maxima
    :type level_scale: Sequence[float]
    :param node_scale: Optional log d_j per node, none when omitted
    :type node_scale: Sequence[float]
    :return: The angle table
    :rtype: AngleTable
    """
    nodes = list(node_scale) if node_scale is not None else [0.0] * t.n
    if len(nodes) != t.n:
        raise DimensionMismatchException(f"Need {t.n} node scales, got {len(nodes)}.")
    if any(value != 0.0 for value in nodes) and t.top_level < t.n - 1:
        raise CircuitException("Node scales change the sum when levels are dropped.")
    scales = list(_level_maxima(t, nodes) if level_scale is None else level_scale)
    if len(scales) != t.top_level + 1:
        raise DimensionMismatchException(f"Need {t.top_level + 1} level scales, got {len(scales)}.")

    theta = {}
    for (j, S), log_h in t.items():
        if log_h == NEG_INF:
            theta[(j, S)] = 0.0
            continue
        x = math.exp(log_h - nodes[j] - scales[popcount(S)])
        if x > 1.0:
            if x > 1.0 + 1e-9:
                _LOGGER.error(f"h({j}|{format_set(S)}) exceeds its level scale by {x - 1.0}")
                raise CircuitException(f"h({j}|{format_set(S)}) is larger than the level scale.")
            _LOGGER.warning(f"Clipping arcsin argument {x} for h({j}|{format_set(S)})")
            x = 1.0
        theta[(j, S)] = math.asin(x)

    combined = [a + b for a, b in zip(t.level_scale, scales)]
    return AngleTable(t.n, theta, combined, nodes)


def epsilon(layout: QubitLayout) -> float:
    """ε = Π_ℓ 1/N₂(β;ℓ) over the kept levels"""
    value = 1.0
    for width in layout.selector_widths():
        value /= width
    return value


def resource_estimate(layout: QubitLayout) -> dict:
    """Register widths and the expected size of z0 for a layout.

    ``logZ0`` uses Stirling's log n! so it stays cheap for n far beyond
    anything the simulator can hold.
    """
    n, k = layout.n, layout.kept_levels
    log_eps = math.log(epsilon(layout))
    log_z0 = (log_eps - 0.5 * math.log(2.0) + log_factorial_stirling(n) - log_factorial_stirling(n - k)
              - 0.5 * n * math.log(2.0))
    return {
        "qubits": layout.total_qubits,
        "selectorQubits": total_selector_width(n, layout.lmax),
        "selectorWidths": layout.selector_widths(),
        "logEpsilon": log_eps,
        "logFactorial": log_factorial_stirling(n),
        "logZ0": log_z0,
    }


def build_state_prep(layout: QubitLayout, a: AngleTable, lmax: Optional[int] = None) -> Circuit:
    """Emits the preparation circuit of |s>.

    :param layout: Register allocation
    :type layout: QubitLayout
    :param a: Angles for every kept (j, S)
    :type a: AngleTable
    :param lmax: Optional in-degree bound; must agree with the layout
    :type lmax: int
    :return: The circuit
    :rtype: Circuit
    """
    if a.n != layout.n:
        raise CircuitException(f"Angle table has n={a.n}, layout has n={layout.n}.")
    if lmax is not None and lmax >= layout.n:
        raise CircuitException(f"lmax={lmax} must be smaller than n={layout.n}.")
    if QubitLayout(layout.n, lmax).kept_levels != layout.kept_levels:
        raise CircuitException(f"lmax={lmax} disagrees with the layout (lmax={layout.lmax}).")
    if a.kept_levels != layout.kept_levels:
        raise CircuitException(f"Angle table covers {a.kept_levels} levels, layout keeps {layout.kept_levels}.")

    circuit = Circuit(layout.total_qubits, layout)
    circuit.append(X(layout.omega))
    circuit.append(Hadamard(layout.gamma))
    circuit.append(CNOT(layout.gamma, layout.mu0))

    last = layout.kept_levels - 1
    for level, (qubits, pairs) in enumerate(zip(layout.beta_levels, layout.pairs)):
        _LOGGER.debug(f"Level {level}: {len(qubits)} selector qubits")
        circuit.append(UnaryPrepare(qubits))
        for qubit, (j, S) in zip(qubits, pairs):
            try:
                angle = a.theta[(j, S)]
            except KeyError:
                raise CircuitException(f"No angle for h({j}|{format_set(S)}).")
            parents = [Control(layout.alpha[k], 1) for k in members(S)]
            circuit.append(Halfmoon(layout.alpha[j], angle, Control(qubit, 1), parents, layout.gamma))
            if layout.restricted and level == last:
                # the dropped levels contribute h = 1 for every remaining node
                for r in range(layout.n):
                    if r != j and not S >> r & 1:
                        circuit.append(Halfmoon(layout.alpha[r], math.pi / 2, Control(qubit, 1), parents,
                                                layout.gamma))
        circuit.append(UnaryPrepare(qubits, inverse=True))

    controls = [Control(q, 1) for q in layout.alpha] + [Control(q, 0) for q in layout.beta]
    circuit.append(X(layout.omega, controls))

    _LOGGER.info(f"Built {circuit} for {layout}")
    return circuit


def target_projector(layout: QubitLayout) -> Projector:
    """P_0 on ω, identity elsewhere"""
    return Projector({layout.omega: 0})


def restricted_order_sum(a: AngleTable) -> float:
    """Σ_σ Π_{ℓ<k} sin θ(σ_ℓ|σ_{<ℓ}) over all of Sym_n"""
    total = 0.0
    for p in iter_permutations(a.n):
        term = 1.0
        for i in range(a.kept_levels):
            term *= a.sin(p.sigma[i], p.predecessors(i))
        total += term
    return total


def claim_amplitudes(a: AngleTable, n: int, lmax: Optional[int] = None) -> Tuple[float, float]:
    """Classical (z1, z0) of the circuit built from ``a``.

    With k kept levels,
    z1 = (ε/√2) Σ'/(n-k)!  and  z0 = (ε/√2) n!/(n-k)! 2^{-n/2},
    so k = n-1 gives z1 = (ε/√2) Σ' and z0 = ε n!/√2^{n+1}.
    """
    if a.n != n:
        raise DimensionMismatchException(f"Angle table has n={a.n}, expected {n}.")
    layout = QubitLayout(n, lmax)
    k = layout.kept_levels
    if a.kept_levels != k:
        raise DimensionMismatchException(f"Angle table covers {a.kept_levels} levels, expected {k}.")

    prefactor = epsilon(layout) / math.sqrt(2.0) / math.factorial(n - k)
    z1 = prefactor * restricted_order_sum(a)
    z0 = prefactor * math.factorial(n) * 2.0 ** (-n / 2.0)
    return z1, z0
