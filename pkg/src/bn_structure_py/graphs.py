"""
Combinatorics of parent-set graphs, node orders and modular feature sets.

Parent sets are int bit masks: bit k of ``parents[j]`` is set iff k is a
parent of node j.
"""
import inspect
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import wraps
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .constants import MAX_COLUMNS, MAX_GRAPH_NODES, MAX_PERMUTATION_NODES
from .exceptions import DimensionMismatchException, InvalidFeatureException, SizeBoundException


# global logger object
_LOGGER = logging.getLogger(__name__)


def within_bound(default_bound: int, what: str):
    """
    Decorator to make sure the node count of the first argument does not
    exceed an enumeration bound. The bound can be overridden per call
    through the ``bound`` keyword; functions that declare ``bound`` themselves
    receive it as well.
    """

    def decorator(func):
        forwards = "bound" in inspect.signature(func).parameters

        @wraps(func)
        def wrapper(first, *args, bound: Optional[int] = None, **kwargs):
            n = first if isinstance(first, int) else first.n
            limit = default_bound if bound is None else bound

            if n > limit:
                _LOGGER.error(f"{func.__name__}: n={n} exceeds the {what} bound of {limit}")
                raise SizeBoundException(f"n={n} exceeds the {what} enumeration bound ({limit}).")

            if forwards:
                kwargs["bound"] = bound
            return func(first, *args, **kwargs)

        return wrapper

    return decorator


def mask_of(nodes: Iterable[int]) -> int:
    """Encode a collection of nodes as a bit mask"""
    mask = 0
    for k in nodes:
        mask |= 1 << k
    return mask


def members(mask: int) -> Tuple[int, ...]:
    """Decode a bit mask into the ascending tuple of its nodes"""
    nodes = []
    k = 0
    while mask:
        if mask & 1:
            nodes.append(k)
        mask >>= 1
        k += 1
    return tuple(nodes)


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def format_set(mask: int) -> str:
    """Set notation for a node set, largest node first, eg. {1,0}"""
    if mask == 0:
        return "∅"
    return "{" + ",".join(str(k) for k in reversed(members(mask))) + "}"


def submasks(mask: int) -> Iterator[int]:
    """All subsets of ``mask``, including the empty set and ``mask`` itself"""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


@dataclass(frozen=True)
class Graph:
    """A member of B_n: one parent set per node.

    :param n: The number of nodes
    :type n: int
    :param parents: ``parents[j]`` is the bit mask of pa_j
    :type parents: tuple
    """
    n: int
    parents: Tuple[int, ...]

    def __post_init__(self):
        if self.n < 1 or self.n > MAX_COLUMNS:
            raise SizeBoundException(f"Graphs need 1..{MAX_COLUMNS} nodes, got {self.n}.")
        if len(self.parents) != self.n:
            raise DimensionMismatchException(
                f"Graph with n={self.n} needs {self.n} parent sets, got {len(self.parents)}.")
        full = (1 << self.n) - 1
        for j, pa in enumerate(self.parents):
            if pa & ~full:
                raise DimensionMismatchException(f"Parent set of node {j} references nodes >= {self.n}.")
        object.__setattr__(self, "parents", tuple(int(pa) for pa in self.parents))

    @classmethod
    def from_sets(cls, parent_sets: Sequence[Iterable[int]]) -> "Graph":
        """Build a graph from per-node parent collections, indexed by node"""
        return cls(len(parent_sets), tuple(mask_of(pa) for pa in parent_sets))

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n, (0,) * n)

    def parent_set(self, j: int) -> Tuple[int, ...]:
        return members(self.parents[j])

    def is_subgraph_of(self, other: "Graph") -> bool:
        """G ⊂ G' in the sense pa(j, G) ⊂ pa(j, G') for all j"""
        if other.n != self.n:
            raise DimensionMismatchException("Cannot compare graphs of different size.")
        return all(pa & ~opa == 0 for pa, opa in zip(self.parents, other.parents))

    def edge_count(self) -> int:
        return sum(popcount(pa) for pa in self.parents)

    def to_dict(self) -> dict:
        return {"n": self.n, "parents": [list(members(pa)) for pa in self.parents]}

    @classmethod
    def from_dict(cls, data: dict) -> "Graph":
        graph = cls.from_sets(data["parents"])
        if graph.n != data["n"]:
            raise DimensionMismatchException("Graph 'n' does not match the number of parent lists.")
        return graph

    def __str__(self):
        return "(" + ",".join(format_set(pa) for pa in reversed(self.parents)) + ")"


@dataclass(frozen=True)
class Permutation:
    """A node order σ. ``sigma[i]`` is the node at position i (i^σ),
       ``tau`` is the inverse map (the position of every node).
    """
    sigma: Tuple[int, ...]
    tau: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sigma = tuple(int(s) for s in self.sigma)
        if sorted(sigma) != list(range(len(sigma))):
            raise ValueError(f"{sigma} is not a permutation of 0..{len(sigma) - 1}.")
        tau = [0] * len(sigma)
        for i, s in enumerate(sigma):
            tau[s] = i
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "tau", tuple(tau))

    @property
    def n(self) -> int:
        return len(self.sigma)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def from_tau(cls, tau: Sequence[int]) -> "Permutation":
        sigma = [0] * len(tau)
        for node, position in enumerate(tau):
            sigma[position] = node
        return cls(tuple(sigma))

    def predecessors(self, i: int) -> int:
        """Mask of {<i}^σ, the nodes placed before position i"""
        return mask_of(self.sigma[:i])

    def apply_to_mask(self, mask: int) -> int:
        """Image of a node set under σ"""
        return mask_of(self.sigma[k] for k in members(mask))

    def to_list(self) -> List[int]:
        return list(self.sigma)


def is_dag(g: Graph) -> bool:
    """Tests whether the graph with edges k -> j for all k in pa_j is acyclic.
       Nodes whose parents have all been removed are removed repeatedly; the
       graph is acyclic iff every node gets removed.

    :param g: The graph to test
    :type g: Graph
    :return: True if the graph has no directed cycle
    :rtype: bool
    """
    removed = 0
    remaining = set(range(g.n))

    while remaining:
        ready = [j for j in remaining if g.parents[j] & ~removed == 0]
        if not ready:
            return False
        for j in ready:
            removed |= 1 << j
            remaining.discard(j)

    return True


def _ordered_subsets(j: int) -> List[int]:
    # indicator vectors (x_0, .., x_{j-1}) in lexicographic order, node 0 most significant
    return [sum(bit << k for k, bit in enumerate(bits)) for bits in itertools.product((0, 1), repeat=j)]


@within_bound(MAX_GRAPH_NODES, "graph")
def enumerate_dags(n: int) -> List[Graph]:
    """Enumerates DAG_n, the graphs with pa_j ⊂ {<j}. The parent set of the
       highest node varies slowest.

    :param n: The number of nodes
    :type n: int
    :return: The 2^(n(n-1)/2) graphs
    :rtype: list
    """
    choices = [_ordered_subsets(j) for j in reversed(range(n))]
    graphs = [Graph(n, tuple(reversed(combo))) for combo in itertools.product(*choices)]
    _LOGGER.debug(f"Enumerated {len(graphs)} graphs in DAG_{n}")
    return graphs


def graphs_below(top: Graph) -> Iterator[Graph]:
    """All graphs G ⊂ top, each parent set running over the submasks of top's"""
    choices = [list(submasks(pa)) for pa in top.parents]
    for combo in itertools.product(*choices):
        yield Graph(top.n, tuple(combo))


def next_permutation(items: List[int]) -> bool:
    """Advance ``items`` in place to its lexicographic successor.

    :return: False if ``items`` was the last permutation
    :rtype: bool
    """
    i = len(items) - 2
    while i >= 0 and items[i] >= items[i + 1]:
        i -= 1
    if i < 0:
        return False
    k = len(items) - 1
    while items[k] <= items[i]:
        k -= 1
    items[i], items[k] = items[k], items[i]
    items[i + 1:] = reversed(items[i + 1:])
    return True


def iter_permutations(n: int) -> Iterator[Permutation]:
    """Sym_n in lexicographic order, without a size check"""
    items = list(range(n))
    while True:
        yield Permutation(tuple(items))
        if not next_permutation(items):
            return


@within_bound(MAX_PERMUTATION_NODES, "permutation")
def enumerate_permutations(n: int) -> List[Permutation]:
    return list(iter_permutations(n))


def fcg_sigma(p: Permutation) -> Graph:
    """The fully connected DAG FCG_n^σ: node σ[i] has the parents {σ[k] : k < i}"""
    parents = [0] * p.n
    for i, node in enumerate(p.sigma):
        parents[node] = p.predecessors(i)
    return Graph(p.n, tuple(parents))


def consistent(g: Graph, p: Permutation) -> bool:
    """G is consistent with σ iff G ⊂ FCG_n^σ"""
    if g.n != p.n:
        raise DimensionMismatchException(f"Graph has {g.n} nodes but the permutation has {p.n}.")
    return g.is_subgraph_of(fcg_sigma(p))


@within_bound(MAX_PERMUTATION_NODES, "permutation")
def sym_g(g: Graph) -> List[Permutation]:
    """(Sym_n)_G, all orders the graph is consistent with, lexicographic"""
    return [p for p in iter_permutations(g.n) if consistent(g, p)]


def combinations(n: int, l: int) -> List[Tuple[int, ...]]:
    """All l-element subsets of {0..n-1}, first element varying slowest.

    :param n: The size of the ground set
    :type n: int
    :param l: The subset size
    :type l: int
    :return: C(n, l) ascending tuples in lexicographic order
    :rtype: list
    """
    if l < 0 or l > n:
        raise ValueError(f"Cannot choose {l} elements out of {n}.")
    return list(itertools.combinations(range(n), l))


def node_subset_pairs(n: int, level: int) -> List[Tuple[int, int]]:
    """The selector pairing of one level: (j, S) with |S| = level and j not in S,
       outer loop over j ascending, inner loop over the combinations of the
       other nodes.
    """
    pairs = []
    for j in range(n):
        others = [k for k in range(n) if k != j]
        for combo in itertools.combinations(others, level):
            pairs.append((j, mask_of(combo)))
    return pairs


def selector_widths(n: int, lmax: Optional[int] = None) -> List[int]:
    """N2(β;ℓ) = n·C(n-1, ℓ) for every kept level ℓ = 0..lmax (default n-1)"""
    top = n - 1 if lmax is None else min(lmax, n - 1)
    return [n * math.comb(n - 1, level) for level in range(top + 1)]


def total_selector_width(n: int, lmax: Optional[int] = None) -> int:
    return sum(selector_widths(n, lmax))


def log_factorial_stirling(n: int) -> float:
    """Stirling's approximation of log(n!), for resource estimates only"""
    if n < 2:
        return 0.0
    return n * math.log(n) - n + 0.5 * math.log(2 * math.pi * n)


@dataclass(frozen=True)
class ModularFeatureSet:
    """A modular feature set F = ⊗_j F_j given by one predicate per node
       over parent masks, so that 1_F(G) = Π_j 1_{F_j}(pa_j).

    :param n: The number of nodes
    :type n: int
    :param per_node: ``per_node[j](mask)`` is 1_{F_j}(mask)
    :type per_node: tuple
    :param kind: One of 'trivial', 'edge' or 'explicit'
    :type kind: str
    :param info: Extra data needed to serialize the feature
    :type info: dict
    """
    n: int
    per_node: Tuple[Callable[[int], bool], ...] = field(compare=False)
    kind: str = "explicit"
    info: Dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.per_node) != self.n:
            raise DimensionMismatchException(
                f"Feature for n={self.n} needs {self.n} predicates, got {len(self.per_node)}.")

    def allows(self, j: int, mask: int) -> bool:
        return bool(self.per_node[j](mask))

    def indicator(self, g: Graph) -> bool:
        """1_F(G) as the product of the per-node indicators"""
        if g.n != self.n:
            raise DimensionMismatchException(f"Feature has n={self.n} but the graph has n={g.n}.")
        return all(self.allows(j, pa) for j, pa in enumerate(g.parents))

    @property
    def is_trivial(self) -> bool:
        return self.kind == "trivial"

    def allowed_masks(self, j: int) -> List[int]:
        """The allowed parent masks of node j among the subsets of the other nodes"""
        others = ((1 << self.n) - 1) & ~(1 << j)
        return sorted(m for m in submasks(others) if self.allows(j, m))

    def complement_at(self, j: int) -> "ModularFeatureSet":
        """The feature set that differs from this one only by negating 1_{F_j}"""
        predicates = list(self.per_node)
        original = predicates[j]
        predicates[j] = lambda mask: not original(mask)
        return ModularFeatureSet(self.n, tuple(predicates), "explicit")

    def relabel(self, rho: Permutation) -> "ModularFeatureSet":
        """Conjugate by a node relabeling: node j becomes ``rho.sigma[j]``"""
        if rho.n != self.n:
            raise DimensionMismatchException("Relabeling permutation has the wrong size.")
        predicates = [None] * self.n
        for j in range(self.n):
            predicates[rho.sigma[j]] = _relabeled(self.per_node[j], rho)
        if self.kind == "edge":
            return edge_feature(rho.sigma[self.info["from"]], rho.sigma[self.info["to"]], self.n)
        return ModularFeatureSet(self.n, tuple(predicates), self.kind if self.is_trivial else "explicit")

    def to_dict(self) -> dict:
        if self.kind == "edge":
            return {"type": "edge", "from": self.info["from"], "to": self.info["to"]}
        if self.is_trivial:
            return {"type": "trivial", "n": self.n}
        return {"type": "explicit", "allowed": [self.allowed_masks(j) for j in range(self.n)]}


def _relabeled(predicate: Callable[[int], bool], rho: Permutation) -> Callable[[int], bool]:
    return lambda mask: predicate(mask_of(rho.tau[k] for k in members(mask)))


def trivial_feature(n: int) -> ModularFeatureSet:
    """F = B_n"""
    return ModularFeatureSet(n, tuple(lambda mask: True for _ in range(n)), "trivial")


def edge_feature(j1: int, j2: int, n: int) -> ModularFeatureSet:
    """The feature set of all graphs containing the edge j1 -> j2.

    :param j1: The parent node
    :type j1: int
    :param j2: The child node
    :type j2: int
    :param n: The number of nodes
    :type n: int
    :return: The feature set
    :rtype: ModularFeatureSet
    """
    if j1 == j2:
        raise InvalidFeatureException(f"An edge feature needs two distinct nodes, got {j1} -> {j2}.")
    if not (0 <= j1 < n and 0 <= j2 < n):
        raise InvalidFeatureException(f"Edge {j1} -> {j2} references nodes outside 0..{n - 1}.")

    bit = 1 << j1
    predicates = tuple(
        (lambda mask: bool(mask & bit)) if j == j2 else (lambda mask: True)
        for j in range(n)
    )
    return ModularFeatureSet(n, predicates, "edge", {"from": j1, "to": j2})


def explicit_feature(allowed: Sequence[Optional[Iterable[int]]]) -> ModularFeatureSet:
    """Feature set from per-node lists of allowed parent masks, None meaning all"""
    predicates = []
    for masks in allowed:
        if masks is None:
            predicates.append(lambda mask: True)
        else:
            allowed_set = frozenset(int(m) for m in masks)
            predicates.append(lambda mask, allowed_set=allowed_set: mask in allowed_set)
    return ModularFeatureSet(len(predicates), tuple(predicates), "explicit")


def feature_from_dict(data: dict, n: int) -> ModularFeatureSet:
    kind = data.get("type")
    if kind == "edge":
        return edge_feature(int(data["from"]), int(data["to"]), n)
    if kind == "trivial":
        return trivial_feature(n)
    if kind == "explicit":
        feature = explicit_feature(data["allowed"])
        if feature.n != n:
            raise DimensionMismatchException(f"Explicit feature lists {feature.n} nodes, the data has {n}.")
        return feature
    raise InvalidFeatureException(f"Unknown feature type '{kind}'.")


def parse_feature(text: str, n: int) -> ModularFeatureSet:
    """Parses the feature mini-language: ``trivial``, ``edge:J1-J2`` or
       ``@file.json`` holding a serialized feature.
    """
    text = text.strip()
    if text == "trivial":
        return trivial_feature(n)
    if text.startswith("edge:"):
        try:
            j1, j2 = (int(part) for part in text[5:].split("-"))
        except ValueError:
            _LOGGER.error(f"Cannot parse edge feature '{text}'")
            raise InvalidFeatureException(f"Edge features are written 'edge:J1-J2', got '{text}'.")
        return edge_feature(j1, j2, n)
    if text.startswith("@"):
        with open(text[1:], "r") as reader:
            return feature_from_dict(json.load(reader), n)
    raise InvalidFeatureException(f"Unknown feature '{text}'. Use 'trivial', 'edge:J1-J2' or '@file.json'.")
