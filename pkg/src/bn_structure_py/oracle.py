"""
Exact classical posteriors by brute-force enumeration. These are the
reference values every quantum estimate is checked against.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional

import numpy as np

from .constants import MAX_GRAPH_NODES, MAX_PER_GRAPH_NODES, MAX_PERMUTATION_NODES
from .exceptions import BNStructureException, DegenerateStateException, DimensionMismatchException
from .graphs import (Graph, ModularFeatureSet, Permutation, enumerate_dags, fcg_sigma, graphs_below,
                     iter_permutations, submasks, trivial_feature, within_bound)
from .scoring import Dataset, LocalScoreTable, PriorSpec, build_score_table, local_likelihoods


# global logger object
_LOGGER = logging.getLogger(__name__)

NEG_INF = -math.inf


class LogAccumulator:
    """Streaming log-sum-exp. The running maximum is pulled out every time a
       larger term arrives, so no partial sum over- or underflows.
    """

    def __init__(self):
        self.max = NEG_INF
        self.total = 0.0

    def add(self, value: float):
        if value == NEG_INF:
            return
        if value > self.max:
            self.total = self.total * math.exp(self.max - value) + 1.0
            self.max = value
        else:
            self.total += math.exp(value - self.max)

    def extend(self, values: Iterable[float]) -> "LogAccumulator":
        for value in values:
            self.add(value)
        return self

    @property
    def value(self) -> float:
        if self.max == NEG_INF:
            return NEG_INF
        return self.max + math.log(self.total)


class PosteriorReport:
    """Result of an exact posterior computation.

    :param model: 'unordered' or 'ordered'
    :type model: str
    :param numerator_log: log of the feature-restricted sum
    :type numerator_log: float
    :param denominator_log: log of the unrestricted sum
    :type denominator_log: float
    :param per_graph: Optional posterior of every graph in the support
    :type per_graph: dict
    """

    def __init__(
        self,
        model: str,
        numerator_log: float,
        denominator_log: float,
        per_graph: Optional[Dict[Graph, float]] = None,
        details: Optional[dict] = None
    ):
        if denominator_log == NEG_INF:
            raise DegenerateStateException("The posterior denominator is zero.")
        self.model = model
        self.numerator_log = numerator_log
        self.denominator_log = denominator_log
        self.per_graph = per_graph
        self.details = details or {}

    @property
    def feature_value(self) -> float:
        if self.numerator_log == NEG_INF:
            return 0.0
        return min(1.0, math.exp(self.numerator_log - self.denominator_log))

    def to_dict(self) -> dict:
        data = {
            "kind": "posterior",
            "model": self.model,
            "featureValue": self.feature_value,
            "numeratorLog": _finite_or_none(self.numerator_log),
            "denominatorLog": _finite_or_none(self.denominator_log),
        }
        data.update(self.details)
        if self.per_graph is not None:
            data["perGraph"] = [
                {"graph": g.to_dict(), "label": str(g), "posterior": p}
                for g, p in self.per_graph.items()
            ]
        return data

    def __repr__(self):
        return (f"PosteriorReport(model={self.model}, feature_value={self.feature_value}, "
                f"numerator_log={self.numerator_log}, denominator_log={self.denominator_log})")


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def _unordered_log_sum(d: Dataset, prior: PriorSpec, f: ModularFeatureSet, likelihoods: dict) -> float:
    total = 0.0
    for j in range(d.n):
        node = LogAccumulator().extend(
            likelihoods[(j, pa)] + prior.log_unordered_prior(j, pa)
            for pa in submasks((1 << j) - 1)
            if f.allows(j, pa)
        )
        if node.value == NEG_INF:
            return NEG_INF
        total += node.value
    return total


@within_bound(MAX_GRAPH_NODES, "graph")
def unordered_feature_posterior(
    d: Dataset,
    prior: PriorSpec,
    f: ModularFeatureSet,
    likelihoods: Optional[dict] = None
) -> PosteriorReport:
    """P(F|D) of the unordered modular model in product form,
       Π_j Σ_{pa_j ⊂ {<j}} 1_{F_j}(pa_j) β_j(pa_j) over the same with F = B_n.

    :param d: The dataset
    :type d: Dataset
    :param prior: The parent prior, P(pa_j) = P̄(pa_j|{<j})
    :type prior: PriorSpec
    :param f: The modular feature set
    :type f: ModularFeatureSet
    :return: The posterior report
    :rtype: PosteriorReport
    """
    _check_feature(d, f)
    if likelihoods is None:
        likelihoods = local_likelihoods(d)
    numerator = _unordered_log_sum(d, prior, f, likelihoods)
    denominator = _unordered_log_sum(d, prior, trivial_feature(d.n), likelihoods)
    return PosteriorReport("unordered", numerator, denominator,
                           details={"feature": f.to_dict(), "prior": prior.to_dict()})


@within_bound(MAX_GRAPH_NODES, "graph")
def unordered_feature_posterior_direct(d: Dataset, prior: PriorSpec, f: ModularFeatureSet) -> PosteriorReport:
    """P(F|D) by explicit summation over all G ⊂ FCG_n"""
    _check_feature(d, f)
    likelihoods = local_likelihoods(d)
    numerator, denominator = LogAccumulator(), LogAccumulator()
    for g in enumerate_dags(d.n):
        weight = _unordered_log_weight(g, prior, likelihoods)
        denominator.add(weight)
        if f.indicator(g):
            numerator.add(weight)
    return PosteriorReport("unordered", numerator.value, denominator.value)


def _unordered_log_weight(g: Graph, prior: PriorSpec, likelihoods: dict) -> float:
    return sum(likelihoods[(j, pa)] + prior.log_unordered_prior(j, pa) for j, pa in enumerate(g.parents))


def _check_feature(d: Dataset, f: ModularFeatureSet):
    if f.n != d.n:
        _LOGGER.error(f"Feature set has n={f.n}, dataset has {d.n} columns")
        raise DimensionMismatchException(f"Feature set has n={f.n} but the dataset has n={d.n}.")


def order_log_term(table: LocalScoreTable, p: Permutation) -> float:
    """log Π_j h(j^σ|{<j}^σ); levels above the table's lmax contribute 1"""
    total = 0.0
    for i in range(min(p.n, table.top_level + 1)):
        value = table.log_h(p.sigma[i], p.predecessors(i))
        if value == NEG_INF:
            return NEG_INF
        total += value
    return total


@within_bound(MAX_PERMUTATION_NODES, "permutation")
def ordered_log_sum(table: LocalScoreTable, threads: int = 1) -> float:
    """log Σ_σ Π_j h(j^σ|{<j}^σ) over all of Sym_n. With several threads
       Sym_n is cut into contiguous lexicographic blocks that are reduced in
       block order.
    """
    if threads <= 1:
        return LogAccumulator().extend(order_log_term(table, p) for p in iter_permutations(table.n)).value

    orders = list(iter_permutations(table.n))
    size = math.ceil(len(orders) / threads)
    blocks = [orders[i:i + size] for i in range(0, len(orders), size)]

    def reduce_block(block: List[Permutation]) -> float:
        return LogAccumulator().extend(order_log_term(table, p) for p in block).value

    with ThreadPoolExecutor(max_workers=threads) as pool:
        partial = list(pool.map(reduce_block, blocks))
    return LogAccumulator().extend(partial).value


def grouped_log_sum_n3(table: LocalScoreTable) -> float:
    """The n=3 sum grouped by the last node of the order, A + B + C with
       A = h(2|{1,0})·(h(1|0)h(0) + h(0|1)h(1)) and likewise for B and C.
    """
    if table.n != 3:
        raise DimensionMismatchException("The grouped form is written for n=3 only.")

    def lh(j, nodes):
        if len(nodes) > table.top_level:
            return 0.0
        mask = sum(1 << k for k in nodes)
        return table.log_h(j, mask)

    groups = []
    for last in (2, 1, 0):
        a, b = (k for k in (0, 1, 2) if k != last)
        inner = np.logaddexp(lh(b, [a]) + lh(a, []), lh(a, [b]) + lh(b, []))
        groups.append(lh(last, [a, b]) + inner)
    return float(LogAccumulator().extend(groups).value)


@within_bound(MAX_PERMUTATION_NODES, "permutation")
def ordered_feature_posterior(
    d: Dataset,
    prior: PriorSpec,
    f: ModularFeatureSet,
    lmax: Optional[int] = None,
    threads: int = 1,
    likelihoods: Optional[dict] = None,
    bound: Optional[int] = None
) -> PosteriorReport:
    """P̄(F|D) of the ordered modular model with the order potential absorbed
       into the h functions: Σ_σ Π_j h(j^σ|{<j}^σ) over the same with F = B_n.

    :param d: The dataset
    :type d: Dataset
    :param prior: Parent prior and order potential Φ
    :type prior: PriorSpec
    :param f: The modular feature set
    :type f: ModularFeatureSet
    :param lmax: Optional in-degree bound; levels above it contribute a factor 1
    :type lmax: int
    :param threads: Number of worker threads for the sum over Sym_n
    :type threads: int
    :param bound: Permutation enumeration bound, checked by the decorator and passed on
    :type bound: int
    :return: The posterior report
    :rtype: PosteriorReport
    """
    _check_feature(d, f)
    if likelihoods is None:
        likelihoods = local_likelihoods(d, lmax)

    feature_table = build_score_table(d, prior, f, lmax, likelihoods)
    trivial_table = build_score_table(d, prior, None, lmax, likelihoods)

    numerator = ordered_log_sum(feature_table, threads, bound=bound)
    denominator = ordered_log_sum(trivial_table, threads, bound=bound)

    if d.n == 3:
        for table, value in ((feature_table, numerator), (trivial_table, denominator)):
            grouped = grouped_log_sum_n3(table)
            if not _log_close(grouped, value):
                _LOGGER.error(f"Grouped n=3 sum {grouped} differs from the permutation sum {value}")
                raise BNStructureException("Grouped n=3 sum does not match the sum over Sym_3.")

    _LOGGER.info(f"Ordered posterior: numerator={numerator}, denominator={denominator}")
    return PosteriorReport("ordered", numerator, denominator,
                           details={"feature": f.to_dict(), "prior": prior.to_dict(), "lmax": lmax})


def _log_close(a: float, b: float, tolerance: float = 1e-9) -> bool:
    if a == NEG_INF or b == NEG_INF:
        return a == b
    return abs(a - b) <= tolerance * max(1.0, abs(a))


@within_bound(MAX_PER_GRAPH_NODES, "per-graph")
def graph_posterior(
    d: Dataset,
    prior: PriorSpec,
    model: str = "unordered",
    f: Optional[ModularFeatureSet] = None
) -> PosteriorReport:
    """Posterior of every graph in the prior support. The unordered model
       is supported on DAG_n, the ordered model on the union over σ of the
       graphs consistent with σ, weighted by P̄(σ) ∝ Π Φ.

    :param d: The dataset
    :type d: Dataset
    :param prior: The prior
    :type prior: PriorSpec
    :param model: 'unordered' or 'ordered'
    :type model: str
    :param f: Optional feature; its posterior is summed from the graph posteriors
    :type f: ModularFeatureSet
    :return: Report with ``per_graph`` filled in
    :rtype: PosteriorReport
    """
    likelihoods = local_likelihoods(d)
    weights: Dict[Graph, LogAccumulator] = {}

    if model == "unordered":
        for g in enumerate_dags(d.n):
            weights[g] = LogAccumulator()
            weights[g].add(_unordered_log_weight(g, prior, likelihoods))
    elif model == "ordered":
        for p in iter_permutations(d.n):
            log_order = sum(prior.log_phi(p.sigma[i], p.predecessors(i)) for i in range(d.n))
            if log_order == NEG_INF:
                continue
            for g in graphs_below(fcg_sigma(p)):
                weight = log_order + sum(
                    likelihoods[(j, pa)] + prior.log_parent_prior(pa, p.predecessors(p.tau[j]))
                    for j, pa in enumerate(g.parents)
                )
                weights.setdefault(g, LogAccumulator()).add(weight)
    else:
        raise ValueError(f"Unknown model '{model}'. Use 'unordered' or 'ordered'.")

    log_weights = {g: acc.value for g, acc in weights.items()}
    total = LogAccumulator().extend(log_weights.values()).value
    if total == NEG_INF:
        raise DegenerateStateException("All graphs have zero posterior weight.")

    per_graph = {g: math.exp(w - total) if w != NEG_INF else 0.0 for g, w in log_weights.items()}

    numerator = total
    if f is not None:
        _check_feature(d, f)
        numerator = LogAccumulator().extend(w for g, w in log_weights.items() if f.indicator(g)).value

    _LOGGER.debug(f"Graph posterior over {len(per_graph)} graphs ({model})")
    return PosteriorReport(model, numerator, total, per_graph,
                           details={"prior": prior.to_dict(),
                                    "feature": (f or trivial_feature(d.n)).to_dict()})
