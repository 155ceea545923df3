"""
Dataset ingestion, Cooper-Herskovits local marginal likelihoods, parent and
order priors, and the table of h(j|S) values every posterior is built from.
All scores are natural logarithms; -inf stands for an exact zero.
"""
import io
import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import gammaln, logsumexp

from .constants import MAX_COLUMNS, PARENT_PRIORS, PHI_KINDS
from .exceptions import DatasetParseException, DimensionMismatchException, InvalidFeatureException
from .graphs import Graph, ModularFeatureSet, Permutation, is_dag, mask_of, members, popcount, submasks


# global logger object
_LOGGER = logging.getLogger(__name__)

NEG_INF = -math.inf


class Dataset:
    """Categorical records, one column per node.

    :param values: M x n matrix of category indices
    :type values: numpy.ndarray
    :param cardinalities: The number of categories N_{x_j} of every column
    :type cardinalities: Sequence[int]
    :param names: Optional column names
    :type names: Sequence[str]
    """

    def __init__(
        self,
        values: np.ndarray,
        cardinalities: Sequence[int],
        names: Optional[Sequence[str]] = None
    ):
        values = np.asarray(values, dtype=np.int64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DatasetParseException("A dataset needs at least one record and one column.")
        if values.shape[1] > MAX_COLUMNS:
            raise DatasetParseException(f"At most {MAX_COLUMNS} columns are supported, got {values.shape[1]}.")
        if len(cardinalities) != values.shape[1]:
            raise DimensionMismatchException("One cardinality per column is required.")

        cardinalities = tuple(int(c) for c in cardinalities)
        for j, card in enumerate(cardinalities):
            column = values[:, j]
            if column.min() < 0 or column.max() >= card:
                raise DatasetParseException(f"Column {j} holds values outside 0..{card - 1}.")

        values.setflags(write=False)
        self.values = values
        self.cardinalities = cardinalities
        self.names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(values.shape[1]))

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def M(self) -> int:
        return self.values.shape[0]

    def column(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def relabel(self, rho: Permutation) -> "Dataset":
        """Move column j to position ``rho.sigma[j]``"""
        order = list(rho.tau)
        return Dataset(
            self.values[:, order],
            [self.cardinalities[k] for k in order],
            [self.names[k] for k in order],
        )

    def __repr__(self):
        return f"Dataset(n={self.n}, M={self.M}, cardinalities={self.cardinalities})"


def load_dataset(
    source: Union[str, TextIO],
    delimiter: Optional[str] = None,
    cardinalities: Optional[Sequence[int]] = None
) -> Dataset:
    """Read a delimited text file with a header row into a Dataset. Tokens of
       every column are mapped to 0..N-1 in order of first appearance.

    :param source: A path or an open text stream
    :type source: str or TextIO
    :param delimiter: Field delimiter, defaults to tab for *.tsv paths and comma otherwise
    :type delimiter: str
    :param cardinalities: Optional per-column cardinalities overriding the inferred ones
    :type cardinalities: Sequence[int]
    :return: The parsed dataset
    :rtype: Dataset
    """
    if delimiter is None:
        delimiter = "\t" if isinstance(source, str) and source.endswith(".tsv") else ","

    try:
        frame = pd.read_csv(source, sep=delimiter, dtype=str, keep_default_na=False,
                            na_values=[], skipinitialspace=True)
    except pd.errors.EmptyDataError:
        _LOGGER.error("Dataset source is empty")
        raise DatasetParseException("The dataset is empty (no header row).")
    except pd.errors.ParserError as e:
        _LOGGER.error("Failed to tokenize dataset")
        _LOGGER.exception(e)
        raise DatasetParseException(f"Ragged row in dataset: {e}")
    except OSError as e:
        _LOGGER.error(f"Cannot read dataset {source}")
        raise DatasetParseException(f"Cannot read the dataset: {e}")

    if frame.shape[0] == 0:
        raise DatasetParseException("The dataset has a header but no records.")
    if frame.shape[1] > MAX_COLUMNS:
        raise DatasetParseException(f"At most {MAX_COLUMNS} columns are supported, got {frame.shape[1]}.")

    # short rows are padded with missing values
    missing = frame.isna().to_numpy() | (frame.to_numpy() == "")
    if missing.any():
        row, col = (int(i) for i in np.argwhere(missing)[0])
        # +2: one for the header, one for 1-based numbering
        raise DatasetParseException(
            f"Missing token in row {row + 2}, column {col + 1} ('{frame.columns[col]}').")

    columns = []
    inferred = []
    for name in frame.columns:
        codes, uniques = pd.factorize(frame[name].str.strip(), sort=False)
        columns.append(codes)
        inferred.append(len(uniques))

    if cardinalities is not None:
        if len(cardinalities) != len(inferred):
            raise DimensionMismatchException(
                f"{len(cardinalities)} cardinalities given for {len(inferred)} columns.")
        for j, (given, seen) in enumerate(zip(cardinalities, inferred)):
            if given < seen:
                raise DatasetParseException(f"Column {j + 1} has {seen} distinct tokens but cardinality {given}.")
        inferred = list(cardinalities)

    dataset = Dataset(np.column_stack(columns), inferred, [str(c) for c in frame.columns])
    _LOGGER.debug(f"Loaded {dataset}")
    return dataset


def load_dataset_text(text: str, **kwargs) -> Dataset:
    return load_dataset(io.StringIO(text), **kwargs)


def _configurations(d: Dataset, pa: int) -> Tuple[np.ndarray, int]:
    # mixed radix index of the parent values, lowest parent least significant
    index = np.zeros(d.M, dtype=np.int64)
    radix = 1
    for k in members(pa):
        index += d.column(k) * radix
        radix *= d.cardinalities[k]
    return index, radix


def counts(d: Dataset, j: int, pa: int) -> np.ndarray:
    """N(j, x_j, pa_j) for every parent configuration and value of x_j.

    :param d: The dataset
    :type d: Dataset
    :param j: The child column
    :type j: int
    :param pa: Parent mask, must not contain j
    :type pa: int
    :return: Matrix indexed [configuration, x_j]
    :rtype: numpy.ndarray
    """
    if pa >> j & 1:
        raise InvalidFeatureException(f"Node {j} cannot be its own parent.")
    config, n_configs = _configurations(d, pa)
    card = d.cardinalities[j]
    flat = np.bincount(config * card + d.column(j), minlength=n_configs * card)
    return flat.reshape(n_configs, card)


def log_local_likelihood(d: Dataset, j: int, pa: int) -> float:
    """log P(x_j□ | pa_j), the Cooper-Herskovits score with all Dirichlet
       hyperparameters equal to one, as a product over parent configurations.
       Unobserved configurations contribute a factor of one.
    """
    if pa >> j & 1:
        raise InvalidFeatureException(f"Node {j} cannot be its own parent.")
    card = d.cardinalities[j]
    config, _ = _configurations(d, pa)

    _, joint = np.unique(config * card + d.column(j), return_counts=True)
    _, marginal = np.unique(config, return_counts=True)

    score = np.sum(gammaln(card) - gammaln(marginal + card)) + np.sum(gammaln(joint + 1))
    return float(score)


class PriorSpec:
    """Parent-set prior P̄(pa|S) and order potential Φ(j|S).

    :param parent_prior: 'uniform-subsets' or 'uniform-sizes'
    :type parent_prior: str
    :param phi: 'constant', 'delta-id' or 'table'
    :type phi: str
    :param phi_table: Φ values keyed by (j, S mask) when phi is 'table'; missing entries are 1
    :type phi_table: dict
    """

    def __init__(
        self,
        parent_prior: str = "uniform-subsets",
        phi: str = "constant",
        phi_table: Optional[Dict[Tuple[int, int], float]] = None
    ):
        if parent_prior not in PARENT_PRIORS:
            raise ValueError(f"Unknown parent prior '{parent_prior}'. Choose one of {PARENT_PRIORS}.")
        if phi not in PHI_KINDS:
            raise ValueError(f"Unknown order potential '{phi}'. Choose one of {PHI_KINDS}.")
        if phi == "table" and phi_table is None:
            raise ValueError("phi='table' requires a phi_table.")
        if phi_table is not None and any(v < 0 for v in phi_table.values()):
            raise ValueError("Order potential values must be non-negative.")

        self.parent_prior = parent_prior
        self.phi = phi
        self.phi_table = dict(phi_table) if phi_table is not None else {}
        self.dirichlet = "ch-uniform"

    def log_parent_prior(self, pa: int, S: int) -> float:
        """log P̄(pa|S) for pa ⊂ S"""
        if pa & ~S:
            return NEG_INF
        size = popcount(S)
        if self.parent_prior == "uniform-subsets":
            return -size * math.log(2)
        return -math.log(size + 1) - math.log(math.comb(size, popcount(pa)))

    def log_unordered_prior(self, j: int, pa: int) -> float:
        """log P(pa_j) of the unordered model, supported on pa_j ⊂ {<j}"""
        return self.log_parent_prior(pa, (1 << j) - 1)

    def log_phi(self, j: int, S: int) -> float:
        if self.phi == "constant":
            return 0.0
        if self.phi == "delta-id":
            return 0.0 if S == (1 << j) - 1 else NEG_INF
        value = self.phi_table.get((j, S), 1.0)
        return math.log(value) if value > 0 else NEG_INF

    def to_dict(self) -> dict:
        data = {"parent_prior": self.parent_prior, "phi": self.phi, "dirichlet": self.dirichlet}
        if self.phi == "table":
            data["phi_table"] = [
                {"j": j, "S": list(members(S)), "phi": value}
                for (j, S), value in sorted(self.phi_table.items())
            ]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "PriorSpec":
        phi = data.get("phi", "constant")
        table = None
        if isinstance(phi, dict):
            table = phi.get("table", [])
            phi = "table"
        elif "phi_table" in data:
            table = data["phi_table"]
        phi_table = None
        if table is not None:
            phi_table = {(int(e["j"]), mask_of(e["S"])): float(e["phi"]) for e in table}
        return cls(data.get("parent_prior", "uniform-subsets"), phi, phi_table)

    def __repr__(self):
        return f"PriorSpec(parent_prior={self.parent_prior}, phi={self.phi})"


class LocalScoreTable:
    """Write-once table of log h(j|S) for j not in S.

    :param n: The number of nodes
    :type n: int
    :param log_h: log h(j|S) keyed by (j, S mask)
    :type log_h: dict
    :param feature_applied: Whether a non-trivial 1_{F_j} was folded in
    :type feature_applied: bool
    :param lmax: Largest kept |S|, None if all levels are present
    :type lmax: int
    :param level_scale: log c_ℓ already divided out of every level
    :type level_scale: Sequence[float]
    """

    def __init__(
        self,
        n: int,
        log_h: Dict[Tuple[int, int], float],
        feature_applied: bool = False,
        lmax: Optional[int] = None,
        level_scale: Optional[Sequence[float]] = None
    ):
        self.n = n
        self.lmax = lmax
        self._log_h = dict(log_h)
        self.feature_applied = feature_applied
        self.level_scale = tuple(level_scale) if level_scale is not None else (0.0,) * (self.top_level + 1)

    @property
    def top_level(self) -> int:
        return self.n - 1 if self.lmax is None else min(self.lmax, self.n - 1)

    def __len__(self):
        return len(self._log_h)

    def __contains__(self, key):
        return key in self._log_h

    def log_h(self, j: int, S: int) -> float:
        return self._log_h[(j, S)]

    def h(self, j: int, S: int) -> float:
        return math.exp(self._log_h[(j, S)])

    def items(self):
        return sorted(self._log_h.items(), key=lambda kv: (popcount(kv[0][1]), kv[0]))

    def level_entries(self, level: int) -> List[Tuple[Tuple[int, int], float]]:
        return [(key, value) for key, value in self.items() if popcount(key[1]) == level]

    def level_max(self, level: int) -> float:
        """Largest log h at a level, -inf if the level is empty or all zero"""
        values = [value for _, value in self.level_entries(level)]
        return max(values) if values else NEG_INF

    def scaled(self, level_scale: Sequence[float]) -> "LocalScoreTable":
        """Divide every h(j|S) by exp(level_scale[|S|])"""
        if len(level_scale) != self.top_level + 1:
            raise DimensionMismatchException(
                f"Need {self.top_level + 1} level scales, got {len(level_scale)}.")
        log_h = {key: value - level_scale[popcount(key[1])] for key, value in self._log_h.items()}
        combined = [a + b for a, b in zip(self.level_scale, level_scale)]
        return LocalScoreTable(self.n, log_h, self.feature_applied, self.lmax, combined)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "lmax": self.lmax,
            "feature_applied": self.feature_applied,
            "level_scale": list(self.level_scale),
            "entries": [
                {"j": j, "S": list(members(S)), "logH": value if math.isfinite(value) else None}
                for (j, S), value in self.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LocalScoreTable":
        log_h = {
            (int(e["j"]), mask_of(e["S"])): NEG_INF if e["logH"] is None else float(e["logH"])
            for e in data["entries"]
        }
        return cls(data["n"], log_h, data.get("feature_applied", False), data.get("lmax"),
                   data.get("level_scale"))

    def __repr__(self):
        return f"LocalScoreTable(n={self.n}, entries={len(self)}, lmax={self.lmax}, feature_applied={self.feature_applied})"


def local_likelihoods(d: Dataset, lmax: Optional[int] = None) -> Dict[Tuple[int, int], float]:
    """log P(x_j□|pa) for every node and every parent mask of size <= lmax"""
    table = {}
    full = (1 << d.n) - 1
    for j in range(d.n):
        for pa in submasks(full & ~(1 << j)):
            if lmax is None or popcount(pa) <= lmax:
                table[(j, pa)] = log_local_likelihood(d, j, pa)
    return table


def build_score_table(
    d: Dataset,
    prior: PriorSpec,
    f: Optional[ModularFeatureSet] = None,
    lmax: Optional[int] = None,
    likelihoods: Optional[Dict[Tuple[int, int], float]] = None
) -> LocalScoreTable:
    """Computes log h(j|S) = log Φ(j|S) + log Σ_{pa ⊂ S} 1_{F_j}(pa) P(x_j□|pa) P̄(pa|S)
       for every j and every S not containing j with |S| <= lmax.

    :param d: The dataset
    :type d: Dataset
    :param prior: Parent prior and order potential
    :type prior: PriorSpec
    :param f: Optional feature set, None meaning F = B_n
    :type f: ModularFeatureSet
    :param lmax: Optional in-degree bound
    :type lmax: int
    :param likelihoods: Optional cache from ``local_likelihoods``
    :type likelihoods: dict
    :return: The score table
    :rtype: LocalScoreTable
    """
    if f is not None and f.n != d.n:
        _LOGGER.error(f"Feature set has n={f.n} but the dataset has {d.n} columns")
        raise DimensionMismatchException(f"Feature set has n={f.n} but the dataset has n={d.n}.")
    if lmax is not None and lmax < 0:
        raise ValueError("lmax must be non-negative.")
    if likelihoods is None:
        likelihoods = local_likelihoods(d, lmax)

    full = (1 << d.n) - 1
    log_h = {}
    for j in range(d.n):
        for S in submasks(full & ~(1 << j)):
            if lmax is not None and popcount(S) > lmax:
                continue
            terms = [
                likelihoods[(j, pa)] + prior.log_parent_prior(pa, S)
                for pa in submasks(S)
                if f is None or f.allows(j, pa)
            ]
            log_phi = prior.log_phi(j, S)
            if not terms or log_phi == NEG_INF:
                log_h[(j, S)] = NEG_INF
            else:
                log_h[(j, S)] = float(log_phi + logsumexp(terms))

    table = LocalScoreTable(d.n, log_h, f is not None and not f.is_trivial, lmax)
    _LOGGER.debug(f"Built {table}")
    return table


def topological_order(g: Graph) -> List[int]:
    """Nodes of a DAG so that every parent precedes its children"""
    if not is_dag(g):
        raise InvalidFeatureException(f"Graph {g} has a directed cycle.")
    order = []
    placed = 0
    while len(order) < g.n:
        for j in range(g.n):
            if not placed >> j & 1 and g.parents[j] & ~placed == 0:
                order.append(j)
                placed |= 1 << j
    return order


def sample_dataset(
    g: Graph,
    cardinalities: Sequence[int],
    M: int,
    seed: int,
    concentration: float = 0.5
) -> Dataset:
    """Draw M records from a random CB net with structure g. Every transition
       table row comes from a symmetric Dirichlet; small concentrations give
       strong dependence on the parents.
    """
    if len(cardinalities) != g.n:
        raise DimensionMismatchException("One cardinality per node is required.")
    rng = np.random.default_rng(seed)
    values = np.zeros((M, g.n), dtype=np.int64)

    for j in topological_order(g):
        card = cardinalities[j]
        parents = members(g.parents[j])
        n_configs = int(np.prod([cardinalities[k] for k in parents])) if parents else 1
        tables = rng.dirichlet(np.full(card, concentration), size=n_configs)

        config = np.zeros(M, dtype=np.int64)
        radix = 1
        for k in parents:
            config += values[:, k] * radix
            radix *= cardinalities[k]

        cumulative = np.cumsum(tables[config], axis=1)
        draws = rng.random(M)[:, None]
        values[:, j] = np.minimum((draws > cumulative).sum(axis=1), card - 1)

    return Dataset(values, cardinalities)
