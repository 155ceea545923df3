"""
End-to-end estimation of P̄(F|D): scores, angles, circuit, simulation,
amplitude ratio and sum recovery, checked against the classical oracle.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Optional, Sequence, Tuple

from .constants import DEFAULT_SEED, DEFAULT_SHOTS, WILSON_Z
from .exceptions import BNStructureException, DegenerateStateException, SizeBoundException
from .graphs import ModularFeatureSet
from .oracle import ordered_feature_posterior
from .qprep import (AngleTable, Circuit, QubitLayout, angles_from_scores, build_state_prep, encoding_scales,
                    epsilon, resource_estimate, target_projector)
from .qsim import AmplitudePair, amplify, extract_claim_amplitudes, max_qubits, optimal_iterations, run, \
    sample, target_weight
from .scoring import NEG_INF, Dataset, LocalScoreTable, PriorSpec, build_score_table, local_likelihoods


# global logger object
_LOGGER = logging.getLogger(__name__)

MODES = ("exact", "sampled")


def recover_sum(pair: AmplitudePair, n: int, level_scale: Sequence[float],
                node_scale: Sequence[float] = ()) -> float:
    """log Σ_σ Π h from the two claim amplitudes.

    Inverts z1/z0 = Σ_scaled · 2^{n/2} / n!, which holds for any number of
    kept levels, and adds back Σ_ℓ log c_ℓ + Σ_j log d_j.

    :raises DegenerateStateException: When z0 is zero
    """
    if pair.z0 == 0:
        _LOGGER.error("z0 vanished; the state was not produced by the preparation circuit")
        raise DegenerateStateException("z0 is zero, the sum cannot be recovered.")
    if pair.z1 == 0:
        return NEG_INF
    return _log_sum_from_ratio(math.log(abs(pair.z1) / abs(pair.z0)), n, level_scale, node_scale)


def _log_sum_from_ratio(log_ratio: float, n: int, level_scale: Sequence[float],
                        node_scale: Sequence[float] = ()) -> float:
    return log_ratio + math.lgamma(n + 1) - 0.5 * n * math.log(2.0) + sum(level_scale) + sum(node_scale)


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> Tuple[float, float]:
    """Wilson score interval of a binomial proportion"""
    if trials <= 0:
        raise ValueError("trials must be positive.")
    p = successes / trials
    denominator = 1.0 + z * z / trials
    center = (p + z * z / (2.0 * trials)) / denominator
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denominator
    return max(0.0, center - half), min(1.0, center + half)


def _odds_root(p: float) -> float:
    """p -> √(p/(1-p))"""
    if p >= 1.0:
        return math.inf
    return math.sqrt(p / (1.0 - p))


class PipelineRun:
    """One pass of the pipeline over a single score table"""

    def __init__(self, label: str, layout: QubitLayout, angles: AngleTable, circuit: Circuit, pair: AmplitudePair):
        self.label = label
        self.layout = layout
        self.angles = angles
        self.circuit = circuit
        self.pair = pair
        self.log_sum = recover_sum(pair, layout.n, angles.level_scale, angles.node_scale)

        self.target_weight: Optional[float] = None
        self.iterations: Optional[int] = None
        self.seed: Optional[int] = None
        self.counts: Optional[Dict[str, int]] = None

    @property
    def ratio(self) -> float:
        return self.pair.ratio

    @property
    def successes(self) -> int:
        return self.counts.get("01", 0)

    @property
    def failures(self) -> int:
        return self.counts.get("00", 0)

    @property
    def trials(self) -> int:
        return self.successes + self.failures

    @property
    def sampled_ratio(self) -> float:
        if not self.failures:
            raise DegenerateStateException(f"No μ₀=0 outcomes among the ω=0 shots of the {self.label} run.")
        return math.sqrt(self.successes / self.failures)

    def ratio_upper_bound(self) -> float:
        """Upper end of the ratio interval, also defined with no successes"""
        if not self.trials:
            return math.inf
        return _odds_root(wilson_interval(self.successes, self.trials)[1])

    def ratio_interval(self) -> Tuple[float, float]:
        lo, hi = wilson_interval(self.successes, self.successes + self.failures)
        return _odds_root(lo), _odds_root(hi)

    def to_dict(self) -> dict:
        data = {
            "label": self.label,
            "z1": self.pair.z1.real,
            "z0": self.pair.z0.real,
            "residual": self.pair.residual,
            "ratio": self.ratio,
            "logSum": None if self.log_sum == NEG_INF else self.log_sum,
            "gates": len(self.circuit),
        }
        if self.counts is not None:
            data.update({
                "targetWeight": self.target_weight,
                "iterations": self.iterations,
                "seed": self.seed,
                "counts": dict(sorted(self.counts.items())),
                "sampledRatio": self.sampled_ratio if self.failures else None,
            })
        return data


def run_pipeline(
    table: LocalScoreTable,
    level_scale: Sequence[float],
    lmax: Optional[int],
    label: str,
    mode: str = "exact",
    shots: int = DEFAULT_SHOTS,
    seed: int = DEFAULT_SEED,
    node_scale: Optional[Sequence[float]] = None,
    qubit_bound: Optional[int] = None
) -> PipelineRun:
    """angles -> circuit -> statevector -> (z1, z0), optionally followed by
       amplification and sampling of (ω, μ₀)
    """
    layout = QubitLayout(table.n, lmax)
    angles = angles_from_scores(table, level_scale, node_scale)
    circuit = build_state_prep(layout, angles, lmax)
    state = run(circuit, bound=qubit_bound)
    pair = extract_claim_amplitudes(state, layout)
    result = PipelineRun(label, layout, angles, circuit, pair)
    _LOGGER.debug(f"{label} run: z1={pair.z1.real}, z0={pair.z0.real}, log_sum={result.log_sum}")

    if mode == "sampled" and pair.z1 != 0:
        target = target_projector(layout)
        result.target_weight = target_weight(state, target)
        result.iterations = optimal_iterations(result.target_weight)
        amplified = amplify(state, target, result.iterations)
        result.seed = seed
        result.counts = sample(amplified, [layout.omega, layout.mu0], shots, seed)
    return result


class EstimationResult:
    """Outcome of ``estimate_feature_posterior``"""

    def __init__(
        self,
        mode: str,
        numerator: PipelineRun,
        denominator: PipelineRun,
        posterior: float,
        degenerate: bool = False,
        interval: Optional[Tuple[float, float]] = None,
        oracle_value: Optional[float] = None,
        shots: Optional[int] = None,
        seed: Optional[int] = None,
        details: Optional[dict] = None
    ):
        self.mode = mode
        self.numerator = numerator
        self.denominator = denominator
        self.posterior = posterior
        self.degenerate = degenerate
        self.interval = interval
        self.oracle_value = oracle_value
        self.shots = shots
        self.seed = seed
        self.details = details or {}

    @property
    def ratio(self) -> float:
        return self.numerator.ratio

    @property
    def sum_numerator(self) -> float:
        return self.numerator.log_sum

    @property
    def sum_denominator(self) -> float:
        return self.denominator.log_sum

    @property
    def discrepancy(self) -> Optional[float]:
        if self.oracle_value is None:
            return None
        return abs(self.posterior - self.oracle_value)

    def to_dict(self) -> dict:
        layout = self.denominator.layout
        data = {
            "kind": "estimate",
            "mode": self.mode,
            "n": layout.n,
            "lmax": layout.lmax,
            "qubits": layout.total_qubits,
            "epsilon": epsilon(layout),
            "levelScale": list(self.denominator.angles.level_scale),
            "nodeScale": list(self.denominator.angles.node_scale),
            "resources": resource_estimate(layout),
            "posterior": self.posterior,
            "degenerate": self.degenerate,
            "oracleValue": self.oracle_value,
            "discrepancy": self.discrepancy,
            "numerator": self.numerator.to_dict(),
            "denominator": self.denominator.to_dict(),
        }
        if self.mode == "sampled":
            data.update({"shots": self.shots, "seed": self.seed,
                         "interval": list(self.interval) if self.interval is not None else None})
        data.update(self.details)
        return data

    def __repr__(self):
        return f"EstimationResult(mode={self.mode}, posterior={self.posterior}, oracle_value={self.oracle_value})"


def combine_runs(numerator: PipelineRun, denominator: PipelineRun, mode: str = "exact") -> Tuple[float, bool, Optional[Tuple[float, float]]]:
    """Posterior, degenerate flag and (sampled mode) interval from the two runs.

    :raises BNStructureException: When the runs were encoded with different scales
    :raises DegenerateStateException: When the sampled denominator saw no μ₀=1 shots
    """
    num_angles, den_angles = numerator.angles, denominator.angles
    if num_angles.level_scale != den_angles.level_scale or num_angles.node_scale != den_angles.node_scale:
        _LOGGER.error(f"Scales differ: {num_angles.level_scale}/{num_angles.node_scale} vs "
                      f"{den_angles.level_scale}/{den_angles.node_scale}")
        raise BNStructureException("Numerator and denominator runs must share their scales.")
    if denominator.log_sum == NEG_INF:
        raise DegenerateStateException("The posterior denominator is zero.")
    if numerator.log_sum == NEG_INF:
        return 0.0, True, (0.0, 0.0) if mode == "sampled" else None

    if mode == "exact":
        if numerator.log_sum > denominator.log_sum + 1e-9:
            _LOGGER.warning(f"Numerator sum exceeds the denominator by {numerator.log_sum - denominator.log_sum}")
        return min(1.0, math.exp(numerator.log_sum - denominator.log_sum)), False, None

    if not denominator.successes:
        bound = denominator.ratio_upper_bound()
        _LOGGER.error(f"No μ₀=1 shots in {denominator.trials} ω=0 outcomes of the denominator run")
        raise DegenerateStateException(
            f"No μ₀=1 shots among {denominator.trials} ω=0 outcomes of the denominator run; "
            f"its ratio is at most {bound:.3g}. Increase shots.")

    posterior = min(1.0, numerator.sampled_ratio / denominator.sampled_ratio)
    num_lo, num_hi = numerator.ratio_interval()
    den_lo, den_hi = denominator.ratio_interval()
    lo = num_lo / den_hi if den_hi > 0 else 0.0
    hi = num_hi / den_lo if den_lo > 0 else math.inf
    return posterior, False, (min(1.0, lo), min(1.0, hi))


def estimate_feature_posterior(
    d: Dataset,
    prior: PriorSpec,
    f: ModularFeatureSet,
    lmax: Optional[int] = None,
    mode: str = "exact",
    shots: int = DEFAULT_SHOTS,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
    with_oracle: bool = True,
    qubit_bound: Optional[int] = None
) -> EstimationResult:
    """P̄(F|D) of the ordered modular model through the quantum pipeline.

    :param d: The dataset
    :type d: Dataset
    :param prior: Parent prior and order potential
    :type prior: PriorSpec
    :param f: The modular feature set
    :type f: ModularFeatureSet
    :param lmax: Optional in-degree bound
    :type lmax: int
    :param mode: 'exact' reads amplitudes, 'sampled' measures after amplification
    :type mode: str
    :param shots: Shots per run in sampled mode
    :type shots: int
    :param seed: Seed of the denominator run; the numerator uses seed + 1
    :type seed: int
    :param threads: Run numerator and denominator concurrently when > 1
    :type threads: int
    :param with_oracle: Also compute the classical reference value
    :type with_oracle: bool
    :param qubit_bound: Largest simulated register, defaults to ``max_qubits()``
    :type qubit_bound: int
    :return: The estimation result
    :rtype: EstimationResult
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}.")
    if lmax is not None and lmax >= d.n:
        raise ValueError(f"lmax={lmax} must be smaller than n={d.n}.")

    layout = QubitLayout(d.n, lmax)
    limit = max_qubits() if qubit_bound is None else qubit_bound
    if layout.total_qubits > limit:
        _LOGGER.error(f"n={d.n}, lmax={lmax} needs {layout.total_qubits} qubits, bound is {limit}")
        raise SizeBoundException(f"The circuit needs {layout.total_qubits} qubits, the bound is {limit}.")

    likelihoods = local_likelihoods(d, lmax)
    trivial_table = build_score_table(d, prior, None, lmax, likelihoods)
    feature_table = build_score_table(d, prior, f, lmax, likelihoods)
    node_scale, level_scale = encoding_scales(trivial_table)
    _LOGGER.info(f"Node scales {node_scale}, level scales {level_scale} for {layout}")

    jobs = [(feature_table, "numerator", seed + 1), (trivial_table, "denominator", seed)]

    def execute(job) -> PipelineRun:
        table, label, run_seed = job
        return run_pipeline(table, level_scale, lmax, label, mode, shots, run_seed, node_scale, limit)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            numerator, denominator = pool.map(execute, jobs)
    else:
        numerator, denominator = [execute(job) for job in jobs]

    posterior, degenerate, interval = combine_runs(numerator, denominator, mode)
    if degenerate:
        _LOGGER.info("The feature has zero weight; posterior is 0")

    oracle_value = None
    if with_oracle:
        oracle_value = ordered_feature_posterior(d, prior, f, lmax, threads, likelihoods).feature_value

    result = EstimationResult(mode, numerator, denominator, posterior, degenerate, interval, oracle_value,
                              shots if mode == "sampled" else None, seed if mode == "sampled" else None,
                              details={"feature": f.to_dict(), "prior": prior.to_dict()})
    _LOGGER.info(f"{result}")
    return result
