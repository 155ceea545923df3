"""
bn-structure: exact and circuit-based posteriors of modular structure features.

Subcommands:
  enumerate   list DAGs, fully connected graphs per order, combinations or Sym(G)
  score       build the local score table of a dataset
  posterior   exact feature posterior (unordered or ordered model)
  estimate    feature posterior through the simulated preparation circuit
  simulate    run a circuit JSON file
  report      merge result files into one summary
"""
import argparse
import dataclasses
import json
import logging
import math
import sys
import tomllib
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

from .constants import (DEFAULT_SEED, DEFAULT_SHOTS, MAX_GRAPH_NODES, MAX_PER_GRAPH_NODES, MAX_PERMUTATION_NODES,
                        PARENT_PRIORS, PHI_KINDS)
from .estimate import MODES, estimate_feature_posterior
from .exceptions import BNStructureException, CircuitException
from .graphs import Graph, combinations, enumerate_dags, enumerate_permutations, fcg_sigma, parse_feature, sym_g
from .oracle import graph_posterior, ordered_feature_posterior, unordered_feature_posterior
from .qprep import Circuit
from .qsim import extract_claim_amplitudes, max_qubits, run, sample
from .scoring import PriorSpec, build_score_table, load_dataset


# global logger object
_LOGGER = logging.getLogger(__name__)


@dataclasses.dataclass
class RunConfig:
    """Resolved parameters of one command. Every report embeds it."""
    command: Optional[str] = None
    data: Optional[str] = None
    delimiter: Optional[str] = None
    cardinalities: Optional[List[int]] = None
    parent_prior: str = "uniform-subsets"
    phi: object = "constant"
    feature: str = "trivial"
    model: str = "ordered"
    lmax: Optional[int] = None
    mode: str = "exact"
    shots: int = DEFAULT_SHOTS
    seed: int = DEFAULT_SEED
    threads: int = 1
    output: Optional[str] = None
    bounds: dict = dataclasses.field(default_factory=dict)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """Reads a JSON or TOML (*.toml) document; unknown keys are rejected"""
        path = Path(path)
        if path.suffix == ".toml":
            with open(path, "rb") as reader:
                data = tomllib.load(reader)
        else:
            with open(path, "r") as reader:
                data = json.load(reader)
        data = data.get("config", data)

        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"Unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def prior(self) -> PriorSpec:
        return PriorSpec.from_dict({"parent_prior": self.parent_prior, "phi": self.phi})

    def bound(self, name: str, default: int) -> int:
        return int(self.bounds.get(name, default))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _finite(value):
    """JSON has no inf or nan"""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def emit(result: dict, config: RunConfig):
    """Write a JSON report with the resolved config and a timestamp"""
    report = dict(result)
    report["config"] = config.to_dict()
    report["generatedAt"] = datetime.now(timezone.utc).isoformat()
    text = json.dumps(_finite(report), indent=2, allow_nan=False)
    if config.output:
        Path(config.output).write_text(text + "\n")
        _LOGGER.info(f"Wrote {config.output}")
    else:
        print(text)


def _dataset(config: RunConfig):
    if config.data is None:
        raise ValueError("A dataset is required (--data).")
    return load_dataset(config.data, config.delimiter, config.cardinalities)


def cmd_enumerate(args, config: RunConfig) -> dict:
    what = args.what
    if what == "dags":
        graphs = enumerate_dags(args.n, bound=config.bound("graphs", MAX_GRAPH_NODES))
        rows = [{"index": i, "label": str(g), **g.to_dict()} for i, g in enumerate(graphs)]
    elif what == "fcg":
        orders = enumerate_permutations(args.n, bound=config.bound("permutations", MAX_PERMUTATION_NODES))
        rows = [{"index": i, "sigma": p.to_list(), "label": str(fcg_sigma(p)), **fcg_sigma(p).to_dict()}
                for i, p in enumerate(orders)]
    elif what == "combinations":
        if args.k is None:
            raise ValueError("enumerate combinations needs --k.")
        rows = [{"index": i, "combination": list(c)} for i, c in enumerate(combinations(args.n, args.k))]
    elif what == "permutations":
        orders = enumerate_permutations(args.n, bound=config.bound("permutations", MAX_PERMUTATION_NODES))
        rows = [{"index": i, "sigma": p.to_list(), "tau": list(p.tau)} for i, p in enumerate(orders)]
    else:
        if args.graph is None:
            raise ValueError("enumerate sym needs --graph.")
        g = Graph.from_sets(json.loads(args.graph))
        rows = [{"sigma": p.to_list()} for p in sym_g(g, bound=config.bound("permutations", MAX_PERMUTATION_NODES))]

    if args.text:
        for row in rows:
            print(row.get("label") or row.get("combination") or row.get("sigma"))
        return {}
    return {"kind": "enumeration", "what": what, "count": len(rows), "rows": rows}


def cmd_score(args, config: RunConfig) -> dict:
    d = _dataset(config)
    f = parse_feature(config.feature, d.n)
    table = build_score_table(d, config.prior(), None if f.is_trivial else f, config.lmax)
    return dict({"kind": "score-table", "columns": list(d.names), "entryCount": len(table)}, **table.to_dict())


def cmd_posterior(args, config: RunConfig) -> dict:
    d = _dataset(config)
    prior = config.prior()
    f = parse_feature(config.feature, d.n)

    if args.per_graph:
        report = graph_posterior(d, prior, config.model, f, bound=config.bound("per_graph", MAX_PER_GRAPH_NODES))
    elif config.model == "unordered":
        report = unordered_feature_posterior(d, prior, f, bound=config.bound("graphs", MAX_GRAPH_NODES))
    else:
        report = ordered_feature_posterior(d, prior, f, config.lmax, config.threads,
                                           bound=config.bound("permutations", MAX_PERMUTATION_NODES))
    return report.to_dict()


def cmd_estimate(args, config: RunConfig) -> dict:
    d = _dataset(config)
    f = parse_feature(config.feature, d.n)
    result = estimate_feature_posterior(d, config.prior(), f, config.lmax, config.mode, config.shots, config.seed,
                                        config.threads, qubit_bound=config.bound("qubits", max_qubits()))
    if args.emit_circuit:
        Path(args.emit_circuit).write_text(json.dumps(result.denominator.circuit.to_dict(), indent=2) + "\n")
        _LOGGER.info(f"Wrote the preparation circuit to {args.emit_circuit}")
    if result.discrepancy is not None:
        print(f"discrepancy vs oracle: {result.discrepancy:.3e}", file=sys.stderr)
    if result.interval is not None:
        print(f"interval: [{result.interval[0]:.6f}, {result.interval[1]:.6f}]", file=sys.stderr)
    return result.to_dict()


def cmd_simulate(args, config: RunConfig) -> dict:
    with open(args.circuit, "r") as reader:
        circuit = Circuit.from_dict(json.load(reader))
    state = run(circuit, bound=config.bound("qubits", max_qubits()))
    data = {"kind": "simulation", "qubitCount": circuit.qubit_count, "gates": len(circuit), "norm": state.norm()}

    if circuit.layout is not None:
        try:
            data["claim"] = extract_claim_amplitudes(state, circuit.layout).to_dict()
        except CircuitException as e:
            _LOGGER.warning(f"Claim amplitudes unavailable: {e}")
    if args.qubits:
        qubits = [int(q) for q in args.qubits.split(",")]
        data["qubits"] = qubits
        data["seed"] = config.seed
        data["histogram"] = sample(state, qubits, config.shots, config.seed)
    if args.dump:
        state.dump(args.dump)
        data["dump"] = args.dump
    return data


def cmd_report(args, config: RunConfig) -> dict:
    results, kinds = {}, {}
    for path in args.files:
        with open(path, "r") as reader:
            data = json.load(reader)
        kind = data.get("kind", "unknown")
        results[Path(path).name] = data
        kinds[kind] = kinds.get(kind, 0) + 1

    summary = {}
    for name, data in results.items():
        if data.get("kind") == "estimate":
            summary[name] = {"posterior": data.get("posterior"), "discrepancy": data.get("discrepancy")}
        elif data.get("kind") == "posterior":
            summary[name] = {"featureValue": data.get("featureValue")}
    return {"kind": "report", "kinds": kinds, "summary": summary, "results": results}


COMMANDS = {
    "enumerate": cmd_enumerate,
    "score": cmd_score,
    "posterior": cmd_posterior,
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or TOML run configuration")
    common.add_argument("--output", "-o", help="write the JSON report here instead of stdout")
    common.add_argument("--threads", type=int, help="cap on worker threads")
    common.add_argument("--verbose", "-v", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="delimited text file with a header row")
    data.add_argument("--delimiter")
    data.add_argument("--parent-prior", choices=PARENT_PRIORS)
    data.add_argument("--phi", choices=PHI_KINDS[:2])
    data.add_argument("--feature", help="trivial, edge:J1-J2 or @file.json")
    data.add_argument("--lmax", type=int)

    ap = argparse.ArgumentParser(prog="bn-structure", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", parents=[common])
    p.add_argument("what", choices=("dags", "fcg", "combinations", "permutations", "sym"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--graph", help="parent lists indexed by node, eg. '[[], [0], [0]]'")
    p.add_argument("--text", action="store_true", help="one line per item instead of JSON")

    sub.add_parser("score", parents=[common, data])

    p = sub.add_parser("posterior", parents=[common, data])
    p.add_argument("--model", choices=("unordered", "ordered"))
    p.add_argument("--per-graph", action="store_true")

    p = sub.add_parser("estimate", parents=[common, data])
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--emit-circuit", help="write the denominator circuit JSON here")

    p = sub.add_parser("simulate", parents=[common])
    p.add_argument("circuit")
    p.add_argument("--qubits", help="comma separated qubits to sample")
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dump", help="write the final state here")

    p = sub.add_parser("report", parents=[common])
    p.add_argument("files", nargs="+")
    return ap


def resolve_config(args) -> RunConfig:
    """Config file values, overridden by every flag given on the command line"""
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    config.command = args.command
    for field in dataclasses.fields(RunConfig):
        value = getattr(args, field.name, None)
        if value is not None and field.name not in ("command", "bounds"):
            setattr(config, field.name, value)
    if config.shots < 1:
        raise ValueError("--shots must be at least 1.")
    return config


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)

    try:
        config = resolve_config(args)
        result = COMMANDS[args.command](args, config)
    except (BNStructureException, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    if result:
        emit(result, config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
