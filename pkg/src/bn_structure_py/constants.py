"""Default bounds and tolerances"""

# largest n for sums over graphs
MAX_GRAPH_NODES = 5

# largest n for sums over Sym_n
MAX_PERMUTATION_NODES = 8

# largest n for per-graph posterior output
MAX_PER_GRAPH_NODES = 4

# dense statevector memory bound, overridable through MAX_QUBITS_ENV
MAX_QUBITS = 26
MAX_QUBITS_ENV = "BN_STRUCTURE_MAX_QUBITS"

# parent sets are stored as int bit masks
MAX_COLUMNS = 64

NORM_TOLERANCE = 1e-10
RESIDUAL_TOLERANCE = 1e-10

PARENT_PRIORS = ("uniform-subsets", "uniform-sizes")
PHI_KINDS = ("constant", "delta-id", "table")

DEFAULT_SHOTS = 10000
DEFAULT_SEED = 7

# two-sided 95% normal quantile used by the Wilson interval
WILSON_Z = 1.959963984540054
