""" Collection of Exception classes used by the bn_structure_py package"""

class BNStructureException(Exception):
    """Base class for all exceptions.

    :param Exception: Human readable description of the failure
    :type Exception: str
    """
    pass


class DatasetParseException(BNStructureException):
    """The dataset could not be parsed. The message names the row
       and column where parsing failed.

    :param BNStructureException: Description including the location
    :type BNStructureException: str
    """
    pass


class SizeBoundException(BNStructureException):
    """A node count, permutation count or qubit count exceeds the
       configured enumeration or simulation bound.
    """
    pass


class InvalidFeatureException(BNStructureException):
    """The feature set definition is invalid (eg. a self edge)
    """
    pass


class DimensionMismatchException(BNStructureException):
    """Node counts of dataset, feature set, score table or layout disagree
    """
    pass


class CircuitException(BNStructureException):
    """The circuit is malformed or its simulated state violates the
       expected structure.
    """
    pass


class NoTargetException(BNStructureException):
    """Amplitude amplification was requested for a state without any
       weight in the target subspace.
    """
    pass


class DegenerateStateException(BNStructureException):
    """A quantity that must be non-zero (z0, a denominator sum) is zero
    """
    pass
