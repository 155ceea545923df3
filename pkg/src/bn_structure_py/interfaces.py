from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Tuple


@dataclass(frozen=True)
class Control:
    """A control on ``qubit`` that is active for the basis value ``polarity``
       (1 for a P_1 control, 0 for a P_0 control).
    """
    qubit: int
    polarity: int = 1

    def to_dict(self) -> dict:
        return {"qubit": self.qubit, "polarity": self.polarity}


class Gate(ABC):
    """Interface of all circuit instructions"""

    kind = "gate"

    @abstractmethod
    def qubits(self) -> Tuple[int, ...]:
        """All qubits the gate touches, targets and controls"""
        pass

    @abstractmethod
    def apply(self, state):
        """Apply the gate in place to a StateVector"""
        pass

    @abstractmethod
    def to_dict(self) -> dict:
        pass
