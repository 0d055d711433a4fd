"""
Abstract base classes for operators, trainers and pipelines following Strategy Pattern and Open/Closed Principle
"""
from abc import ABC, abstractmethod
from typing import Any, Dict

import numpy as np


class IForwardOperator(ABC):
    """Interface for the data operator P of the functional (identity or projection)"""

    kind: str = "abstract"

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        """Map a (C, H, W) image to data space"""
        pass

    @abstractmethod
    def adjoint(self, data: np.ndarray) -> np.ndarray:
        """Map data back to a (C, H, W) image with the exact adjoint"""
        pass

    @abstractmethod
    def norm_bound(self) -> float:
        """Upper bound on the operator 2-norm"""
        pass


class IDictionaryTrainer(ABC):
    """Interface for dictionary learning"""

    @abstractmethod
    def fit(self, patches: np.ndarray) -> "IDictionaryTrainer":
        """Learn a dictionary from an (N, C*m*m) training matrix"""
        pass

    @abstractmethod
    def evaluate(self, patches: np.ndarray) -> Dict[str, float]:
        """Representation error of the learned dictionary"""
        pass


class IPipeline(ABC):
    """Interface for experiment pipelines"""

    @abstractmethod
    def run(self) -> Dict[str, Any]:
        """Execute the pipeline, write artifacts and return the metrics summary"""
        pass
