from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ctqubo.models.ct_models import EncodingSpec
from ctqubo.qubo.model import Assignment, QuboModel, one_hot_violations

@dataclass(frozen=True, eq=False)
class SolveResult:
    best_assignment: Assignment
    best_energy: float
    samples: List[Tuple[Assignment, float]]
    trace: np.ndarray
    one_hot_valid: bool = True
    minimizers: List[Assignment] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def gap(self, model: QuboModel) -> float:
        """Relative distance of the best energy to the analytic minimum -offset."""
        if model.offset == 0.0:
            return 0.0 if self.best_energy == 0.0 else float("inf")
        return (self.best_energy + model.offset) / model.offset

def one_hot_flag(x: Assignment, encoding: Optional[EncodingSpec]) -> bool:
    if encoding is None:
        return True
    return one_hot_violations(x, encoding) == 0
