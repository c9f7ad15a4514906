from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CtbrCommand:
    """Collective thrust (N) and desired body rates (rad/s)."""
    collective: float
    body_rates: np.ndarray

    @classmethod
    def hover(cls, mass: float, gravity: float = 9.81) -> "CtbrCommand":
        return cls(mass * gravity, np.zeros(3))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.collective) and np.all(np.isfinite(self.body_rates)))
