"""Instantaneous fuel consumption as a polynomial in speed and acceleration.

Rates are in mL/s for speed in m/s and acceleration in m/s^2:

    f = b0 + b1*v + b2*v^2 + b3*v^3 + max(a, 0) * (c0 + c1*v + c2*v^2)

The default coefficients are those of the polynomial fuel model of Kamal et
al. (model predictive control for urban fuel economy, IEEE Transactions on
Control Systems Technology), fitted for a passenger car. They are inputs:
override them in the run configuration (`fuel_b0` ... `fuel_c2`).
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError

VALIDATION_SPEED_RANGE = (0.0, 60.0)


@dataclass(frozen=True)
class FuelParams:
    b0: float = 0.1569
    b1: float = 2.450e-2
    b2: float = -7.415e-4
    b3: float = 5.975e-5
    c0: float = 0.07224
    c1: float = 9.681e-2
    c2: float = 1.075e-3

    def cruise(self, v: float) -> float:
        return self.b0 + self.b1 * v + self.b2 * v * v + self.b3 * v * v * v

    def validate(self) -> "FuelParams":
        """Ensure the cruise rate stays positive over the validation range.

        The cubic's minimum on a closed interval sits at an endpoint or at a
        real root of its derivative, so those are the only points checked.
        """
        lo, hi = VALIDATION_SPEED_RANGE
        candidates = [lo, hi]
        roots = np.roots([3 * self.b3, 2 * self.b2, self.b1])
        candidates.extend(
            float(r.real) for r in roots if abs(r.imag) < 1e-12 and lo <= r.real <= hi
        )
        for v in candidates:
            if not self.cruise(v) > 0:
                raise ConfigError(
                    f"cruise fuel rate {self.cruise(v):.6g} <= 0 at {v:.3f} m/s",
                    key="fuel_b0..fuel_b3",
                )
        return self


def fuel_rate(v: float, a: float, p: FuelParams) -> float:
    """Fuel rate in mL/s; acceleration only adds consumption when positive."""
    f_cruise = p.cruise(v)
    if a <= 0:
        return f_cruise
    return f_cruise + a * (p.c0 + p.c1 * v + p.c2 * v * v)
