"""Closed forms used as independent references."""

import math

def hyperbolic_exit_time_oracle(R: float) -> float:
    # int_0^R tanh(t/2) dt
    return 2.0 * math.log(math.cosh(R / 2.0))
