"""One-sided pooled two-proportion z-test for main vs. control accuracy."""

from __future__ import annotations

import math

# One-sided standard-normal critical values for p = .001, .01, .05.
CRITICAL_VALUES = ((3.090, "***"), (2.326, "**"), (1.645, "*"))


def pooled_z(p_main: float, p_control: float, n_test: int) -> float:
    """z = (p1 - p2) / sqrt(pbar (1 - pbar) 2/n) with pbar = (p1 + p2) / 2."""
    if n_test < 1:
        raise ValueError("n_test must be >= 1")
    for p in (p_main, p_control):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"accuracy {p} outside [0, 1]")
    diff = p_main - p_control
    pbar = (p_main + p_control) / 2.0
    var = pbar * (1.0 - pbar) * (2.0 / n_test)
    if var == 0.0:
        # both accuracies are 0 or both are 1
        return 0.0
    return diff / math.sqrt(var)


def stars_for(z: float) -> str:
    for threshold, stars in CRITICAL_VALUES:
        if z >= threshold:
            return stars
    return "none"


def significance_test(acc_main: float, acc_control: float, n_test: int) -> tuple[float, str]:
    """Returns ``(z, stars)``; stars is "none" when not significant at p = .05."""
    z = pooled_z(acc_main, acc_control, n_test)
    return z, stars_for(z)
