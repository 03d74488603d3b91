"""Quartic potentials F, their derivatives, and the structural constants.

The default is the double well F(s) = (s^2 - 1)^2 / 4 with f = F' = s^3 - s.
Arbitrary quartics with positive leading coefficient are accepted; the
dissipativity constant C_0 and the convexity defect c_1^2 are computed from
the critical points of the relevant scalar functions rather than supplied by
the user.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Potential", "double_well", "zero_potential"]


def _real_roots(coeffs) -> np.ndarray:
    """Real roots of a polynomial given in ascending-power order."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if len(c) <= 1:
        return np.array([])
    roots = np.polynomial.polynomial.polyroots(c)
    return np.real(roots[np.abs(np.imag(roots)) < 1e-9])


@dataclass(frozen=True)
class Potential:
    """A polynomial potential F with derivative f = F'.

    ``F_coeffs`` are in ascending-power order (constant term first).  A
    regular potential has degree exactly 4 with positive leading
    coefficient; the all-zero vector is admitted as the trivial potential
    of linear test problems (f == 0).
    """

    F_coeffs: tuple[float, ...]
    C0_density: float = field(init=False)  # max(0, -min_s s f(s)), per unit volume
    c1_sq: float = field(init=False)  # max(0, -min_s F''(s))

    def __post_init__(self):
        c = tuple(float(v) for v in self.F_coeffs)
        if len(c) != 5:
            raise ValueError("potential needs 5 coefficients, constant term first")
        if any(c) and not c[4] > 0:
            raise ValueError("degree-4 leading coefficient must be positive")
        object.__setattr__(self, "F_coeffs", c)
        object.__setattr__(self, "C0_density", self._compute_C0_density())
        object.__setattr__(self, "c1_sq", self._compute_c1_sq())

    @property
    def is_zero(self) -> bool:
        return not any(self.F_coeffs)

    # -- scalar evaluations (Horner) ------------------------------------

    def F(self, s):
        c = self.F_coeffs
        s = np.asarray(s, dtype=float)
        return ((((c[4] * s + c[3]) * s + c[2]) * s + c[1]) * s) + c[0]

    def f(self, s):
        c = self.F_coeffs
        s = np.asarray(s, dtype=float)
        return ((4 * c[4] * s + 3 * c[3]) * s + 2 * c[2]) * s + c[1]

    def f_prime(self, s):
        c = self.F_coeffs
        s = np.asarray(s, dtype=float)
        return (12 * c[4] * s + 6 * c[3]) * s + 2 * c[2]

    # -- structural constants -------------------------------------------

    def _compute_C0_density(self) -> float:
        if self.is_zero:
            return 0.0
        # g(s) = s f(s) is quartic with positive leading coefficient; its
        # minimum is attained at a real critical point of g.
        c = self.F_coeffs
        g = np.array([0.0, c[1], 2 * c[2], 3 * c[3], 4 * c[4]])
        gp = np.arange(1, 5) * g[1:]
        crit = _real_roots(gp)
        vals = np.polynomial.polynomial.polyval(crit, g) if len(crit) else np.array([0.0])
        return float(max(0.0, -vals.min()))

    def _compute_c1_sq(self) -> float:
        if self.is_zero:
            return 0.0
        c = self.F_coeffs
        # F'' is quadratic opening upwards; minimum at its vertex.
        a2, a1, a0 = 12 * c[4], 6 * c[3], 2 * c[2]
        fpp_min = a0 - a1 * a1 / (4 * a2)
        return float(max(0.0, -fpp_min))

    def dissipativity_floor(self, domain_measure: float) -> float:
        """C_0 such that <f(v), v> >= -C_0 for every field on the domain."""
        return self.C0_density * domain_measure

    def local_lipschitz_constant(self) -> float:
        """C with |f(x) - f(y)| <= C (1 + x^2 + y^2)|x - y| for all x, y.

        For f = b1 + 2 b2 s + 3 b3 s^2 + 4 b4 s^3 the divided difference is
        bounded by |b1| + 2|b2| + 3|b3|(|x| + |y|) + 4 b4 (x^2 + |xy| + y^2),
        and each term is dominated by the stated envelope with
        C = |b1| + 2|b2| + 3|b3| + 6 b4.
        """
        c = self.F_coeffs
        return abs(c[1]) + 2 * abs(c[2]) + 3 * abs(c[3]) + 6 * c[4]


def double_well() -> Potential:
    """F(s) = (s^2 - 1)^2 / 4, the standard phase-separation potential."""
    return Potential((0.25, 0.0, -0.5, 0.0, 0.25))


def zero_potential() -> Potential:
    """The trivial potential (f == 0) used by linear test problems."""
    return Potential((0.0, 0.0, 0.0, 0.0, 0.0))
