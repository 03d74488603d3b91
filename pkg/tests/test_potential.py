"""Quartic potential structure: constants, dissipativity, Taylor/Lipschitz bounds."""

import numpy as np
import pytest
from scipy.integrate import quad

from chc.fem import FemFunction, assemble, build_interval_mesh
from chc.potential import Potential, double_well, zero_potential
from chc.stepper import dissipativity_check, functional_F


@pytest.fixture(scope="module")
def dw():
    return double_well()


class TestScalarEvaluations:
    def test_f_values(self, dw):
        assert dw.f(1.0) == pytest.approx(0.0)
        assert dw.f(0.0) == pytest.approx(0.0)
        assert dw.f(2.0) == pytest.approx(6.0)  # s^3 - s at 2

    def test_F_values(self, dw):
        assert dw.F(1.0) == pytest.approx(0.0)
        assert dw.F(0.0) == pytest.approx(0.25)

    def test_c1_sq(self, dw):
        # f'(s) = 3s^2 - 1 has minimum -1, so the convexity defect is 1
        assert dw.c1_sq == pytest.approx(1.0)

    def test_C0_density(self, dw):
        # min_s s f(s) = min (s^4 - s^2) = -1/4
        assert dw.C0_density == pytest.approx(0.25)
        assert dw.dissipativity_floor(2.0) == pytest.approx(0.5)

    def test_f_is_derivative_of_F(self, dw):
        grid = np.linspace(-3, 3, 61)
        for eps in (1e-4, 1e-5):
            fd = (dw.F(grid + eps) - dw.F(grid - eps)) / (2 * eps)
            assert np.max(np.abs(fd - dw.f(grid))) < 50 * eps**2

    def test_f_prime(self, dw):
        grid = np.linspace(-3, 3, 61)
        assert np.allclose(dw.f_prime(grid), 3 * grid**2 - 1)


class TestValidation:
    def test_wrong_length(self):
        with pytest.raises(ValueError):
            Potential((1.0, 2.0, 3.0))

    def test_nonpositive_leading(self):
        with pytest.raises(ValueError):
            Potential((0.0, 0.0, 0.0, 0.0, -1.0))
        with pytest.raises(ValueError):
            Potential((1.0, 0.0, 0.0, 0.0, 0.0))

    def test_zero_potential_allowed(self):
        p = zero_potential()
        assert p.is_zero
        assert p.f(3.0) == 0.0
        assert p.c1_sq == 0.0
        assert p.C0_density == 0.0


class TestFunctional:
    def setup_method(self):
        self.mesh = build_interval_mesh(1.0, 64)
        self.ops = assemble(self.mesh)

    def test_constant_one(self, dw):
        v = FemFunction(self.mesh, np.ones(self.ops.n_dofs))
        assert functional_F(v, dw, self.ops) == pytest.approx(0.0, abs=1e-14)

    def test_constant_zero(self, dw):
        v = FemFunction(self.mesh, np.zeros(self.ops.n_dofs))
        assert functional_F(v, dw, self.ops) == pytest.approx(0.25)

    def test_linear_ramp(self, dw):
        # v(x) = 2x - 1 on [0,1]: integral of F(2x-1) = 2/15
        v = FemFunction(self.mesh, 2.0 * self.mesh.vertices - 1.0)
        oracle, _ = quad(lambda x: dw.F(2 * x - 1), 0.0, 1.0)
        assert oracle == pytest.approx(2.0 / 15.0)
        assert functional_F(v, dw, self.ops) == pytest.approx(2.0 / 15.0, abs=1e-12)


class TestDissipativity:
    def test_zero_field(self, dw):
        mesh = build_interval_mesh(1.0, 16)
        ops = assemble(mesh)
        v = FemFunction(mesh, np.zeros(ops.n_dofs))
        assert dissipativity_check(dw, [v], ops) >= -1e-10

    def test_random_fields(self, dw):
        mesh = build_interval_mesh(1.0, 32)
        ops = assemble(mesh)
        rng = np.random.default_rng(7)
        fields = [
            FemFunction(mesh, 3.0 * rng.standard_normal(ops.n_dofs))
            for _ in range(1000)
        ]
        assert dissipativity_check(dw, fields, ops) >= -1e-10


class TestScalarGridBounds:
    def test_local_lipschitz(self, dw):
        # f = -s + s^3: C = |b1| + 2|b2| + 3|b3| + 6 b4 = 1 + 2*0.5 + 6*0.25
        C = dw.local_lipschitz_constant()
        assert C == pytest.approx(2.5)
        grid = np.linspace(-4, 4, 161)
        x, y = np.meshgrid(grid, grid)
        lhs = np.abs(dw.f(x) - dw.f(y))
        rhs = C * (1 + x**2 + y**2) * np.abs(x - y)
        assert np.all(lhs <= rhs + 1e-12)

    def test_taylor_bound(self, dw):
        grid = np.linspace(-4, 4, 161)
        x, y = np.meshgrid(grid, grid)
        lhs = dw.F(x) - dw.F(y)
        rhs = dw.f(x) * (x - y) + 0.5 * dw.c1_sq * (x - y) ** 2
        assert np.all(lhs <= rhs + 1e-10)


def test_custom_quartic_constants():
    # F = s^4 (no well): f = 4s^3, s f(s) = 4 s^4 >= 0 so C_0 = 0; F'' = 12 s^2 >= 0
    p = Potential((0.0, 0.0, 0.0, 0.0, 1.0))
    assert p.C0_density == 0.0
    assert p.c1_sq == 0.0
