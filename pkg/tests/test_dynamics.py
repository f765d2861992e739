import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from multimode_emission import units
from multimode_emission.dynamics import (
    TimeGrid,
    build_effective_model,
    build_toy_model,
    chirped_frequency,
    constant,
    drive_envelope,
    evolve,
    propagate_matrix,
)
from multimode_emission.errors import DataIntegrityError, InvalidArgumentError, SpaceMismatchError
from multimode_emission.quantum import (
    HilbertSpace,
    annihilation,
    coherent_state,
    embed,
    fock_state,
    number,
    tensor,
)
from multimode_emission.dynamics import LindbladModel

CHI = units.mhz_to_rad_per_us(0.47)


def _params(swap=0.0, sa=0.0, sb=0.0, chi_a=0.0, chi_b=0.0, chi_ab=0.0):
    return SimpleNamespace(
        swap_scale=swap, stark_scale_a=sa, stark_scale_b=sb, chi_a=chi_a, chi_b=chi_b, chi_ab=chi_ab
    )


class TestDriveEnvelope:
    @pytest.mark.parametrize(
        "t,expected", [(-1.0, 0.0), (0.0, 0.0), (2.0, 0.3 * math.tanh(1.0)), (200.0, 0.3)]
    )
    def test_values(self, t, expected):
        assert drive_envelope(0.3, 2.0)(t) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("t0", [0.0, -1.0])
    def test_rejects_nonpositive_rise(self, t0):
        with pytest.raises(InvalidArgumentError):
            drive_envelope(0.1, t0)

    def test_chirp_floor(self):
        f = chirped_frequency(0.0, CHI, 5, 1.0)
        assert f(0.0) == pytest.approx(8 * CHI)
        assert f(math.log(5.0) + 0.1) == 0.0


class TestModels:
    def test_toy_hamiltonian(self):
        m = build_toy_model(4, 0.5, 0.2, 1.0)
        n = np.arange(4)
        assert np.allclose(m.hamiltonian(0.0), np.diag(0.5 * n + 0.2 * n * (n - 1)))

    def test_negative_kappa(self):
        with pytest.raises(InvalidArgumentError):
            build_toy_model(4, 0.0, 0.0, -1.0)

    def test_non_hermitian_term_rejected(self):
        a = annihilation(3)
        with pytest.raises(DataIntegrityError):
            LindbladModel(HilbertSpace((3,)), ((a, constant(1.0)),), ())

    def test_space_mismatch(self):
        with pytest.raises(SpaceMismatchError):
            LindbladModel(HilbertSpace((3,)), ((number(4), constant(1.0)),), ())


class TestEvolve:
    def test_free_decay(self):
        grid = TimeGrid.uniform(0, 3, 31)
        traj = evolve(build_toy_model(3, 0.0, 0.0, 2.0), fock_state(3, 1), grid)
        n = traj.expect(number(3)).real
        assert np.max(np.abs(n - np.exp(-2.0 * grid.samples))) < 1e-6
        assert traj.diagnostics["max_trace_drift"] < 1e-8

    def test_kerr_phase_oracle(self):
        dim, chi, t = 8, 0.9, 1.7
        psi0 = coherent_state(dim, 1.0)
        traj = evolve(build_toy_model(dim, 0.0, chi, 0.0), psi0, TimeGrid.uniform(0, t, 5))
        n = np.arange(dim)
        exact = psi0.amplitudes * np.exp(-1j * chi * n * (n - 1) * t)
        fid = np.vdot(exact, traj.states[-1].matrix @ exact).real
        assert fid >= 1 - 1e-8

    @pytest.mark.parametrize("chi", [0.0, 0.5, -2.0])
    def test_kerr_conserves_number(self, chi):
        traj = evolve(build_toy_model(6, 0.3, chi, 0.0), coherent_state(6, 0.9 + 0.2j), TimeGrid.uniform(0, 4, 21))
        n = traj.expect(number(6)).real
        assert np.max(np.abs(n - n[0])) < 1e-10

    def test_kerr_emitter_rate_equation(self):
        kappa = 1.0
        grid = TimeGrid.uniform(0, 6 / kappa, 601)
        traj = evolve(build_toy_model(6, 0.0, CHI, kappa), fock_state(6, 5), grid)
        emitted = kappa * np.trapezoid(traj.expect(number(6)).real, grid.samples)
        assert emitted == pytest.approx(5 * (1 - math.exp(-6)), abs=1e-3)
        assert traj.diagnostics["max_trace_drift"] < 1e-8
        assert traj.diagnostics["min_eigenvalue"] >= -1e-7

    def test_deterministic(self):
        m = build_toy_model(5, chirped_frequency(0.0, CHI, 3, 1.0), CHI, 1.0)
        grid = TimeGrid.uniform(0, 2, 11)
        a = evolve(m, fock_state(5, 3), grid)
        b = evolve(m, fock_state(5, 3), grid)
        assert all(np.array_equal(x.matrix, y.matrix) for x, y in zip(a.states, b.states))


class TestEffectiveModel:
    def test_zero_drive_keeps_storage(self):
        p = _params(swap=-100.0, sa=-15.0, sb=-22.0, chi_a=-0.1, chi_b=-0.25, chi_ab=-0.7)
        m = build_effective_model(p, 0.0, 5.0, dims=(4, 3))
        rho0 = tensor(fock_state(4, 2), fock_state(3, 0))
        traj = evolve(m, rho0, TimeGrid.uniform(0, 3, 7))
        na = embed(number(4), m.space, 0)
        assert np.max(np.abs(traj.expect(na).real - 2.0)) < 1e-10

    def test_linear_limit_first_moments(self):
        swap, sa, sb, kappa, F = 3.0, -1.2, 0.7, 2.0, 0.8
        m = build_effective_model(_params(swap, sa, sb), constant(F), kappa, dims=(12, 8))
        alpha0 = 0.6
        rho0 = tensor(coherent_state(12, alpha0), fock_state(8, 0))
        grid = TimeGrid.uniform(0, 2.5, 26)
        traj = evolve(m, rho0, grid)
        a = traj.expect(embed(annihilation(12), m.space, 0))
        b = traj.expect(embed(annihilation(8), m.space, 1))

        g, wa, wb = swap * F, sa * F**2, sb * F**2
        M = np.array([[-1j * wa, g], [-g, -1j * wb - kappa / 2]])
        ref = solve_ivp(lambda t, y: M @ y, (0, grid.t1), np.array([alpha0, 0], complex),
                        t_eval=grid.samples, rtol=1e-12, atol=1e-14, method="DOP853")
        assert np.max(np.abs(a - ref.y[0])) < 1e-6
        assert np.max(np.abs(b - ref.y[1])) < 1e-6

    def test_reference_model_builds(self):
        p = _params(
            swap=units.mhz_to_rad_per_us(-16.03),
            chi_a=units.mhz_to_rad_per_us(-0.017),
            chi_b=units.mhz_to_rad_per_us(-0.04),
            chi_ab=units.mhz_to_rad_per_us(-0.11),
        )
        m = build_effective_model(p, drive_envelope(0.01, 1.5), 5.0)
        assert m.space == HilbertSpace((6, 4))
        assert m.labels["output_slot"] == 1


class TestPropagateMatrix:
    @pytest.fixture
    def model(self):
        return build_toy_model(4, chirped_frequency(0.0, 1.0, 2, 1.5), 0.4, 1.5)

    def test_matches_evolve(self):
        model = build_toy_model(4, drive_envelope(2.0, 0.5), 0.4, 1.5)
        rho0 = coherent_state(4, 0.5).projector()
        traj = evolve(model, rho0, TimeGrid.uniform(0.0, 1.3, 2))
        x = propagate_matrix(model, rho0.matrix, 0.0, 1.3)
        assert np.max(np.abs(x - traj.states[-1].matrix)) < 1e-10

    def test_zero(self, model):
        assert np.array_equal(propagate_matrix(model, np.zeros((4, 4)), 0.0, 1.0), np.zeros((4, 4)))

    def test_linearity(self, model):
        rng = np.random.default_rng(11)
        x, y = (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)) for _ in range(2))
        al, be = 0.7 - 0.2j, -1.3 + 0.5j
        lhs = propagate_matrix(model, al * x + be * y, 0.2, 1.1)
        rhs = al * propagate_matrix(model, x, 0.2, 1.1) + be * propagate_matrix(model, y, 0.2, 1.1)
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_backwards_rejected(self, model):
        with pytest.raises(InvalidArgumentError):
            propagate_matrix(model, np.eye(4), 1.0, 0.5)

    def test_shape_mismatch(self, model):
        with pytest.raises(SpaceMismatchError):
            propagate_matrix(model, np.eye(3), 0.0, 0.5)


class TestTimeGrid:
    @pytest.mark.parametrize("samples", [[0.0], [0.0, 1.0, 1.0], [1.0, 0.0]])
    def test_invalid(self, samples):
        with pytest.raises(InvalidArgumentError):
            TimeGrid(np.array(samples))
