import math

import numpy as np
import pytest

from multimode_emission import units
from multimode_emission.dynamics import TimeGrid, build_toy_model, evolve
from multimode_emission.emission import (
    CorrelationMatrix,
    decompose_modes,
    emitted_photons,
    first_order_correlation,
    integrated_spectrum,
    mode_occupation_ratio,
    significant_modes,
    time_dependent_spectrum,
    trapezoid_weights,
)
from multimode_emission.errors import DataIntegrityError, DiagnosticsWarning, SpaceMismatchError, UndefinedRatioError
from multimode_emission.quantum import annihilation, fock_state, number

KAPPA = 1.0
OMEGA = units.mhz_to_rad_per_us(0.3)


def single_photon_kernel(kappa, omega):
    return lambda t1, t2: kappa * np.exp(1j * omega * (t2 - t1)) * np.exp(-kappa * (t1 + t2) / 2)


@pytest.fixture(scope="module")
def single_photon():
    model = build_toy_model(3, OMEGA, 0.0, KAPPA)
    grid = TimeGrid.uniform(0, 12 / KAPPA, 121)
    out = math.sqrt(KAPPA) * annihilation(3)
    return model, grid, first_order_correlation(model, fock_state(3, 1), grid, out)


class TestFirstOrderCorrelation:
    def test_single_photon_closed_form(self, single_photon):
        _, grid, g = single_photon
        t = grid.samples
        ref = single_photon_kernel(KAPPA, OMEGA)(t[:, None], t[None, :])
        assert np.max(np.abs(g.values - ref)) < 1e-6

    def test_vacuum_is_zero(self):
        model = build_toy_model(3, OMEGA, 0.2, KAPPA)
        g = first_order_correlation(model, fock_state(3, 0), TimeGrid.uniform(0, 2, 11), annihilation(3))
        assert np.all(g.values == 0)
        assert emitted_photons(g) == 0.0

    def test_diagonal_matches_master_equation(self):
        chi = units.mhz_to_rad_per_us(0.47)
        model = build_toy_model(5, 0.0, chi, KAPPA)
        grid = TimeGrid.uniform(0, 4, 41)
        g = first_order_correlation(model, fock_state(5, 3), grid, math.sqrt(KAPPA) * annihilation(5))
        traj = evolve(model, fock_state(5, 3), grid)
        assert np.max(np.abs(g.flux() - KAPPA * traj.expect(number(5)).real)) < 1e-8

    def test_hermitian(self, single_photon):
        g = single_photon[2].values
        assert np.max(np.abs(g - g.conj().T)) <= 1e-9

    def test_short_window_warns(self):
        model = build_toy_model(3, 0.0, 0.0, KAPPA)
        with pytest.warns(DiagnosticsWarning):
            g = first_order_correlation(model, fock_state(3, 2), TimeGrid.uniform(0, 1, 11), annihilation(3))
        assert g.metadata["grid_warning"]

    def test_space_mismatch(self):
        model = build_toy_model(3, 0.0, 0.0, KAPPA)
        with pytest.raises(SpaceMismatchError):
            first_order_correlation(model, fock_state(3, 1), TimeGrid.uniform(0, 1, 3), annihilation(4))


class TestModes:
    def test_single_photon_one_mode(self, single_photon):
        d = decompose_modes(single_photon[2])
        assert mode_occupation_ratio(d) == pytest.approx(1.0, abs=1e-6)
        assert significant_modes(d) == 1

    def test_rank_one_recovery(self):
        grid = TimeGrid.uniform(0, 3, 61)
        t = grid.samples
        v = np.exp(-((t - 1.2) ** 2)) * np.exp(-2.0j * t)
        v /= math.sqrt(np.sum(trapezoid_weights(t) * abs(v) ** 2))
        g = CorrelationMatrix(grid, 2.5 * np.outer(v, v.conj()), trapezoid_weights(t))
        d = decompose_modes(g)
        assert d.occupations[0] == pytest.approx(2.5, abs=1e-10)
        phase = np.vdot(d.modes[0], v) / abs(np.vdot(d.modes[0], v))
        assert np.max(np.abs(d.modes[0] * phase - v)) < 1e-10

    def test_two_equal_modes(self):
        grid = TimeGrid.uniform(0, 1, 11)
        w = trapezoid_weights(grid.samples)
        u1 = np.zeros(11, complex)
        u2 = np.zeros(11, complex)
        u1[2] = 1 / math.sqrt(w[2])
        u2[7] = 1 / math.sqrt(w[7])
        g = CorrelationMatrix(grid, np.outer(u1, u1.conj()) + np.outer(u2, u2.conj()), w)
        assert mode_occupation_ratio(decompose_modes(g)) == pytest.approx(0.5, abs=1e-15)

    def test_orthonormal_and_trace(self, single_photon):
        g = single_photon[2]
        d = decompose_modes(g)
        assert np.max(np.abs(d.gram() - np.eye(len(d)))) <= 1e-8
        assert d.total == pytest.approx(emitted_photons(g), abs=1e-8)
        assert np.all(np.diff(d.occupations) <= 0)

    def test_reconstruct_round_trip(self):
        chi = units.mhz_to_rad_per_us(0.47)
        model = build_toy_model(5, 0.0, chi, KAPPA)
        g = first_order_correlation(model, fock_state(5, 2), TimeGrid.uniform(0, 8, 61), annihilation(5))
        d = decompose_modes(g)
        assert np.max(np.abs(g.values - d.reconstruct())) <= 1e-8 * emitted_photons(g)

    def test_max_modes(self, single_photon):
        assert len(decompose_modes(single_photon[2], max_modes=3)) == 3

    def test_non_hermitian_rejected(self):
        grid = TimeGrid.uniform(0, 1, 3)
        with pytest.raises(DataIntegrityError):
            CorrelationMatrix(grid, np.array([[1, 1j, 0], [1j, 1, 0], [0, 0, 1]]), np.ones(3))

    def test_zero_ratio_undefined(self):
        grid = TimeGrid.uniform(0, 1, 3)
        d = decompose_modes(CorrelationMatrix(grid, np.zeros((3, 3)), trapezoid_weights(grid.samples)))
        with pytest.raises(UndefinedRatioError):
            mode_occupation_ratio(d)


class TestBookkeeping:
    def test_linear_three_photons(self):
        model = build_toy_model(6, OMEGA, 0.0, KAPPA)
        grid = TimeGrid.uniform(0, 10 / KAPPA, 201)
        g = first_order_correlation(model, fock_state(6, 3), grid, math.sqrt(KAPPA) * annihilation(6))
        assert emitted_photons(g) == pytest.approx(3.0, abs=5e-3)
        assert emitted_photons(g) + g.metadata["residual_source_occupation"] == pytest.approx(3.0, rel=1e-3)


class TestSpectrum:
    def test_integrated_lorentzian(self):
        grid = TimeGrid.uniform(0, 30 / KAPPA, 3001)
        g = CorrelationMatrix.from_function(grid, single_photon_kernel(KAPPA, OMEGA))
        dw = np.linspace(-3, 3, 61)
        s = integrated_spectrum(g, OMEGA + dw)
        ref = KAPPA / ((KAPPA / 2) ** 2 + dw**2)
        assert np.max(np.abs(s - ref)) / ref.max() < 1e-3
        half = dw[s >= s.max() / 2]
        assert half.max() == pytest.approx(KAPPA / 2, abs=dw[1] - dw[0])

    def test_spectrogram_peak_location(self):
        grid = TimeGrid.uniform(0, 10 / KAPPA, 201)
        omega0 = 4.0
        g = CorrelationMatrix.from_function(grid, single_photon_kernel(KAPPA, omega0))
        omegas = np.linspace(0, 8, 81)
        sp = time_dependent_spectrum(g, omegas, [1.0, 2.0])
        for k in range(2):
            assert abs(omegas[np.argmax(sp.intensity[:, k])] - omega0) <= omegas[1] - omegas[0]
        assert sp.metadata["imag_residue"] < 1e-6

    def test_zero_spectrogram(self):
        grid = TimeGrid.uniform(0, 1, 11)
        g = CorrelationMatrix(grid, np.zeros((11, 11)), trapezoid_weights(grid.samples))
        sp = time_dependent_spectrum(g, np.linspace(-1, 1, 5))
        assert np.all(sp.intensity == 0)

    def test_window_recorded(self):
        grid = TimeGrid.uniform(0, 4, 41)
        g = CorrelationMatrix.from_function(grid, single_photon_kernel(KAPPA, 0.0))
        sp = time_dependent_spectrum(g, [0.0], [1.0], window_width=0.5)
        assert sp.metadata["window"] == "gaussian" and sp.metadata["window_width_us"] == 0.5
