"""Lumped-element circuit -> dressed modes -> effective Hamiltonian coefficients.

Two cavities (storage a, leakage b) couple capacitively to a flux-tunable
transmon coupler c.  The linearized circuit is diagonalized in the
(phi_a, phi_c, phi_b) node basis, the coupler flux is expanded in the
dressed modes, and the quartic junction term yields the Kerr coefficients
while the flux drive yields the swap rate and Stark shifts.

Inputs use fF, nH, GHz (E_J / h) and radians.  Internally the circuit algebra
is SI; everything returned in :class:`DressedModes` and
:class:`EffectiveParams` is in rad/us, except the participation
coefficients which are fluxes in Wb.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import units
from .errors import (
    DataIntegrityError,
    InvalidArgumentError,
    UnsupportedConfigurationError,
)

PHI0 = units.FLUX_QUANTUM


class WeakCouplingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CircuitNetlist:
    C_a: float  # fF
    C_b: float
    C_c: float
    C_ac: float
    C_bc: float
    C_bL: float
    L_a: float  # nH
    L_b: float
    E_J: float  # GHz (E_J / h)
    phi_dc: float  # rad

    #: key names used in netlist files; units are part of the key
    FILE_KEYS = {
        "C_a": "C_a_fF",
        "C_b": "C_b_fF",
        "C_c": "C_c_fF",
        "C_ac": "C_ac_fF",
        "C_bc": "C_bc_fF",
        "C_bL": "C_bL_fF",
        "L_a": "L_a_nH",
        "L_b": "L_b_nH",
        "E_J": "E_J_GHz",
        "phi_dc": "phi_dc_rad",
    }

    def __post_init__(self):
        for name in ("C_a", "C_b", "C_c", "C_ac", "C_bc", "C_bL", "L_a", "L_b", "E_J"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidArgumentError(f"{name} must be a finite non-negative number, got {v}")
        for name in ("C_a", "C_b", "C_c", "L_a", "L_b", "E_J"):
            if getattr(self, name) <= 0:
                raise InvalidArgumentError(f"{name} must be positive")
        smallest = min(self.C_a, self.C_b, self.C_c)
        if self.C_ac >= smallest or self.C_bc >= smallest:
            warnings.warn(
                "coupling capacitances are not small compared with C_a, C_b, C_c; "
                "the weak-coupling capacitance matrix is inaccurate",
                WeakCouplingWarning,
                stacklevel=3,
            )

    def replace(self, **changes) -> "CircuitNetlist":
        d = asdict(self)
        d.update(changes)
        return CircuitNetlist(**d)

    def to_file_dict(self) -> dict:
        return {self.FILE_KEYS[k]: v for k, v in asdict(self).items()}

    @classmethod
    def from_file_dict(cls, values: dict) -> "CircuitNetlist":
        kwargs = {}
        for name, key in cls.FILE_KEYS.items():
            if key not in values:
                raise KeyError(key)
            kwargs[name] = float(values[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class DressedModes:
    omega_a: float  # rad/us
    omega_c: float
    omega_b: float
    lambda_a: float  # Wb
    lambda_c: float
    lambda_b: float
    zeta: np.ndarray  # columns: a, c, b eigenvectors of sqrt(C) V sqrt(C)

    @property
    def lambda_bar(self) -> float:
        return self.lambda_a ** 2 + self.lambda_b ** 2 + self.lambda_c ** 2

    @property
    def omegas(self):
        return np.array([self.omega_a, self.omega_c, self.omega_b])

    @property
    def lambdas(self):
        return np.array([self.lambda_a, self.lambda_c, self.lambda_b])


@dataclass(frozen=True)
class EffectiveParams:
    """Effective two-cavity Hamiltonian coefficients, all in rad/us."""

    chi_a: float
    chi_b: float
    chi_ab: float
    swap_scale: float
    stark_scale_a: float
    stark_scale_b: float
    omega_d: float = float("nan")

    def scaled(self, **changes) -> "EffectiveParams":
        d = asdict(self)
        d.update(changes)
        return EffectiveParams(**d)

    def to_dict(self, mhz=True) -> dict:
        d = asdict(self)
        if mhz:
            return {k + "_MHz": units.rad_per_us_to_mhz(v) for k, v in d.items()}
        return d

    def to_json(self, **extra) -> str:
        return json.dumps({**self.to_dict(), **extra}, indent=2, sort_keys=True)


# -- SQUID -----------------------------------------------------------------------------


def squid_reduce(ej1: float, ej2: float, cj1: float, cj2: float, ct: float):
    """Reduce a symmetric two-junction SQUID to one effective junction.

    Returns ``(E_J, C_c)`` with C_c = C_j1 + C_j2 + C_t; the loop potential is
    then -2 E_J cos(phi_ext / 2) cos(phi_c).  Only the symmetric closed form is
    supported.
    """
    m1 = cj1 / (cj1 + cj2)
    m2 = cj2 / (cj1 + cj2)
    if not (math.isclose(ej1, ej2, rel_tol=1e-12) and math.isclose(cj1, cj2, rel_tol=1e-12)):
        err = UnsupportedConfigurationError(
            f"asymmetric SQUID (E_J {ej1}/{ej2}, C_j {cj1}/{cj2}; m1={m1:.6g}, m2={m2:.6g}) "
            "has no closed-form reduction here"
        )
        err.m1, err.m2 = m1, m2
        raise err
    return ej1, cj1 + cj2 + ct


def squid_weights(cj1: float, cj2: float):
    """Flux weights m1, m2 that remove the drive-velocity coupling."""
    return cj1 / (cj1 + cj2), cj2 / (cj1 + cj2)


# -- matrices ----------------------------------------------------------------------------


def loaded_capacitances(net: CircuitNetlist):
    """Bold capacitances (C_a + C_ac, C_c + C_bc + C_ac, C_b + C_bc + C_bL) in fF."""
    return (
        net.C_a + net.C_ac,
        net.C_c + net.C_bc + net.C_ac,
        net.C_b + net.C_bc + net.C_bL,
    )


def kinetic_matrix(net: CircuitNetlist) -> np.ndarray:
    """Weak-coupling inverse capacitance matrix in the (Q_a, Q_c, Q_b) basis, in 1/F."""
    ca, cc, cb = (units.femtofarad(x) for x in loaded_capacitances(net))
    cac, cbc = units.femtofarad(net.C_ac), units.femtofarad(net.C_bc)
    m = np.array(
        [
            [1 / ca, cac / (ca * cc), 0.0],
            [cac / (ca * cc), 1 / cc, cbc / (cb * cc)],
            [0.0, cbc / (cb * cc), 1 / cb],
        ]
    )
    if np.linalg.eigvalsh(m)[0] <= 0:
        raise DataIntegrityError("inverse capacitance matrix is not positive definite")
    return m


#: cos(phi_dc/2) at or below this counts as the phi_dc -> pi boundary
BIAS_FLOOR = 1e-12


def potential_matrix(net: CircuitNetlist) -> np.ndarray:
    """diag(1/L_a, 8 pi^2 E_J cos(phi_dc/2) / phi0^2, 1/L_b) in 1/H."""
    c = math.cos(net.phi_dc / 2)
    if c <= BIAS_FLOOR:
        raise UnsupportedConfigurationError(
            f"cos(phi_dc/2) = {c:.3g} <= 0: the coupler has no transmon regime at this bias"
        )
    ej = units.josephson_energy_joule(net.E_J)
    return np.diag(
        [1 / units.nanohenry(net.L_a), 8 * math.pi ** 2 * ej * c / PHI0 ** 2, 1 / units.nanohenry(net.L_b)]
    )


def _sqrtm_spd(m):
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(w)) @ v.T


def dynamical_matrix(net: CircuitNetlist) -> np.ndarray:
    """sqrt(C) V sqrt(C) in (rad/us)^2; its eigenvalues are omega_n^2."""
    sc = _sqrtm_spd(kinetic_matrix(net))
    return units.inverse_square_seconds_to_rad_per_us_squared(sc @ potential_matrix(net) @ sc)


def _modes_from_matrices(cinv: np.ndarray, v: np.ndarray, coupler_index: int = 1):
    """Frequencies (rad/s), participations (Wb) and eigenvectors, in bare-mode order.

    Eigenvectors are assigned to bare node modes by maximal overlap (ties by
    frequency order) and their sign fixed so the own-node component is positive.
    """
    sc = _sqrtm_spd(cinv)
    dyn = sc @ v @ sc
    w2, z = np.linalg.eigh(dyn)
    if np.any(w2 <= 0):
        raise DataIntegrityError("non-positive mode frequency from the circuit eigenproblem")
    n = len(w2)
    overlap = np.abs(z) ** 2
    # tiny frequency-order bias breaks exact ties deterministically
    cost = -(overlap + 1e-12 * np.arange(n)[None, :] * np.arange(n)[:, None])
    rows, cols = linear_sum_assignment(cost)
    order = np.empty(n, dtype=int)
    order[rows] = cols  # bare node i -> eigenvector order[i]
    w2 = w2[order]
    z = z[:, order]
    for i in range(n):
        if z[i, i] < 0:
            z[:, i] = -z[:, i]
    omega = np.sqrt(w2)
    e_c = np.zeros(n)
    e_c[coupler_index] = 1.0
    lam = np.sqrt(units.HBAR / omega) * (e_c @ sc @ z)
    return omega, lam, z


def dressed_modes(net: CircuitNetlist) -> DressedModes:
    omega, lam, z = _modes_from_matrices(kinetic_matrix(net), potential_matrix(net))
    w = units.rad_per_s_to_rad_per_us(omega)
    zeta = z.copy()
    zeta.setflags(write=False)
    return DressedModes(
        omega_a=float(w[0]),
        omega_c=float(w[1]),
        omega_b=float(w[2]),
        lambda_a=float(lam[0]),
        lambda_c=float(lam[1]),
        lambda_b=float(lam[2]),
        zeta=zeta,
    )


def effective_params(modes: DressedModes, net: CircuitNetlist) -> EffectiveParams:
    """Kerr, cross-Kerr, swap and Stark prefactors from the dressed modes.

    swap_scale multiplies F(t) and the Stark scales multiply F(t)^2; the Stark
    scales already include lambda_a^2 and lambda_b^2.
    """
    ej = units.energy_to_rad_per_us(units.josephson_energy_joule(net.E_J))
    c = math.cos(net.phi_dc / 2)
    s = math.sin(net.phi_dc / 2)
    la, lb = modes.lambda_a, modes.lambda_b
    lbar = modes.lambda_bar
    quartic = math.pi ** 4 / PHI0 ** 4
    quadratic = math.pi ** 2 / PHI0 ** 2
    return EffectiveParams(
        chi_a=-2 * quartic * ej * c * la ** 4,
        chi_b=-2 * quartic * ej * c * lb ** 4,
        chi_ab=-8 * quartic * ej * c * la ** 2 * lb ** 2,
        swap_scale=(quadratic - lbar * quartic) * ej * s * la * lb,
        stark_scale_a=(lbar * quartic - quadratic) * ej * c * la ** 2 / 4,
        stark_scale_b=(lbar * quartic - quadratic) * ej * c * lb ** 2 / 4,
        omega_d=modes.omega_b - modes.omega_a,
    )


def derive(net: CircuitNetlist):
    modes = dressed_modes(net)
    return modes, effective_params(modes, net)


def purcell_rate(g_swap_peak: float, kappa: float) -> float:
    """Adiabatic-elimination storage decay rate 4 g^2 / kappa."""
    if not kappa > 0:
        raise InvalidArgumentError("kappa must be positive for a Purcell rate")
    return 4.0 * g_swap_peak ** 2 / kappa


def resonance_detuning(n: int, chi_a: float, chi_ab: float) -> float:
    """Energy mismatch (n-1)(2 chi_a - chi_ab) between |n,0> and |n-1,1>."""
    if n < 1:
        raise InvalidArgumentError("resonance_detuning needs n >= 1")
    return (n - 1) * (2 * chi_a - chi_ab)
