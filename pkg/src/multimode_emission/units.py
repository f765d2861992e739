"""Unit conventions and conversions.

Everything inside the simulator runs in angular frequency units of rad/us
(hbar = 1) with times in microseconds.  User-facing frequencies are ordinary
frequencies in MHz.  Circuit elements are given in fF, nH and GHz (E_J / h)
and are converted to SI before any circuit algebra.
"""

import math

from scipy import constants

TWO_PI = 2.0 * math.pi

HBAR = constants.hbar
PLANCK = constants.h
E_CHARGE = constants.e
#: Superconducting flux quantum h / 2e in Wb.
FLUX_QUANTUM = constants.h / (2.0 * constants.e)

FEMTO = 1e-15
NANO = 1e-9
GIGA = 1e9
PER_SECOND_TO_PER_US = 1e-6


def mhz_to_rad_per_us(f_mhz):
    """Ordinary frequency in MHz -> angular frequency in rad/us."""
    return TWO_PI * f_mhz


def rad_per_us_to_mhz(w):
    return w / TWO_PI


def rad_per_s_to_rad_per_us(w):
    return w * PER_SECOND_TO_PER_US


def rad_per_us_to_rad_per_s(w):
    return w / PER_SECOND_TO_PER_US


def femtofarad(c_ff):
    return c_ff * FEMTO


def nanohenry(l_nh):
    return l_nh * NANO


def josephson_energy_joule(ej_ghz):
    """E_J given as E_J / h in GHz -> energy in J."""
    return PLANCK * ej_ghz * GIGA


def energy_to_rad_per_us(energy_joule):
    """Energy in J -> angular frequency in rad/us."""
    return rad_per_s_to_rad_per_us(energy_joule / HBAR)


def inverse_square_seconds_to_rad_per_us_squared(x):
    """Eigenvalues of the dynamical matrix (1/s^2) -> (rad/us)^2."""
    return x * PER_SECOND_TO_PER_US ** 2
