"""Truncated Fock-space operator algebra.

Dense complex matrices over products of truncated oscillators.  All objects
are immutable after construction: their arrays are flagged read-only so they
can be shared between workers without copies.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
from scipy import special

from .errors import (
    DataIntegrityError,
    InvalidArgumentError,
    InvalidDimensionError,
    OutOfRangeError,
    SpaceMismatchError,
    TruncationWarning,
)

TAIL_WARNING_THRESHOLD = 1e-8


def _frozen(a, dtype=complex):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HilbertSpace:
    subsystem_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.subsystem_dims)
        if not dims:
            raise InvalidDimensionError("a Hilbert space needs at least one subsystem")
        if any(d < 1 for d in dims):
            raise InvalidDimensionError(f"subsystem dimensions must be positive, got {dims}")
        object.__setattr__(self, "subsystem_dims", dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.subsystem_dims))

    @property
    def n_subsystems(self) -> int:
        return len(self.subsystem_dims)

    def __repr__(self):
        return "HilbertSpace(" + "x".join(map(str, self.subsystem_dims)) + ")"


def _as_space(space) -> HilbertSpace:
    if isinstance(space, HilbertSpace):
        return space
    if isinstance(space, int):
        return HilbertSpace((space,))
    return HilbertSpace(tuple(space))


class Operator:
    """Dense operator on a :class:`HilbertSpace`.

    Hamiltonian matrices are in rad/us; everything else is dimensionless
    unless a caller scales it (e.g. ``sqrt(kappa) * b``).
    """

    __slots__ = ("space", "matrix")

    def __init__(self, space, matrix):
        space = _as_space(space)
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (space.dim, space.dim):
            raise SpaceMismatchError(
                f"matrix shape {matrix.shape} does not match {space!r} (dim {space.dim})"
            )
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", _frozen(matrix))

    def __setattr__(self, name, value):
        raise AttributeError("Operator is immutable")

    def _check(self, other):
        if self.space != other.space:
            raise SpaceMismatchError(f"{self.space!r} vs {other.space!r}")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix @ other.matrix)
        if isinstance(other, Ket):
            if other.space != self.space:
                raise SpaceMismatchError(f"{self.space!r} vs {other.space!r}")
            return self.matrix @ other.amplitudes
        return NotImplemented

    def __add__(self, other):
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __neg__(self):
        return Operator(self.space, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, (Operator, Ket, DensityMatrix)):
            return NotImplemented
        return Operator(self.space, complex(scalar) * self.matrix)

    __rmul__ = __mul__

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def is_hermitian(self, tol=1e-10) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= tol)

    def __repr__(self):
        return f"Operator({self.space!r})"


class Ket:
    __slots__ = ("space", "amplitudes")

    def __init__(self, space, amplitudes, normalize=False):
        space = _as_space(space)
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (space.dim,):
            raise SpaceMismatchError(f"{amps.size} amplitudes for {space!r}")
        norm = np.linalg.norm(amps)
        if normalize:
            if norm == 0:
                raise InvalidArgumentError("cannot normalize the zero vector")
            amps = amps / norm
        elif abs(norm - 1.0) > 1e-12:
            raise DataIntegrityError(f"ket norm {norm!r} differs from 1 by more than 1e-12")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "amplitudes", _frozen(amps))

    def __setattr__(self, name, value):
        raise AttributeError("Ket is immutable")

    def overlap(self, other: "Ket") -> complex:
        """<self|other>."""
        if self.space != other.space:
            raise SpaceMismatchError(f"{self.space!r} vs {other.space!r}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> "DensityMatrix":
        return DensityMatrix(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))

    def __repr__(self):
        return f"Ket({self.space!r})"


class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix.

    ``validate=False`` skips the checks; used for integrator output where
    violations are reported as diagnostics rather than raised.
    """

    __slots__ = ("space", "matrix")

    HERMITIAN_TOL = 1e-10
    TRACE_TOL = 1e-8
    POSITIVITY_TOL = 1e-8

    def __init__(self, space, matrix, validate=True):
        space = _as_space(space)
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (space.dim, space.dim):
            raise SpaceMismatchError(f"matrix shape {matrix.shape} does not match {space!r}")
        if validate:
            herm = np.max(np.abs(matrix - matrix.conj().T), initial=0.0)
            if herm > self.HERMITIAN_TOL:
                raise DataIntegrityError(f"density matrix not Hermitian (deviation {herm:.3g})")
            tr = np.trace(matrix).real
            if abs(tr - 1.0) > self.TRACE_TOL:
                raise DataIntegrityError(f"density matrix trace {tr!r} != 1")
            lo = np.linalg.eigvalsh(0.5 * (matrix + matrix.conj().T))[0]
            if lo < -self.POSITIVITY_TOL:
                raise DataIntegrityError(f"density matrix has eigenvalue {lo:.3g}")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", _frozen(matrix))

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def __repr__(self):
        return f"DensityMatrix({self.space!r})"


def as_density(state) -> DensityMatrix:
    if isinstance(state, DensityMatrix):
        return state
    if isinstance(state, Ket):
        return state.projector()
    raise TypeError(f"expected Ket or DensityMatrix, got {type(state).__name__}")


# -- constructors -----------------------------------------------------------


def annihilation(dim: int) -> Operator:
    if dim < 2:
        raise InvalidDimensionError(f"ladder operators need dim >= 2, got {dim}")
    return Operator(dim, np.diag(np.sqrt(np.arange(1, dim)), k=1))


def creation(dim: int) -> Operator:
    return annihilation(dim).dag()


def number(dim: int) -> Operator:
    return Operator(dim, np.diag(np.arange(dim, dtype=float)))


def identity(space) -> Operator:
    space = _as_space(space)
    return Operator(space, np.eye(space.dim))


def commutator(x: Operator, y: Operator) -> Operator:
    return x @ y - y @ x


def fock_state(dim: int, n: int) -> Ket:
    if not 0 <= n < dim:
        raise OutOfRangeError(f"Fock index {n} outside [0, {dim})")
    amps = np.zeros(dim, dtype=complex)
    amps[n] = 1.0
    return Ket(dim, amps)


def _coherent_series(dim: int, alpha: complex) -> np.ndarray:
    """Unnormalized alpha**n / sqrt(n!) by recursion (no factorial overflow)."""
    c = np.empty(dim, dtype=complex)
    c[0] = 1.0
    for n in range(1, dim):
        c[n] = c[n - 1] * alpha / math.sqrt(n)
    return c


def _warn_tail(tail: float, what: str):
    if tail > TAIL_WARNING_THRESHOLD:
        warnings.warn(
            f"{what}: truncation discards {tail:.3g} of the probability (renormalized)",
            TruncationWarning,
            stacklevel=3,
        )


def coherent_state(dim: int, alpha: complex) -> Ket:
    """Truncated coherent state, renormalized after truncation."""
    c = _coherent_series(dim, complex(alpha))
    x = abs(alpha) ** 2
    # Poisson mass at n >= dim is the regularized lower incomplete gamma P(dim, x).
    tail = float(special.gammainc(dim, x)) if x > 0 else 0.0
    _warn_tail(tail, f"coherent state |{alpha}> in dim {dim}")
    return Ket(dim, c, normalize=True)


def cat_state(dim: int, alpha: complex, components: int = 2) -> Ket:
    """Two- or four-component cat state, renormalized after truncation.

    ``components=2`` is |a> + |-a> (even Fock support), ``components=4`` is
    |a> + |-a> + |ia> + |-ia> (support on multiples of four).  Forbidden
    amplitudes are exactly zero.
    """
    if components not in (2, 4):
        raise InvalidArgumentError(f"components must be 2 or 4, got {components}")
    alpha = complex(alpha)
    c = _coherent_series(dim, alpha)
    c[np.arange(dim) % components != 0] = 0.0
    x = abs(alpha) ** 2
    if x > 0:
        exact = math.cosh(x) if components == 2 else 0.5 * (math.cosh(x) + math.cos(x))
        kept = float(np.sum(np.abs(c) ** 2))
        _warn_tail(max(0.0, 1.0 - kept / exact), f"{components}-component cat in dim {dim}")
    return Ket(dim, c, normalize=True)


def rotate(state, theta: float):
    """Apply exp(-i theta n) to a single-oscillator Ket or DensityMatrix."""
    dim = state.space.dim
    phase = np.exp(-1j * theta * np.arange(dim))
    if isinstance(state, Ket):
        return Ket(state.space, phase * state.amplitudes, normalize=True)
    m = phase[:, None] * state.matrix * phase.conj()[None, :]
    return DensityMatrix(state.space, m, validate=False)


# -- tensor structure ----------------------------------------------------------


def tensor(*ops):
    """Kronecker product of Operators or Kets, in slot order."""
    if all(isinstance(o, Ket) for o in ops):
        space = HilbertSpace(tuple(d for o in ops for d in o.space.subsystem_dims))
        amps = reduce(np.kron, [o.amplitudes for o in ops])
        return Ket(space, amps, normalize=True)
    if all(isinstance(o, Operator) for o in ops):
        space = HilbertSpace(tuple(d for o in ops for d in o.space.subsystem_dims))
        return Operator(space, reduce(np.kron, [o.matrix for o in ops]))
    if all(isinstance(o, (DensityMatrix, Ket)) for o in ops):
        rhos = [as_density(o) for o in ops]
        space = HilbertSpace(tuple(d for o in rhos for d in o.space.subsystem_dims))
        return DensityMatrix(space, reduce(np.kron, [o.matrix for o in rhos]), validate=False)
    raise TypeError("tensor() needs all Operators, all Kets, or states")


def embed(op: Operator, space, slot: int) -> Operator:
    space = _as_space(space)
    if not 0 <= slot < space.n_subsystems:
        raise OutOfRangeError(f"slot {slot} outside {space!r}")
    if op.space.dim != space.subsystem_dims[slot]:
        raise SpaceMismatchError(
            f"operator dim {op.space.dim} != subsystem dim {space.subsystem_dims[slot]} at slot {slot}"
        )
    before = int(np.prod(space.subsystem_dims[:slot]))
    after = int(np.prod(space.subsystem_dims[slot + 1:]))
    m = np.kron(np.kron(np.eye(before), op.matrix), np.eye(after))
    return Operator(space, m)


def partial_trace(rho: DensityMatrix, keep: int) -> DensityMatrix:
    dims = rho.space.subsystem_dims
    if not 0 <= keep < len(dims):
        raise OutOfRangeError(f"slot {keep} outside {rho.space!r}")
    n = len(dims)
    t = np.asarray(rho.matrix).reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for k in range(n):
        if k != keep:
            col[k] = row[k]
    spec = "".join(row) + "".join(col) + "->" + row[keep] + col[keep]
    reduced = np.einsum(spec, t)
    return DensityMatrix(HilbertSpace((dims[keep],)), reduced, validate=False)


# -- measurements ---------------------------------------------------------------


def expect(op: Operator, state) -> complex:
    if op.space != state.space:
        raise SpaceMismatchError(f"{op.space!r} vs {state.space!r}")
    if isinstance(state, Ket):
        return complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes))
    return complex(np.trace(op.matrix @ state.matrix))


def fidelity_pure(rho, psi: Ket) -> float:
    """<psi|rho|psi>, clamped to [0, 1] when within 1e-10 of the boundary."""
    rho = as_density(rho)
    if rho.space != psi.space:
        raise SpaceMismatchError(f"{rho.space!r} vs {psi.space!r}")
    f = float(np.real(np.vdot(psi.amplitudes, rho.matrix @ psi.amplitudes)))
    if -1e-10 <= f < 0.0:
        f = 0.0
    elif 1.0 < f <= 1.0 + 1e-10:
        f = 1.0
    return f


def wigner(rho, x_grid: Sequence[float], p_grid: Sequence[float]) -> np.ndarray:
    """Wigner function W(x, p) of a single oscillator.

    Convention alpha = (x + i p) / sqrt(2), so the vacuum is
    exp(-x^2 - p^2) / pi and the function integrates to one over dx dp.
    The result has shape ``(len(p_grid), len(x_grid))``.

    Evaluated from the displaced-parity definition through the Laguerre
    recursion for the Fock-basis kernels W_mn, which is exact for the
    truncated state.
    """
    rho = as_density(rho)
    if rho.space.n_subsystems != 1:
        raise SpaceMismatchError(
            f"wigner needs a single oscillator, got {rho.space!r}; take partial_trace first"
        )
    m = np.asarray(rho.matrix)
    dim = m.shape[0]
    x, p = np.meshgrid(np.asarray(x_grid, float), np.asarray(p_grid, float))
    a = (x + 1j * p) / math.sqrt(2.0)
    two_a = 2.0 * a
    two_ac = 2.0 * np.conj(a)

    # kern[n] holds W_{m n} for the current row m (kernel of |m><n|).
    kern = [None] * dim
    kern[0] = np.exp(-2.0 * np.abs(a) ** 2) / math.pi
    w = m[0, 0].real * kern[0].real
    for n in range(1, dim):
        kern[n] = two_a * kern[n - 1] / math.sqrt(n)
        w = w + 2.0 * np.real(m[0, n] * kern[n])
    for row in range(1, dim):
        prev = kern[row]
        kern[row] = (two_ac * prev - math.sqrt(row) * kern[row - 1]) / math.sqrt(row)
        w = w + np.real(m[row, row] * kern[row])
        for n in range(row + 1, dim):
            nxt = (two_a * kern[n - 1] - math.sqrt(row) * prev) / math.sqrt(n)
            prev = kern[n]
            kern[n] = nxt
            w = w + 2.0 * np.real(m[row, n] * kern[n])
    return np.real(w)
