"""Time-dependent Lindblad models and their adaptive integration.

Models hold constant operators multiplied by scalar control functions.  The
integrator works directly on (batches of) matrices and applies the generator

    L[X] = K X + X K^dagger + sum_j L_j X L_j^dagger,
    K    = -i H - 1/2 sum_j L_j^dagger L_j,

which is valid for arbitrary, non-Hermitian X as needed by the regression
theorem.  Operators are converted once to sparse matrices with a fixed
pattern; only the coefficient vectors change with time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.integrate import DOP853

from .errors import (
    DataIntegrityError,
    DiagnosticsWarning,
    IntegrationError,
    InvalidArgumentError,
    SpaceMismatchError,
)
from .quantum import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    annihilation,
    as_density,
    embed,
    number,
)

RTOL = 1e-9
ATOL = 1e-11
POSITIVITY_WARN = -1e-7


@dataclass(frozen=True)
class ControlFunction:
    """Scalar control t (us) -> value.

    ``smooth`` is a hint only; the integrator always uses adaptive steps.
    """

    func: Callable[[float], complex]
    smooth: bool = True
    label: str = ""

    def __call__(self, t: float):
        return self.func(t)


def constant(value, label="") -> ControlFunction:
    v = value
    return ControlFunction(lambda t: v, True, label or f"const({value})")


def as_control(f) -> ControlFunction:
    if isinstance(f, ControlFunction):
        return f
    if callable(f):
        return ControlFunction(f)
    return constant(f)


ONE = constant(1.0, "1")


def drive_envelope(delta: float, t0: float) -> ControlFunction:
    """F(t) = delta * tanh(t / t0) for t >= 0, zero before."""
    if not t0 > 0:
        raise InvalidArgumentError(f"drive rise time t0 must be positive, got {t0}")

    def f(t):
        return delta * math.tanh(t / t0) if t >= 0 else 0.0

    return ControlFunction(f, True, f"{delta}*tanh(t/{t0})")


def chirped_frequency(omega0: float, chi: float, n: int, kappa: float) -> ControlFunction:
    """omega0 + max(0, 2 chi (n exp(-kappa t) - 1)); the linear chirp that mimics Kerr lines."""

    def f(t):
        return omega0 + max(0.0, 2.0 * chi * (n * math.exp(-kappa * t) - 1.0))

    return ControlFunction(f, False, f"chirp(n={n})")


@dataclass(frozen=True)
class CollapseOperator:
    """Jump operator L(t) = sum_k c_k(t) O_k.

    A plain constant operator is a single term with coefficient one.
    """

    terms: tuple

    @classmethod
    def constant(cls, op: Operator) -> "CollapseOperator":
        return cls(((op, ONE),))

    @property
    def space(self):
        return self.terms[0][0].space

    def at(self, t: float) -> np.ndarray:
        return sum(complex(c(t)) * np.asarray(o.matrix) for o, c in self.terms)

    @property
    def is_constant(self):
        return len(self.terms) == 1 and self.terms[0][1] is ONE


@dataclass(frozen=True)
class LindbladModel:
    space: HilbertSpace
    hamiltonian_terms: tuple
    collapse_ops: tuple
    labels: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        hterms = tuple((op, as_control(f)) for op, f in self.hamiltonian_terms)
        cops = tuple(
            c if isinstance(c, CollapseOperator) else CollapseOperator.constant(c)
            for c in self.collapse_ops
        )
        for op, _ in hterms:
            if op.space != self.space:
                raise SpaceMismatchError(f"Hamiltonian term on {op.space!r}, model on {self.space!r}")
            if not op.is_hermitian(1e-10):
                raise DataIntegrityError("Hamiltonian term operators must be Hermitian")
        for c in cops:
            for op, _ in c.terms:
                if op.space != self.space:
                    raise SpaceMismatchError(f"collapse term on {op.space!r}, model on {self.space!r}")
        object.__setattr__(self, "hamiltonian_terms", hterms)
        object.__setattr__(self, "collapse_ops", cops)

    def hamiltonian(self, t: float) -> np.ndarray:
        h = np.zeros((self.space.dim, self.space.dim), dtype=complex)
        for op, f in self.hamiltonian_terms:
            h += float(np.real(f(t))) * op.matrix
        return h


# -- model builders ---------------------------------------------------------------


def build_toy_model(dim: int, omega, chi, kappa: float) -> LindbladModel:
    """H = omega(t) a^dag a + chi(t) a^dag^2 a^2 with collapse sqrt(kappa) a."""
    if kappa < 0:
        raise InvalidArgumentError(f"kappa must be non-negative, got {kappa}")
    a = annihilation(dim)
    ad = a.dag()
    n = number(dim)
    kerr = ad @ ad @ a @ a
    cops = (math.sqrt(kappa) * a,) if kappa > 0 else ()
    return LindbladModel(
        HilbertSpace((dim,)),
        ((n, as_control(omega)), (kerr, as_control(chi))),
        cops,
        labels={"kind": "toy", "source_slots": (0,), "output_slot": 0, "kappa": kappa},
    )


def effective_operators(dims=(6, 4)):
    space = HilbertSpace(tuple(dims))
    a = embed(annihilation(dims[0]), space, 0)
    b = embed(annihilation(dims[1]), space, 1)
    return space, a, b


def build_effective_model(params, drive, kappa: float, dims=(6, 4)) -> LindbladModel:
    """Two-oscillator (storage a, leakage b) rotating-frame model.

    H = S_a a^dag a + S_b b^dag b + chi_a a^dag^2 a^2 + chi_b b^dag^2 b^2
        + chi_ab a^dag a b^dag b - i g(t) (b^dag a - a^dag b)

    with g = swap_scale * F and S = stark_scale * F^2.  The coupler stays in
    its ground state and never enters the simulation space.
    """
    if not kappa > 0:
        raise InvalidArgumentError(f"kappa must be positive, got {kappa}")
    drive = as_control(drive)
    space, a, b = effective_operators(dims)
    ad, bd = a.dag(), b.dag()
    na, nb = ad @ a, bd @ b

    swap = params.swap_scale
    sa, sb = params.stark_scale_a, params.stark_scale_b

    terms = [
        (na, ControlFunction(lambda t: sa * drive(t) ** 2, drive.smooth, "S_a")),
        (nb, ControlFunction(lambda t: sb * drive(t) ** 2, drive.smooth, "S_b")),
        (ad @ ad @ a @ a, constant(params.chi_a)),
        (bd @ bd @ b @ b, constant(params.chi_b)),
        (na @ nb, constant(params.chi_ab)),
        (-1j * (bd @ a - ad @ b), ControlFunction(lambda t: swap * drive(t), drive.smooth, "g_swap")),
    ]
    return LindbladModel(
        space,
        tuple(terms),
        (math.sqrt(kappa) * b,),
        labels={"kind": "effective", "source_slots": (0, 1), "output_slot": 1, "kappa": kappa},
    )


# -- generator ------------------------------------------------------------------------


class _PatternSum:
    """sum_k c_k(t) M_k as a CSR matrix with a fixed sparsity pattern."""

    def __init__(self, mats: Sequence[np.ndarray], coeffs: Sequence[Callable], dim: int):
        self.coeffs = list(coeffs)
        if mats:
            mask = np.zeros((dim, dim), dtype=bool)
            for m in mats:
                mask |= m != 0
        else:
            mask = np.zeros((dim, dim), dtype=bool)
        pattern = sparse.csr_matrix(mask.astype(float))
        pattern.sort_indices()
        self.indices = pattern.indices
        self.indptr = pattern.indptr
        rows = np.repeat(np.arange(dim), np.diff(self.indptr))
        self.data = np.array([m[rows, self.indices] for m in mats], dtype=complex).reshape(
            len(mats), -1
        )
        self.dim = dim

    def at(self, t):
        if len(self.coeffs):
            c = np.array([complex(f(t)) for f in self.coeffs])
            data = c @ self.data
        else:
            data = np.zeros(len(self.indices), dtype=complex)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.dim, self.dim))


class Generator:
    """Vectorized Lindblad generator acting on stacks of d x d matrices."""

    def __init__(self, model: LindbladModel):
        d = model.space.dim
        self.dim = d
        mats, coeffs = [], []
        for op, f in model.hamiltonian_terms:
            mats.append(-1j * np.asarray(op.matrix))
            coeffs.append(lambda t, f=f: float(np.real(f(t))))
        self.jumps = []
        for c in model.collapse_ops:
            for om, cm in c.terms:
                for on, cn in c.terms:
                    mats.append(-0.5 * np.asarray(om.matrix).conj().T @ np.asarray(on.matrix))
                    coeffs.append(lambda t, cm=cm, cn=cn: np.conj(complex(cm(t))) * complex(cn(t)))
            jm = [np.asarray(o.matrix) for o, _ in c.terms]
            jc = [cf for _, cf in c.terms]
            self.jumps.append(
                (
                    _PatternSum(jm, jc, d),
                    _PatternSum([m.conj().T for m in jm], [lambda t, cf=cf: np.conj(complex(cf(t))) for cf in jc], d),
                )
            )
        self.k = _PatternSum(mats, coeffs, d)
        self.kh = _PatternSum(
            [m.conj().T for m in mats], [lambda t, f=f: np.conj(f(t)) for f in coeffs], d
        )

    @staticmethod
    def _left(s, y):
        """s @ y[i] for every matrix in the stack y (B, d, d)."""
        b, d, _ = y.shape
        cols = y.transpose(1, 0, 2).reshape(d, b * d)
        return np.asarray(s @ cols).reshape(d, b, d).transpose(1, 0, 2)

    @staticmethod
    def _right(y, s):
        """y[i] @ s for every matrix in the stack, with s sparse."""
        b, d, _ = y.shape
        rows = y.reshape(b * d, d)
        return np.asarray((s.T @ rows.T).T).reshape(b, d, d)

    def apply(self, t: float, y: np.ndarray) -> np.ndarray:
        k = self.k.at(t)
        kh = self.kh.at(t)
        out = self._left(k, y) + self._right(y, kh)
        for lsum, lhsum in self.jumps:
            l = lsum.at(t)
            lh = lhsum.at(t)
            out += self._left(l, self._right(y, lh))
        return out


# -- integration ----------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise InvalidArgumentError("a time grid needs at least two samples")
        if np.any(np.diff(s) <= 0):
            raise InvalidArgumentError("time grid samples must be strictly increasing")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def uniform(cls, t0: float, t1: float, n: int) -> "TimeGrid":
        return cls(np.linspace(t0, t1, n))

    @property
    def t0(self):
        return float(self.samples[0])

    @property
    def t1(self):
        return float(self.samples[-1])

    def __len__(self):
        return self.samples.size


@dataclass
class Trajectory:
    grid: TimeGrid
    states: list
    diagnostics: dict

    def expect(self, op: Operator) -> np.ndarray:
        m = np.asarray(op.matrix)
        return np.array([np.trace(m @ s.matrix) for s in self.states])


class _Stepper:
    """Carries the adaptive step size across consecutive segments."""

    def __init__(self, fun, rtol=RTOL, atol=ATOL):
        self.fun = fun
        self.rtol = rtol
        self.atol = atol
        self.h = None
        self.n_steps = 0

    def advance(self, t_from, t_to, y):
        if t_to == t_from:
            return y
        first = None if self.h is None else min(self.h, t_to - t_from)
        solver = DOP853(
            self.fun, t_from, y, t_to, rtol=self.rtol, atol=self.atol, first_step=first
        )
        h_last = None
        while solver.status == "running":
            msg = solver.step()
            if solver.status == "failed":
                raise IntegrationError(f"integration failed near t={solver.t:.6g} us: {msg}", solver.t)
            self.n_steps += 1
            if solver.t < t_to:
                h_last = solver.h_abs
        if h_last is not None:
            self.h = h_last
        elif self.h is None:
            self.h = solver.h_abs
        y = solver.y
        # the solver holds a reference cycle; drop its stage buffers now
        solver.K_extended = solver.K = solver.f = solver.y_old = None
        return y


def co_propagate(model: LindbladModel, rho0, grid: TimeGrid, spawn=None, observe=None, rtol=RTOL, atol=ATOL):
    """Propagate rho together with matrices spawned along the way.

    Slot 0 of the stack is the state.  At every sample ``i`` (after the state
    has reached it) ``spawn(i, rho_i)`` may return a matrix that joins the
    stack from that time on, and ``observe(i, stack)`` sees the full stack.
    Returns the list of states at the samples and the stepper statistics.
    """
    gen = Generator(model)
    d = model.space.dim
    rho0 = as_density(rho0)
    if rho0.space != model.space:
        raise SpaceMismatchError(f"initial state on {rho0.space!r}, model on {model.space!r}")
    stack = np.asarray(rho0.matrix, dtype=complex).reshape(1, d, d).copy()

    def fun(t, y):
        return gen.apply(t, y.reshape(-1, d, d)).reshape(-1)

    stepper = _Stepper(fun, rtol, atol)
    times = grid.samples
    states = []
    for i, t in enumerate(times):
        if i > 0:
            try:
                y = stepper.advance(times[i - 1], t, stack.reshape(-1))
            except IntegrationError:
                raise
            stack = y.reshape(-1, d, d)
        states.append(stack[0].copy())
        if spawn is not None:
            new = spawn(i, stack[0])
            if new is not None:
                stack = np.concatenate([stack, np.asarray(new, dtype=complex).reshape(1, d, d)])
        if observe is not None:
            observe(i, stack)
    return states, {"steps": stepper.n_steps}


def _diagnose(states, check_positivity=True):
    traces = np.array([np.trace(s).real for s in states])
    diag = {"max_trace_drift": float(np.max(np.abs(traces - 1.0)))}
    if check_positivity:
        mins = [np.linalg.eigvalsh(0.5 * (s + s.conj().T))[0] for s in states]
        diag["min_eigenvalue"] = float(np.min(mins))
        if diag["min_eigenvalue"] < POSITIVITY_WARN:
            diag["positivity_warning"] = True
            warnings.warn(
                f"trajectory eigenvalue {diag['min_eigenvalue']:.3g} below {POSITIVITY_WARN}",
                DiagnosticsWarning,
                stacklevel=3,
            )
    return diag


def evolve(model: LindbladModel, rho0, grid: TimeGrid, check_positivity=True) -> Trajectory:
    states, stats = co_propagate(model, rho0, grid)
    diag = _diagnose(states, check_positivity)
    diag.update(stats)
    dms = [DensityMatrix(model.space, s, validate=False) for s in states]
    return Trajectory(grid, dms, diag)


MAP_RTOL = 1e-12
MAP_ATOL = 1e-14


def transfer_map(model: LindbladModel, t_from: float, t_to: float, rtol=MAP_RTOL, atol=MAP_ATOL) -> np.ndarray:
    """Matrix of the evolution map on row-major vectorized d x d matrices.

    All d^2 basis matrices advance in one integration so the step sequence
    does not depend on any particular input.  The error norm averages over
    d^4 mostly tiny components, hence the tighter default tolerances.
    """
    if t_to < t_from:
        raise InvalidArgumentError("transfer_map needs t_to >= t_from")
    gen = Generator(model)
    d = model.space.dim
    basis = np.eye(d * d, dtype=complex).reshape(d * d, d, d)
    if t_to == t_from:
        return np.eye(d * d, dtype=complex)

    def fun(t, y):
        return gen.apply(t, y.reshape(-1, d, d)).reshape(-1)

    y = _Stepper(fun, rtol, atol).advance(t_from, t_to, basis.reshape(-1))
    return y.reshape(d * d, d * d).T


def propagate_matrix(model: LindbladModel, x, t_from: float, t_to: float) -> np.ndarray:
    """Apply the generator's evolution map from t_from to t_to to any matrix.

    Goes through :func:`transfer_map`, so the result is linear in ``x`` to
    rounding error.  Cost grows as d^4; meant for small spaces and checks.
    """
    if t_to < t_from:
        raise InvalidArgumentError("propagate_matrix needs t_to >= t_from")
    d = model.space.dim
    x = np.asarray(x, dtype=complex)
    if x.shape != (d, d):
        raise SpaceMismatchError(f"matrix shape {x.shape} does not match {model.space!r}")
    if t_to == t_from:
        return x.copy()
    return (transfer_map(model, t_from, t_to) @ x.reshape(-1)).reshape(d, d)
