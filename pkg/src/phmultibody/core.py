"""Redundant-coordinate port-Hamiltonian multibody model.

A :class:`PhSystem` bundles the data of the constrained equations of motion

    zeta'  = Z(zeta) omega
    M omega' = -Z^T grad V - Z^T c'^T lam - tau_d - G(M omega) omega
               - A^T mu - B tau_ext
    0 = c(zeta),   0 = A(zeta) omega,   omega_ext = B(zeta)^T omega

with ``zeta`` the redundant positions and ``omega`` the velocity coordinates.
Point masses in Cartesian coordinates are the special case ``Z = I``,
``G = 0`` (see :func:`from_cartesian`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, NoConvergence, RankError, ShapeError
from .linalg import numerical_rank

Array = np.ndarray


def _zero_matrix(rows: int, cols: int) -> Callable[[Array], Array]:
    def f(_x: Array) -> Array:
        return np.zeros((rows, cols))

    return f


def _zero_vector(n: int) -> Callable[[Array], Array]:
    def f(_x: Array) -> Array:
        return np.zeros(n)

    return f


def _always(_zeta: Array) -> bool:
    return True


@dataclass(frozen=True)
class PhSystem:
    """Immutable description of one multibody system.

    Only ``n_pot``, ``n_kin`` and ``M`` are mandatory. Missing maps default to
    their trivial values (no constraints, no ports, no potential, no damping,
    no gyroscopic forces, ``Z = I`` when ``n_pot == n_kin``).

    ``zeta_box`` and ``omega_box`` are the sampling boxes used by structural
    verification; ``coupling`` carries bookkeeping for systems built by
    :func:`phmultibody.interconnect.couple`.
    """

    n_pot: int
    n_kin: int
    M: Array
    m_ports: int = 0
    k_pos: int = 0
    l_vel: int = 0
    Z: Optional[Callable[[Array], Array]] = None
    G: Optional[Callable[[Array], Array]] = None
    A: Optional[Callable[[Array], Array]] = None
    B: Optional[Callable[[Array], Array]] = None
    c: Optional[Callable[[Array], Array]] = None
    c_jac: Optional[Callable[[Array], Array]] = None
    V_pot: Optional[Callable[[Array], float]] = None
    grad_V: Optional[Callable[[Array], Array]] = None
    tau_d: Optional[Callable[[Array, Array], Array]] = None
    domain_guard: Callable[[Array], bool] = _always
    domain_reason: Optional[Callable[[Array], str]] = None
    port_labels: tuple[str, ...] = ()
    name: str = "system"
    zeta_box: Optional[tuple[tuple[float, float], ...]] = None
    omega_box: Optional[tuple[tuple[float, float], ...]] = None
    coupling: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        M = np.array(self.M, dtype=float, copy=True)
        if M.shape != (self.n_kin, self.n_kin):
            raise ShapeError(f"M has shape {M.shape}, expected {(self.n_kin, self.n_kin)}")
        M.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "M", M)
        if self.Z is None:
            if self.n_pot != self.n_kin:
                raise ShapeError("Z must be given when n_pot != n_kin")
            eye = np.eye(self.n_kin)
            set_(self, "Z", lambda _z: eye)
        if self.G is None:
            set_(self, "G", _zero_matrix(self.n_kin, self.n_kin))
        if self.A is None:
            set_(self, "A", _zero_matrix(self.l_vel, self.n_kin))
        if self.B is None:
            set_(self, "B", _zero_matrix(self.n_kin, self.m_ports))
        if self.c is None:
            set_(self, "c", _zero_vector(self.k_pos))
        if self.c_jac is None:
            set_(self, "c_jac", _zero_matrix(self.k_pos, self.n_pot))
        if self.V_pot is None:
            set_(self, "V_pot", lambda _z: 0.0)
        if self.grad_V is None:
            set_(self, "grad_V", _zero_vector(self.n_pot))
        if self.tau_d is None:
            zero = np.zeros(self.n_kin)
            set_(self, "tau_d", lambda _z, _w: zero)
        labels = tuple(self.port_labels) or tuple(f"port{i}" for i in range(self.m_ports))
        if len(labels) != self.m_ports:
            raise ShapeError(f"{len(labels)} port labels for {self.m_ports} ports")
        set_(self, "port_labels", labels)
        if self.zeta_box is None:
            set_(self, "zeta_box", ((-1.0, 1.0),) * self.n_pot)
        if self.omega_box is None:
            set_(self, "omega_box", ((-1.0, 1.0),) * self.n_kin)

    def check_domain(self, zeta: Array) -> None:
        if not self.domain_guard(zeta):
            why = self.domain_reason(zeta) if self.domain_reason else "outside the admissible set"
            raise DomainError(f"{self.name}: zeta={np.array2string(np.asarray(zeta), precision=17)} {why}")

    def gamma(self, omega: Array) -> Array:
        return self.M @ omega


@dataclass(frozen=True)
class State:
    """Positions ``zeta`` and velocities ``omega`` at time ``t``."""

    t: float
    zeta: Array
    omega: Array
    gamma: Optional[Array] = None

    @classmethod
    def of(cls, sys: PhSystem, t: float, zeta: Sequence[float], omega: Sequence[float]) -> "State":
        zeta = np.asarray(zeta, dtype=float)
        omega = np.asarray(omega, dtype=float)
        if zeta.shape != (sys.n_pot,) or omega.shape != (sys.n_kin,):
            raise ShapeError(f"state shapes {zeta.shape}, {omega.shape} do not match {sys.name}")
        return cls(float(t), zeta, omega, sys.M @ omega)


@dataclass(frozen=True)
class PortValues:
    tau_ext: Array
    omega_ext: Array


@dataclass(frozen=True)
class Multipliers:
    """Position-constraint reaction ``lam`` and velocity-constraint reaction ``mu``."""

    lam: Array
    mu: Array

    @classmethod
    def zeros(cls, sys: PhSystem) -> "Multipliers":
        return cls(np.zeros(sys.k_pos), np.zeros(sys.l_vel))


@dataclass(frozen=True)
class EvaluatedPoint:
    """Every model map evaluated once at ``(zeta, omega)``."""

    zeta: Array
    omega: Array
    gamma: Array
    Z: Array
    M: Array
    G: Array
    A: Array
    B: Array
    c: Array
    c_jac: Array
    V: float
    grad_V: Array
    tau_d: Array


def _shaped(value: Any, shape: tuple[int, ...], what: str, sys: PhSystem) -> Array:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        if arr.size == 0 and int(np.prod(shape)) == 0:
            return arr.reshape(shape)
        raise ShapeError(f"{sys.name}: {what} returned shape {arr.shape}, expected {shape}")
    return arr


def eval_point(sys: PhSystem, zeta: Array, omega: Array) -> EvaluatedPoint:
    """Evaluate all maps of ``sys`` at one point, checking their shapes."""
    zeta = np.asarray(zeta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if zeta.shape != (sys.n_pot,) or omega.shape != (sys.n_kin,):
        raise ShapeError(f"{sys.name}: point shapes {zeta.shape}, {omega.shape}")
    sys.check_domain(zeta)
    npot, nkin = sys.n_pot, sys.n_kin
    gamma = sys.M @ omega
    return EvaluatedPoint(
        zeta=zeta,
        omega=omega,
        gamma=gamma,
        Z=_shaped(sys.Z(zeta), (npot, nkin), "Z", sys),
        M=sys.M,
        G=_shaped(sys.G(gamma), (nkin, nkin), "G", sys),
        A=_shaped(sys.A(zeta), (sys.l_vel, nkin), "A", sys),
        B=_shaped(sys.B(zeta), (nkin, sys.m_ports), "B", sys),
        c=_shaped(sys.c(zeta), (sys.k_pos,), "c", sys),
        c_jac=_shaped(sys.c_jac(zeta), (sys.k_pos, npot), "c_jac", sys),
        V=float(sys.V_pot(zeta)),
        grad_V=_shaped(sys.grad_V(zeta), (npot,), "grad_V", sys),
        tau_d=_shaped(sys.tau_d(zeta, omega), (nkin,), "tau_d", sys),
    )


def _vec(x: Any, n: int, what: str) -> Array:
    arr = np.asarray(x, dtype=float).reshape(-1) if np.size(x) else np.zeros(0)
    if arr.shape != (n,):
        raise ShapeError(f"{what} has length {arr.size}, expected {n}")
    return arr


def kinetic_force(p: EvaluatedPoint, mult: Multipliers, tau_ext: Array) -> Array:
    """Everything on the right of ``M omega' = -(...)``, with the sign flipped."""
    return (
        p.Z.T @ (p.grad_V + p.c_jac.T @ mult.lam)
        + p.tau_d
        + p.G @ p.omega
        + p.A.T @ mult.mu
        + p.B @ tau_ext
    )


def residual_mks2(
    sys: PhSystem,
    state: State,
    mult: Multipliers,
    omega_dot: Array,
    zeta_dot: Array,
    tau_ext: Array,
) -> Array:
    """Stacked residual ``[kinematic; kinetic; c; A omega]`` of the DAE.

    The vector vanishes exactly when the given rates, multipliers and efforts
    satisfy the equations of motion at ``state``.
    """
    omega_dot = _vec(omega_dot, sys.n_kin, "omega_dot")
    zeta_dot = _vec(zeta_dot, sys.n_pot, "zeta_dot")
    tau_ext = _vec(tau_ext, sys.m_ports, "tau_ext")
    mult = Multipliers(_vec(mult.lam, sys.k_pos, "lam"), _vec(mult.mu, sys.l_vel, "mu"))
    p = eval_point(sys, state.zeta, state.omega)
    kin = zeta_dot - p.Z @ p.omega
    dyn = p.M @ omega_dot + kinetic_force(p, mult, tau_ext)
    return np.concatenate([kin, dyn, p.c, p.A @ p.omega])


def hamiltonian(sys: PhSystem, state: State) -> float:
    """Total energy ``omega^T M omega / 2 + V(zeta)``."""
    sys.check_domain(state.zeta)
    w = np.asarray(state.omega, dtype=float)
    return float(0.5 * w @ sys.M @ w + sys.V_pot(state.zeta))


def port_values(sys: PhSystem, state: State, tau_ext: Array) -> PortValues:
    tau_ext = _vec(tau_ext, sys.m_ports, "tau_ext")
    B = _shaped(sys.B(state.zeta), (sys.n_kin, sys.m_ports), "B", sys)
    return PortValues(tau_ext, B.T @ state.omega)


def power_balance_residual(
    sys: PhSystem,
    state: State,
    omega_dot: Array,
    zeta_dot: Array,
    tau_ext: Array,
) -> float:
    """``dH/dt + omega^T tau_d + omega_ext^T tau_ext`` at one point.

    Zero along exact solutions: what is stored plus what is dissipated plus
    what is extracted through the ports must balance.
    """
    omega_dot = _vec(omega_dot, sys.n_kin, "omega_dot")
    zeta_dot = _vec(zeta_dot, sys.n_pot, "zeta_dot")
    tau_ext = _vec(tau_ext, sys.m_ports, "tau_ext")
    p = eval_point(sys, state.zeta, state.omega)
    w = p.omega
    dH = w @ p.M @ omega_dot + zeta_dot @ p.grad_V
    return float(dH + w @ p.tau_d + (p.B.T @ w) @ tau_ext)


def constraint_violation(sys: PhSystem, zeta: Array, omega: Array) -> tuple[float, float, float]:
    """Norms of ``c(zeta)``, ``A(zeta) omega`` and ``c'(zeta) Z(zeta) omega``."""
    p = eval_point(sys, zeta, omega)
    return (
        float(np.linalg.norm(p.c)),
        float(np.linalg.norm(p.A @ p.omega)),
        float(np.linalg.norm(p.c_jac @ p.Z @ p.omega)),
    )


def is_consistent(sys: PhSystem, state: State, tol: float = 1e-10) -> bool:
    return max(constraint_violation(sys, state.zeta, state.omega)) <= tol


def from_cartesian(
    n: int,
    M: Array,
    V_pot: Optional[Callable[[Array], float]] = None,
    grad_V: Optional[Callable[[Array], Array]] = None,
    c: Optional[Callable[[Array], Array]] = None,
    c_jac: Optional[Callable[[Array], Array]] = None,
    A: Optional[Callable[[Array], Array]] = None,
    B: Optional[Callable[[Array], Array]] = None,
    tau_d: Optional[Callable[[Array, Array], Array]] = None,
    *,
    probe: Optional[Array] = None,
    **kwargs: Any,
) -> PhSystem:
    """Point masses in Cartesian coordinates as a :class:`PhSystem`.

    Positions and velocities share one coordinate count ``n``; the result has
    ``Z = I`` and ``G = 0``. Constraint and port counts are read off the
    supplied maps at ``probe`` (default: the origin).
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (n, n):
        raise ShapeError(f"M has shape {M.shape}, expected {(n, n)}")
    if (c is None) != (c_jac is None):
        raise ShapeError("c and c_jac must be given together")
    if (V_pot is None) != (grad_V is None):
        raise ShapeError("V_pot and grad_V must be given together")
    x0 = np.zeros(n) if probe is None else np.asarray(probe, dtype=float)
    k = np.atleast_1d(np.asarray(c(x0))).size if c is not None else 0
    l_rows = np.atleast_2d(np.asarray(A(x0))).shape[0] if A is not None else 0
    if A is not None and np.asarray(A(x0)).size == 0:
        l_rows = 0
    m = np.asarray(B(x0)).reshape(n, -1).shape[1] if B is not None else 0
    if c is not None:
        c_fn, cj_fn = c, c_jac
        c = lambda z: np.atleast_1d(np.asarray(c_fn(z), dtype=float))  # noqa: E731
        c_jac = lambda z: np.asarray(cj_fn(z), dtype=float).reshape(k, n)  # noqa: E731
    if A is not None:
        A_fn = A
        A = lambda z: np.asarray(A_fn(z), dtype=float).reshape(l_rows, n)  # noqa: E731
    if B is not None:
        B_fn = B
        B = lambda z: np.asarray(B_fn(z), dtype=float).reshape(n, m)  # noqa: E731
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return PhSystem(
        n_pot=n,
        n_kin=n,
        M=M,
        m_ports=m,
        k_pos=k,
        l_vel=l_rows,
        Z=lambda _z: eye,
        G=lambda _g: zero,
        A=A,
        B=B,
        c=c,
        c_jac=c_jac,
        V_pot=V_pot,
        grad_V=grad_V,
        tau_d=tau_d,
        **kwargs,
    )


def project_positions(sys: PhSystem, zeta: np.ndarray, tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Gauss-Newton projection onto ``c = 0`` with minimal-norm updates."""
    z = np.array(zeta, dtype=float)
    if sys.k_pos == 0:
        return z
    for _ in range(max_iter):
        cz = np.asarray(sys.c(z), dtype=float).reshape(sys.k_pos)
        if np.linalg.norm(cz) <= tol:
            return z
        C = np.asarray(sys.c_jac(z), dtype=float).reshape(sys.k_pos, sys.n_pot)
        if numerical_rank(C) < sys.k_pos:
            raise RankError(f"c'(zeta) is rank deficient at zeta={z}")
        z = z - np.linalg.lstsq(C, cz, rcond=None)[0]
        sys.check_domain(z)
    cz = np.asarray(sys.c(z), dtype=float)
    if np.linalg.norm(cz) <= tol:
        return z
    raise NoConvergence(f"position projection stalled at |c| = {np.linalg.norm(cz):.3e}")
