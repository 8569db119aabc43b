"""Time integration of the constrained port-Hamiltonian equations of motion.

The default scheme is the implicit midpoint rule on ``(zeta, omega)``. Forces
are evaluated at the midpoint, the velocity constraint ``A omega = 0`` and
the hidden constraint ``c' Z omega = 0`` are imposed at the step end, and
after each step the positions are projected onto ``c = 0`` and the
velocities onto the admissible subspace. Multipliers are part of the Newton
unknowns and carry force units.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .core import Multipliers, PhSystem, State, hamiltonian, project_positions
from .errors import DomainError, NoConvergence, PhError, RankError, ShapeError, SingularSystem
from .linalg import numerical_rank

SCHEMES = ("implicit-midpoint", "explicit-rk4-with-projection")
EffortFn = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class SimConfig:
    """Integrator settings.

    ``baumgarte = (alpha, beta)`` replaces exact acceleration-level
    constraint enforcement in the explicit scheme by
    ``g'' + 2 alpha g' + beta^2 g = 0``; it has no effect on the midpoint
    scheme, which imposes the constraints at the step end.
    """

    dt: float = 1e-3
    t_end: float = 1.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    projection_tol: float = 1e-12
    scheme: str = "implicit-midpoint"
    max_halvings: int = 6
    project: bool = True
    baumgarte: Optional[tuple[float, float]] = None

    def __post_init__(self) -> None:
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if not (self.newton_tol > 0 and self.projection_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.newton_max_iter < 1 or self.max_halvings < 0:
            raise ValueError("iteration limits must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")


def zero_effort(sys: PhSystem) -> EffortFn:
    z = np.zeros(sys.m_ports)
    return lambda _t: z


# ---------------------------------------------------------------------------
# constraint helpers


def _mat(x, rows: int, cols: int) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(rows, cols)


def constraint_rows(sys: PhSystem, zeta: np.ndarray) -> np.ndarray:
    """Stacked velocity-level constraint matrix ``[A; c' Z]``."""
    A = _mat(sys.A(zeta), sys.l_vel, sys.n_kin)
    CZ = _mat(sys.c_jac(zeta), sys.k_pos, sys.n_pot) @ _mat(sys.Z(zeta), sys.n_pot, sys.n_kin)
    return np.vstack([A, CZ])


def project_velocities(sys: PhSystem, zeta: np.ndarray, omega: np.ndarray, metric: Optional[np.ndarray] = None) -> np.ndarray:
    """Project ``omega`` onto ``ker [A; c'Z]``, orthogonally in ``metric`` (default Euclidean)."""
    C = constraint_rows(sys, zeta)
    omega = np.asarray(omega, dtype=float)
    if C.shape[0] == 0:
        return omega.copy()
    if metric is None:
        return omega - np.linalg.pinv(C) @ (C @ omega)
    Wi = np.linalg.inv(metric)
    S = C @ Wi @ C.T
    return omega - Wi @ C.T @ np.linalg.lstsq(S, C @ omega, rcond=None)[0]


def consistent_init(
    sys: PhSystem,
    zeta_guess: Sequence[float],
    omega_guess: Sequence[float],
    tol: float = 1e-12,
    max_iter: int = 50,
    keep: Sequence[int] = (),
    t: float = 0.0,
) -> State:
    """Closest consistent state to a guess.

    Positions are moved onto ``c = 0`` by Gauss-Newton with minimal-norm
    updates. Velocities are projected orthogonally onto
    ``ker [A(zeta); c'(zeta) Z(zeta)]``; indices in ``keep`` are held at their
    guessed values and only the remaining entries are adjusted.
    """
    zeta = np.asarray(zeta_guess, dtype=float).reshape(-1)
    omega = np.asarray(omega_guess, dtype=float).reshape(-1)
    if zeta.shape != (sys.n_pot,) or omega.shape != (sys.n_kin,):
        raise ShapeError(f"guess shapes {zeta.shape}, {omega.shape} do not match {sys.name}")
    sys.check_domain(zeta)
    if sys.k_pos:
        C = _mat(sys.c_jac(zeta), sys.k_pos, sys.n_pot)
        if numerical_rank(C) < sys.k_pos:
            raise RankError(f"c'(zeta) is rank deficient at the guess {zeta}")
    zeta = project_positions(sys, zeta, tol, max_iter)
    sys.check_domain(zeta)
    keep = sorted({int(i) for i in keep})
    if any(i < 0 or i >= sys.n_kin for i in keep):
        raise ShapeError(f"keep indices {keep} out of range")
    C = constraint_rows(sys, zeta)
    if C.shape[0]:
        free = [j for j in range(sys.n_kin) if j not in keep]
        Cf, Ck = C[:, free], C[:, keep]
        rhs = -(Ck @ omega[keep]) - Cf @ omega[free]
        omega = omega.copy()
        omega[free] = omega[free] + np.linalg.pinv(Cf) @ rhs
        if np.linalg.norm(C @ omega) > max(tol, 1e-12) * (1.0 + np.linalg.norm(omega)):
            raise RankError("held velocity components cannot be completed to a consistent state")
    return State.of(sys, t, zeta, omega)


# ---------------------------------------------------------------------------
# accelerations and multipliers


def _constraint_drift(sys: PhSystem, zeta: np.ndarray, omega: np.ndarray, eps: float = 1e-7) -> np.ndarray:
    """``(d/dt [A; c'Z]) omega`` by central differences along ``zeta' = Z omega``."""
    zdot = _mat(sys.Z(zeta), sys.n_pot, sys.n_kin) @ omega
    Cp = constraint_rows(sys, zeta + eps * zdot)
    Cm = constraint_rows(sys, zeta - eps * zdot)
    return (Cp - Cm) @ omega / (2.0 * eps)


def multiplier_solve(
    sys: PhSystem,
    state: State,
    tau_ext: np.ndarray,
    newton_tol: float = 1e-10,
    baumgarte: Optional[tuple[float, float]] = None,
) -> tuple[np.ndarray, Multipliers]:
    """Accelerations and reaction forces at a consistent state.

    Solves the saddle-point system

        [M    Z^T c'^T   A^T] [omega']   [-(Z^T grad V + tau_d + G omega + B tau_ext)]
        [c'Z     0        0 ] [lam   ] = [-(d/dt c'Z) omega                         ]
        [A       0        0 ] [mu    ]   [-(d/dt A) omega                           ]
    """
    sys.check_domain(state.zeta)
    zeta = np.asarray(state.zeta, dtype=float)
    omega = np.asarray(state.omega, dtype=float)
    tau_ext = np.asarray(tau_ext, dtype=float).reshape(sys.m_ports)
    nk, k, l = sys.n_kin, sys.k_pos, sys.l_vel
    Z = _mat(sys.Z(zeta), sys.n_pot, nk)
    A = _mat(sys.A(zeta), l, nk)
    CZ = _mat(sys.c_jac(zeta), k, sys.n_pot) @ Z
    B = _mat(sys.B(zeta), nk, sys.m_ports)
    G = _mat(sys.G(sys.M @ omega), nk, nk)
    f = (
        Z.T @ np.asarray(sys.grad_V(zeta), dtype=float)
        + np.asarray(sys.tau_d(zeta, omega), dtype=float)
        + G @ omega
        + B @ tau_ext
    )
    drift = _constraint_drift(sys, zeta, omega) if k + l else np.zeros(0)
    drift_A, drift_C = drift[:l], drift[l:]
    rhs_A, rhs_C = -drift_A, -drift_C
    if baumgarte is not None and k + l:
        alpha, beta = baumgarte
        rhs_A = rhs_A - 2.0 * alpha * (A @ omega)
        rhs_C = rhs_C - 2.0 * alpha * (CZ @ omega) - beta**2 * np.asarray(sys.c(zeta), dtype=float)
    n = nk + k + l
    S = np.zeros((n, n))
    S[:nk, :nk] = sys.M
    S[:nk, nk : nk + k] = CZ.T
    S[:nk, nk + k :] = A.T
    S[nk : nk + k, :nk] = CZ
    S[nk + k :, :nk] = A
    rhs = np.concatenate([-f, rhs_C, rhs_A])
    try:
        sol = np.linalg.solve(S, rhs)
        ok = bool(np.all(np.isfinite(sol)))
    except np.linalg.LinAlgError:
        ok = False
    if ok:
        res = float(np.max(np.abs(S @ sol - rhs))) if n else 0.0
        ok = res <= newton_tol * (1.0 + float(np.max(np.abs(rhs)))) * max(1.0, float(np.max(np.abs(sol))))
    if not ok:
        r = numerical_rank(S, 1e-12)
        rM = numerical_rank(sys.M, 1e-12)
        rC = numerical_rank(np.vstack([A, CZ]), 1e-12) if k + l else 0
        raise SingularSystem(
            f"saddle-point matrix has rank {r} of {n} (rank M = {rM}/{nk}, constraint rows rank {rC}/{k + l})"
        )
    return sol[:nk], Multipliers(sol[nk : nk + k], sol[nk + k :])


# ---------------------------------------------------------------------------
# one step


@dataclass
class _Chord:
    """Factorised Newton matrix kept between steps."""

    lu: Optional[tuple] = None
    h: float = 0.0
    fresh: bool = False


class Stepper:
    """Stateful one-step integrator that reuses its Newton matrix."""

    def __init__(self, sys: PhSystem, tau_ext_fn: EffortFn, cfg: SimConfig):
        self.sys = sys
        self.tau = tau_ext_fn
        self.cfg = cfg
        self.chord = _Chord()
        npot, nk = sys.n_pot, sys.n_kin
        self._sizes = (npot, nk, sys.k_pos, sys.l_vel)
        self._dw: Optional[np.ndarray] = None
        self._dw_h = 0.0
        self._dmult: Optional[Multipliers] = None

    # -- implicit midpoint ---------------------------------------------------

    def _residual(self, x: np.ndarray, z0: np.ndarray, w0: np.ndarray, t: float, h: float) -> np.ndarray:
        sys = self.sys
        npot, nk, k, l = self._sizes
        z1 = x[:npot]
        w1 = x[npot : npot + nk]
        lam = x[npot + nk : npot + nk + k]
        mu = x[npot + nk + k :]
        zm = 0.5 * (z0 + z1)
        wm = 0.5 * (w0 + w1)
        sys.check_domain(zm)
        Zm = _mat(sys.Z(zm), npot, nk)
        force = (
            Zm.T @ (np.asarray(sys.grad_V(zm), dtype=float) + _mat(sys.c_jac(zm), k, npot).T @ lam)
            + np.asarray(sys.tau_d(zm, wm), dtype=float)
            + _mat(sys.G(sys.M @ wm), nk, nk) @ wm
            + _mat(sys.A(zm), l, nk).T @ mu
            + _mat(sys.B(zm), nk, sys.m_ports) @ np.asarray(self.tau(t + 0.5 * h), dtype=float).reshape(sys.m_ports)
        )
        out = [z1 - z0 - h * (Zm @ wm), sys.M @ (w1 - w0) + h * force]
        if k + l:
            sys.check_domain(z1)
            out.append(_mat(sys.c_jac(z1), k, npot) @ _mat(sys.Z(z1), npot, nk) @ w1)
            out.append(_mat(sys.A(z1), l, nk) @ w1)
        return np.concatenate(out)

    def _jacobian(self, x: np.ndarray, F0: np.ndarray, *args) -> np.ndarray:
        J = np.empty((F0.size, x.size))
        for i in range(x.size):
            e = 1e-7 * (1.0 + abs(x[i]))
            xp = x.copy()
            xp[i] += e
            J[:, i] = (self._residual(xp, *args) - F0) / e
        return J

    def _midpoint(self, state: State, mult: Multipliers, h: float) -> tuple[State, Multipliers]:
        sys, cfg = self.sys, self.cfg
        npot, nk, _, _ = self._sizes
        z0, w0, t = state.zeta, state.omega, state.t
        # extrapolate the previous velocity increment when the step size is unchanged
        w1 = w0 + self._dw if self._dw is not None and self._dw_h == h else w0
        zp = z0 + h * (_mat(sys.Z(z0), npot, nk) @ (0.5 * (w0 + w1)))
        lam, mu = mult.lam, mult.mu
        if self._dmult is not None and self._dw_h == h:
            lam, mu = lam + self._dmult.lam, mu + self._dmult.mu
        x = np.concatenate([zp, w1, lam, mu])
        args = (z0, w0, t, h)
        F = self._residual(x, *args)
        if self.chord.lu is None or self.chord.h != h:
            self._refresh(x, F, args, h)
        fprev = float(np.max(np.abs(F))) if F.size else 0.0
        for _ in range(cfg.newton_max_iter):
            if not math.isfinite(fprev):
                break
            dx = lu_solve(self.chord.lu, -F, check_finite=False)
            x = x + dx
            F = self._residual(x, *args)
            fnew = float(np.max(np.abs(F))) if F.size else 0.0
            xscale = 1.0 + float(np.max(np.abs(x)))
            small = float(np.max(np.abs(dx))) <= 1e-15 * xscale
            if fnew <= cfg.newton_tol * 1e-3 or (small and fnew <= cfg.newton_tol):
                break
            if fnew > 0.1 * fprev and not self.chord.fresh:
                # slow contraction: rebuild the matrix at the current iterate
                self._refresh(x, F, args, h)
            else:
                self.chord.fresh = False
            fprev = fnew
        fnorm = float(np.max(np.abs(F))) if F.size else 0.0
        if not fnorm <= cfg.newton_tol:
            self.chord.lu = None
            raise NoConvergence(f"Newton residual {fnorm:.3e} after {cfg.newton_max_iter} iterations (h={h:g})")
        z1 = x[:npot]
        w1 = x[npot : npot + nk]
        self._dw, self._dw_h = w1 - w0, h
        lam = x[npot + nk : npot + nk + sys.k_pos]
        mu = x[npot + nk + sys.k_pos :]
        self._dmult = Multipliers(lam - mult.lam, mu - mult.mu)
        return State.of(sys, t + h, z1, w1), Multipliers(lam.copy(), mu.copy())

    def _refresh(self, x, F, args, h) -> None:
        J = self._jacobian(x, F, *args)
        if not np.all(np.isfinite(J)):
            raise NoConvergence("non-finite Newton matrix")
        self.chord.lu = lu_factor(J, check_finite=False)
        self.chord.h = h
        self.chord.fresh = True

    # -- explicit RK4 --------------------------------------------------------

    def _rk4(self, state: State, h: float) -> tuple[State, Multipliers]:
        sys, cfg = self.sys, self.cfg
        npot, nk, _, _ = self._sizes

        def f(t, z, w):
            st = State(t, z, w, sys.M @ w)
            wd, _ = multiplier_solve(sys, st, self.tau(t), cfg.newton_tol, cfg.baumgarte)
            return _mat(sys.Z(z), npot, nk) @ w, wd

        t, z, w = state.t, state.zeta, state.omega
        k1z, k1w = f(t, z, w)
        k2z, k2w = f(t + h / 2, z + h / 2 * k1z, w + h / 2 * k1w)
        k3z, k3w = f(t + h / 2, z + h / 2 * k2z, w + h / 2 * k2w)
        k4z, k4w = f(t + h, z + h * k3z, w + h * k3w)
        z1 = z + h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
        w1 = w + h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w)
        sys.check_domain(z1)
        new = State.of(sys, t + h, z1, w1)
        _, mult = multiplier_solve(sys, new, self.tau(t + h), cfg.newton_tol, cfg.baumgarte)
        return new, mult

    # -- public --------------------------------------------------------------

    def _project(self, state: State) -> State:
        sys, cfg = self.sys, self.cfg
        if not cfg.project or sys.k_pos + sys.l_vel == 0:
            return state
        z = project_positions(sys, state.zeta, cfg.projection_tol, cfg.newton_max_iter)
        sys.check_domain(z)
        w = project_velocities(sys, z, state.omega, sys.M)
        return State.of(sys, state.t, z, w)

    def advance(self, state: State, mult: Multipliers, h: float, depth: int = 0) -> tuple[State, Multipliers]:
        """One step of size ``h``, splitting it in halves on Newton failure."""
        try:
            if self.cfg.scheme == "implicit-midpoint":
                new, m = self._midpoint(state, mult, h)
            else:
                new, m = self._rk4(state, h)
        except (NoConvergence, SingularSystem, np.linalg.LinAlgError) as exc:
            if depth >= self.cfg.max_halvings:
                raise NoConvergence(f"step failed down to h={h:g}: {exc}") from exc
            self.chord.lu = None
            mid, m1 = self.advance(state, mult, h / 2, depth + 1)
            return self.advance(mid, m1, h / 2, depth + 1)
        self.sys.check_domain(new.zeta)
        return self._project(new), m


def step(
    sys: PhSystem,
    state: State,
    tau_ext_fn: EffortFn,
    cfg: SimConfig,
    mult: Optional[Multipliers] = None,
) -> tuple[State, Multipliers]:
    """Advance a consistent state by ``cfg.dt``.

    Returns the new (projected) state and the multipliers of the step: the
    midpoint reaction forces for the implicit scheme, the endpoint ones for
    the explicit scheme.
    """
    stepper = Stepper(sys, tau_ext_fn, cfg)
    return stepper.advance(state, mult if mult is not None else Multipliers.zeros(sys), cfg.dt)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Recorded solution, one row per accepted step including the initial state.

    ``balance_residual[k]`` is the energy-balance defect of step ``k``,
    ``H_k - H_{k-1} + dt/2 (P_{k-1} + P_k)`` with extracted-plus-dissipated
    power ``P = omega^T tau_d + omega_ext^T tau_ext``; row 0 holds 0.
    ``constraint_residual`` is ``max(|c(zeta)|, |A(zeta) omega|)``.
    """

    system: str
    times: np.ndarray
    zeta: np.ndarray
    omega: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    tau_ext: np.ndarray
    omega_ext: np.ndarray
    H: np.ndarray
    power: np.ndarray
    balance_residual: np.ndarray
    c_residual: np.ndarray
    a_residual: np.ndarray
    hidden_residual: np.ndarray
    init_distance: float = 0.0
    error: Optional[str] = None
    rank_drops: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return self.times.size

    @property
    def constraint_residual(self) -> np.ndarray:
        return np.maximum(self.c_residual, self.a_residual)

    @property
    def cumulative_balance(self) -> np.ndarray:
        return np.cumsum(self.balance_residual)

    def state(self, k: int) -> State:
        return State(float(self.times[k]), self.zeta[k], self.omega[k], None)

    def multipliers(self, k: int) -> Multipliers:
        return Multipliers(self.lam[k], self.mu[k])

    def relative_energy_drift(self) -> float:
        H0 = self.H[0]
        return float(np.max(np.abs(self.H - H0)) / max(abs(H0), 1e-300))

    def header(self) -> list[str]:
        cols = ["t"]
        cols += [f"zeta_{i}" for i in range(self.zeta.shape[1])]
        cols += [f"omega_{i}" for i in range(self.omega.shape[1])]
        cols += [f"lambda_{i}" for i in range(self.lam.shape[1])]
        cols += [f"mu_{i}" for i in range(self.mu.shape[1])]
        return cols + ["H", "balance_residual", "constraint_residual"]

    def to_csv(self, path=None) -> str:
        """CSV text with 17 significant digits; also written to ``path`` if given."""
        data = np.column_stack(
            [self.times, self.zeta, self.omega, self.lam, self.mu, self.H, self.balance_residual,
             self.constraint_residual]
        )
        buf = io.StringIO()
        buf.write(",".join(self.header()) + "\n")
        for row in data:
            buf.write(",".join("%.17g" % v for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict[str, float]:
        return {
            "steps": int(len(self) - 1),
            "t_final": float(self.times[-1]),
            "H_initial": float(self.H[0]),
            "H_final": float(self.H[-1]),
            "max_balance_residual": float(np.max(np.abs(self.balance_residual))),
            "max_cumulative_balance_residual": float(np.max(np.abs(self.cumulative_balance))),
            "max_constraint_residual": float(np.max(self.constraint_residual)),
            "projection_distance": float(self.init_distance),
        }


class _Recorder:
    def __init__(self, sys: PhSystem, tau_fn: EffortFn):
        self.sys = sys
        self.tau = tau_fn
        self.rows: dict[str, list] = {k: [] for k in (
            "t", "zeta", "omega", "lam", "mu", "tau", "wext", "H", "P", "bal", "c", "a", "hid")}

    def add(self, st: State, mult: Multipliers, dt: float) -> None:
        sys = self.sys
        tau = np.asarray(self.tau(st.t), dtype=float).reshape(sys.m_ports)
        B = _mat(sys.B(st.zeta), sys.n_kin, sys.m_ports)
        wext = B.T @ st.omega
        P = float(st.omega @ np.asarray(sys.tau_d(st.zeta, st.omega), dtype=float) + wext @ tau)
        H = hamiltonian(sys, st)
        r = self.rows
        bal = 0.0 if not r["H"] else H - r["H"][-1] + 0.5 * dt * (r["P"][-1] + P)
        c = float(np.linalg.norm(np.asarray(sys.c(st.zeta), dtype=float))) if sys.k_pos else 0.0
        A = _mat(sys.A(st.zeta), sys.l_vel, sys.n_kin)
        a = float(np.linalg.norm(A @ st.omega)) if sys.l_vel else 0.0
        hid = (
            float(np.linalg.norm(_mat(sys.c_jac(st.zeta), sys.k_pos, sys.n_pot)
                                 @ _mat(sys.Z(st.zeta), sys.n_pot, sys.n_kin) @ st.omega))
            if sys.k_pos else 0.0
        )
        for key, val in (("t", st.t), ("zeta", st.zeta), ("omega", st.omega), ("lam", mult.lam),
                         ("mu", mult.mu), ("tau", tau), ("wext", wext), ("H", H), ("P", P),
                         ("bal", bal), ("c", c), ("a", a), ("hid", hid)):
            r[key].append(val)

    def build(self, name: str, init_distance: float, error: Optional[str], drops: list[int]) -> Trajectory:
        r = self.rows
        sys = self.sys

        def arr(key, width):
            return np.array(r[key], dtype=float).reshape(len(r["t"]), width)

        return Trajectory(
            system=name,
            times=np.array(r["t"], dtype=float),
            zeta=arr("zeta", sys.n_pot),
            omega=arr("omega", sys.n_kin),
            lam=arr("lam", sys.k_pos),
            mu=arr("mu", sys.l_vel),
            tau_ext=arr("tau", sys.m_ports),
            omega_ext=arr("wext", sys.m_ports),
            H=np.array(r["H"]),
            power=np.array(r["P"]),
            balance_residual=np.array(r["bal"]),
            c_residual=np.array(r["c"]),
            a_residual=np.array(r["a"]),
            hidden_residual=np.array(r["hid"]),
            init_distance=init_distance,
            error=error,
            rank_drops=drops,
        )


class SimulationError(PhError):
    """A step failed; ``trajectory`` holds everything accepted before it."""

    def __init__(self, message: str, cause: PhError, trajectory: Trajectory, step_index: int):
        super().__init__(message)
        self.cause = cause
        self.trajectory = trajectory
        self.step_index = step_index


def simulate(
    sys: PhSystem,
    init: State,
    tau_ext_fn: Optional[EffortFn] = None,
    cfg: Optional[SimConfig] = None,
    init_distance: float = 0.0,
) -> Trajectory:
    """Integrate from ``init`` to ``init.t + cfg.t_end`` on the grid ``t_k = t_0 + k dt``.

    A failing step raises :class:`SimulationError` whose ``cause`` is the
    original error and whose ``trajectory`` holds the accepted steps.
    """
    cfg = cfg or SimConfig()
    tau_fn = tau_ext_fn or zero_effort(sys)
    sys.check_domain(init.zeta)
    state = State.of(sys, init.t, init.zeta, init.omega)
    mult = multiplier_solve(sys, state, tau_fn(state.t), cfg.newton_tol)[1]
    rec = _Recorder(sys, tau_fn)
    rec.add(state, mult, cfg.dt)
    n_full = int(math.floor(cfg.t_end / cfg.dt + 1e-9))
    rest = cfg.t_end - n_full * cfg.dt
    grid = [cfg.dt] * n_full + ([rest] if rest > 1e-12 * max(1.0, cfg.t_end) else [])
    stepper = Stepper(sys, tau_fn, cfg)
    expected_rank = getattr(sys.coupling, "rank", None)
    drops: list[int] = []
    t0 = init.t
    for k, h in enumerate(grid, start=1):
        try:
            state, mult = stepper.advance(state, mult, h)
        except (PhError, np.linalg.LinAlgError) as exc:
            traj = rec.build(sys.name, init_distance, f"step {k}: {type(exc).__name__}: {exc}", drops)
            cause = exc if isinstance(exc, PhError) else NoConvergence(str(exc))
            raise SimulationError(f"step {k} (t={t0 + (k - 1) * cfg.dt:.6g}): {exc}", cause, traj, k) from exc
        t_k = t0 + k * cfg.dt if k <= n_full else t0 + cfg.t_end
        state = State(t_k, state.zeta, state.omega, state.gamma)
        if expected_rank is not None and sys.l_vel:
            if numerical_rank(_mat(sys.A(state.zeta), sys.l_vel, sys.n_kin)) != expected_rank:
                drops.append(k)
        rec.add(state, mult, h)
    return rec.build(sys.name, init_distance, None, drops)


def state_distance(a_zeta, a_omega, b: State) -> float:
    return float(np.linalg.norm(np.concatenate([np.asarray(a_zeta) - b.zeta, np.asarray(a_omega) - b.omega])))


__all__ = [
    "SimConfig",
    "Trajectory",
    "SimulationError",
    "Stepper",
    "consistent_init",
    "multiplier_solve",
    "step",
    "simulate",
    "project_positions",
    "project_velocities",
    "constraint_rows",
    "zero_effort",
    "state_distance",
    "DomainError",
]
