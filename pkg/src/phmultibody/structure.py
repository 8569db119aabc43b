"""Numerical checks of the port-Hamiltonian axioms.

Every universally quantified condition (``for all x in U``) is discretised by
a reproducible :class:`SampleSet`. Each check returns a :class:`Verdict`
carrying the worst violation found and a witness point, and
:func:`verify_system` collects them into a :class:`VerificationReport`.

Subspaces of ``R^n x R^n`` are stored as image representations
:class:`ImageRep`: the columns of ``[K; L]`` span the subspace, with flows on
top and efforts below.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.linalg import qr
from scipy.stats import qmc

from .core import PhSystem, eval_point, project_positions
from .errors import ConstraintError, PhError, RankError, ShapeError
from .linalg import RANK_RTOL, fd_gradient, fd_jacobian, numerical_rank, rank_gap

PASS, FAIL, ERROR = "pass", "fail", "error"


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class ImageRep:
    """Subspace ``im [K; L]`` of flow/effort pairs."""

    K: np.ndarray
    L: np.ndarray

    def __post_init__(self) -> None:
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        if K.shape != L.shape:
            raise ShapeError(f"K {K.shape} and L {L.shape} differ")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "L", L)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.K, self.L])


@dataclass
class Verdict:
    """Outcome of one check.

    ``magnitude`` is the worst violation seen (nonnegative), ``witness`` the
    point where it occurred. A failing verdict always has a witness.
    """

    name: str
    status: str
    magnitude: float = 0.0
    tolerance: float = 0.0
    witness: Optional[list[float]] = None
    detail: dict[str, Any] = field(default_factory=dict)
    axiom: bool = True

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.name,
            "status": self.status,
            "magnitude": _num(self.magnitude),
            "tolerance": _num(self.tolerance),
            "axiom": self.axiom,
        }
        if self.witness is not None:
            out["witness"] = [_num(v) for v in self.witness]
        if self.detail:
            out["detail"] = _jsonable(self.detail)
        return out


def _num(v: float) -> Any:
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        return str(v)
    return v


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def _verdict(name: str, worst: float, tol: float, witness: Any, **detail: Any) -> Verdict:
    ok = worst <= tol
    w = None if witness is None else [float(v) for v in np.atleast_1d(witness)]
    return Verdict(name, PASS if ok else FAIL, float(worst), float(tol), w, dict(detail))


@dataclass(frozen=True)
class SampleSet:
    """Reproducible quasi-random points in a box, plus fixed anchor points."""

    points: np.ndarray
    seed: int
    count: int
    box: tuple[tuple[float, float], ...]

    @classmethod
    def draw(
        cls,
        box: Sequence[tuple[float, float]],
        count: int,
        seed: int = 42,
        guard: Optional[Callable[[np.ndarray], bool]] = None,
        anchors: Sequence[Sequence[float]] = (),
    ) -> "SampleSet":
        if count <= 0:
            raise ValueError("sample count must be positive")
        box = tuple((float(lo), float(hi)) for lo, hi in box)
        d = len(box)
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        anchor_pts = [np.asarray(a, dtype=float).reshape(d) for a in anchors]
        pts: list[np.ndarray] = [a for a in anchor_pts if guard is None or guard(a)]
        if d == 0:
            pts = [np.zeros(0)] * count
        else:
            engine = qmc.Halton(d, scramble=True, seed=seed)
            attempts = 0
            while len(pts) < count:
                attempts += 1
                if attempts > 50:
                    raise ValueError("sampling box is (almost) outside the admissible set")
                raw = engine.random(max(count, 16))
                for u in raw:
                    p = lo + u * (hi - lo)
                    if guard is None or guard(p):
                        pts.append(p)
                        if len(pts) == count:
                            break
        return cls(np.array(pts[:count]).reshape(count, d), int(seed), int(count), box)

    def __iter__(self):
        return iter(self.points)

    def __len__(self) -> int:
        return self.count


def system_samples(sys: PhSystem, count: int = 200, seed: int = 42) -> SampleSet:
    """Samples of ``(zeta, omega)`` in the system's documented boxes."""
    box = tuple(sys.zeta_box) + tuple(sys.omega_box)
    guard = lambda x: bool(sys.domain_guard(x[: sys.n_pot]))  # noqa: E731
    return SampleSet.draw(box, count, seed, guard=guard)


# ---------------------------------------------------------------------------
# Dirac structures


def check_dirac_pointwise(rep: ImageRep, tol: float = 1e-9, rank_rtol: float = RANK_RTOL) -> Verdict:
    """Is ``im [K; L]`` a Dirac structure?

    Requires the spanned space to have dimension ``n`` and to be isotropic
    under the power pairing: ``K^T L + L^T K = 0``. The isotropy defect is
    measured relative to ``max(1, |K| |L|)``.
    """
    n = rep.n
    r, kept, dropped = rank_gap(rep.stacked, rank_rtol)
    sym = rep.K.T @ rep.L + rep.L.T @ rep.K
    scale = max(1.0, np.linalg.norm(rep.K, 2) * np.linalg.norm(rep.L, 2)) if rep.K.size else 1.0
    defect = float(np.max(np.abs(sym))) / scale if sym.size else 0.0
    ok = r == n and defect <= tol
    return Verdict(
        "dirac_pointwise",
        PASS if ok else FAIL,
        defect if r == n else max(defect, float(abs(r - n))),
        tol,
        None,
        {"rank": r, "n": n, "sv_kept_min": kept, "sv_dropped_max": dropped, "isotropy_defect": defect},
    )


def unconstrained_structure_matrix(sys: PhSystem, zeta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Skew matrix ``J(zeta, Gamma)`` of the constraint-free structure.

    Flow blocks (rows): position rates, kinetic forces, resistive velocities,
    port velocities. Effort blocks (columns): potential forces, velocities,
    resistive forces, port forces.
    """
    sys.check_domain(zeta)
    npot, nk, m = sys.n_pot, sys.n_kin, sys.m_ports
    Z = np.asarray(sys.Z(zeta), dtype=float).reshape(npot, nk)
    G = np.asarray(sys.G(gamma), dtype=float).reshape(nk, nk)
    B = np.asarray(sys.B(zeta), dtype=float).reshape(nk, m)
    nh = npot + 2 * nk + m
    J = np.zeros((nh, nh))
    i0, i1, i2 = npot, npot + nk, npot + 2 * nk
    J[:i0, i0:i1] = Z
    J[i0:i1, :i0] = -Z.T
    J[i0:i1, i0:i1] = -G
    J[i0:i1, i1:i2] = -np.eye(nk)
    J[i0:i1, i2:] = -B
    J[i1:i2, i0:i1] = np.eye(nk)
    J[i2:, i0:i1] = B.T
    return J


def assemble_unconstrained_dirac(sys: PhSystem, zeta: np.ndarray, gamma: np.ndarray) -> ImageRep:
    """Image representation ``[J; I]`` of the structure without velocity constraints."""
    J = unconstrained_structure_matrix(sys, np.asarray(zeta, float), np.asarray(gamma, float))
    return ImageRep(J, np.eye(J.shape[0]))


def velocity_constraint_effort_map(sys: PhSystem, zeta: np.ndarray) -> np.ndarray:
    """``E = [0, A(zeta), 0, 0]`` acting on the effort vector of ``[J; I]``."""
    A = np.asarray(sys.A(zeta), dtype=float).reshape(sys.l_vel, sys.n_kin)
    E = np.zeros((sys.l_vel, sys.n_pot + 2 * sys.n_kin + sys.m_ports))
    E[:, sys.n_pot : sys.n_pot + sys.n_kin] = A
    return E


# ---------------------------------------------------------------------------
# kernels with frozen pivots


@dataclass(frozen=True)
class Pivots:
    rows: tuple[int, ...]
    cols: tuple[int, ...]


def kernel_pivots(E: np.ndarray, r: int) -> Pivots:
    """Rows and columns selecting an invertible ``r x r`` block of ``E``."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    if r == 0:
        return Pivots((), ())
    _, _, prow = qr(E.T, pivoting=True, mode="economic")
    rows = tuple(int(i) for i in prow[:r])
    _, _, pcol = qr(E[list(rows), :], pivoting=True, mode="economic")
    return Pivots(rows, tuple(int(j) for j in pcol[:r]))


def continuous_kernel_basis(
    E: np.ndarray,
    r: int,
    tol: float = RANK_RTOL,
    pivots: Optional[Pivots] = None,
    scale: Optional[float] = None,
) -> np.ndarray:
    """Kernel basis ``J = P [-E11^{-1} E12; I]`` of a rank-``r`` matrix.

    ``E11`` is an invertible ``r x r`` block picked by pivoted QR (or given by
    ``pivots``). With the pivots held fixed, ``J`` depends continuously on
    ``E``, which is what a local continuous frame of ``ker E`` needs.

    Raises :class:`RankError` if the numerical rank of ``E`` is not ``r``.
    """
    E = np.asarray(E, dtype=float)
    if E.ndim == 1:
        E = E.reshape(1, -1)
    n = E.shape[1]
    got = numerical_rank(E, tol, scale) if E.size else 0
    if got != r:
        raise RankError(f"numerical rank {got} differs from expected rank {r}")
    if pivots is None:
        pivots = kernel_pivots(E, r)
    if len(pivots.rows) != r or len(pivots.cols) != r:
        raise RankError(f"frozen pivots have size {len(pivots.cols)}, rank is {r}")
    free = [j for j in range(n) if j not in pivots.cols]
    J = np.zeros((n, n - r))
    if r:
        E11 = E[np.ix_(pivots.rows, pivots.cols)]
        E12 = E[np.ix_(pivots.rows, free)]
        if numerical_rank(E11, tol) != r:
            raise RankError("pivot block is singular at this point")
        J[list(pivots.cols), :] = -np.linalg.solve(E11, E12)
    J[free, :] = np.eye(n - r)
    resid = float(np.max(np.abs(E @ J))) if E.size and J.size else 0.0
    emax = float(np.max(np.abs(E))) if E.size else 0.0
    if resid > max(tol, 1e-9) * (1.0 + emax) * max(1.0, float(np.max(np.abs(J))) if J.size else 1.0):
        raise RankError(f"kernel residual {resid:.3e}: rows outside the pivot block are independent")
    return J


@dataclass(frozen=True)
class ConstrainedPivots:
    rank_EL: int
    p1: Pivots
    p2: Pivots
    p3: Pivots


def _constrained(
    rep: ImageRep, E: np.ndarray, tol: float, frozen: Optional[ConstrainedPivots]
) -> tuple[ImageRep, ConstrainedPivots]:
    n = rep.n
    E = np.asarray(E, dtype=float).reshape(-1, n)
    K, L = rep.K, rep.L
    if E.shape[0] == 0:
        E = np.zeros((0, n))
    EL = E @ L
    scale = max(np.linalg.norm(E, 2) if E.size else 0.0, 0.0) * np.linalg.norm(L, 2)
    r1 = numerical_rank(EL, tol, scale) if EL.size else 0
    if frozen is not None and frozen.rank_EL != r1:
        raise RankError(f"rank of E L changed from {frozen.rank_EL} to {r1}")
    p1 = frozen.p1 if frozen else kernel_pivots(EL, r1) if EL.size else Pivots((), ())
    J1 = continuous_kernel_basis(EL, r1, tol, p1, scale) if EL.size else np.eye(L.shape[1])
    D = np.block([[K @ J1, E.T], [L @ J1, np.zeros((n, E.shape[0]))]])
    rD = numerical_rank(D, tol)
    if rD != n:
        raise RankError(f"constrained structure spans dimension {rD}, expected {n}")
    ncols = D.shape[1]
    if ncols == n:
        return ImageRep(D[:n], D[n:]), ConstrainedPivots(r1, p1, Pivots((), ()), Pivots((), ()))
    p2 = frozen.p2 if frozen else kernel_pivots(D, n)
    J2 = continuous_kernel_basis(D, n, tol, p2)
    p3 = frozen.p3 if frozen else kernel_pivots(J2.T, ncols - n)
    J3 = continuous_kernel_basis(J2.T, ncols - n, tol, p3)
    T = D @ J3
    return ImageRep(T[:n], T[n:]), ConstrainedPivots(r1, p1, p2, p3)


def assemble_constrained_dirac(rep: ImageRep, E: np.ndarray, tol: float = RANK_RTOL) -> ImageRep:
    """Restrict a Dirac structure by ``E e = 0`` with reaction flows ``E^T mu``.

    Builds ``D = [K J1, E^T; L J1, 0]`` with ``im J1 = ker(E L)`` and reduces
    it to ``n`` independent columns. Raises :class:`RankError` when the
    intermediate ranks are inconsistent at this point.
    """
    return _constrained(rep, E, tol, None)[0]


def same_subspace(X: np.ndarray, Y: np.ndarray, rtol: float = 1e-9) -> bool:
    rx, ry = numerical_rank(X, rtol), numerical_rank(Y, rtol)
    return rx == ry == numerical_rank(np.hstack([X, Y]), rtol)


def intersection_dimension(rep: ImageRep, E: np.ndarray, tol: float = RANK_RTOL) -> int:
    """``dim(D ∩ (R^n x ker E)) = n - rank(E L)`` for a Dirac structure ``D``."""
    E = np.asarray(E, dtype=float).reshape(-1, rep.n)
    if E.shape[0] == 0:
        return rep.n
    scale = np.linalg.norm(E, 2) * np.linalg.norm(rep.L, 2)
    return rep.n - numerical_rank(E @ rep.L, tol, scale)


def check_dim_constancy(
    rep_fn: Callable[[np.ndarray], ImageRep],
    E_fn: Callable[[np.ndarray], np.ndarray],
    samples: Sequence[np.ndarray] | SampleSet,
    tol: float = RANK_RTOL,
) -> Verdict:
    """Is ``dim(D_x ∩ (R^n x ker E(x)))`` the same at every sample?

    The witness is the first sample whose dimension differs from the most
    common one.
    """
    pts = list(samples)
    if not pts:
        raise ValueError("no samples")
    dims = [intersection_dimension(rep_fn(x), E_fn(x), tol) for x in pts]
    values, counts = np.unique(dims, return_counts=True)
    mode = int(values[np.argmax(counts)])
    bad = [i for i, d in enumerate(dims) if d != mode]
    hist = {int(v): int(c) for v, c in zip(values, counts)}
    if not bad:
        return Verdict("dirac_dimension_constancy", PASS, 0.0, 0.0, None,
                       {"dimension": mode, "samples": len(pts)})
    i = bad[0]
    return Verdict(
        "dirac_dimension_constancy",
        FAIL,
        float(abs(dims[i] - mode)),
        0.0,
        [float(v) for v in np.atleast_1d(pts[i])],
        {"dimension_counts": hist, "witness_dimension": dims[i], "typical_dimension": mode,
         "samples": len(pts)},
    )


def check_local_trivialization(
    rep_fn: Callable[[np.ndarray], ImageRep],
    E_fn: Callable[[np.ndarray], np.ndarray],
    samples: Sequence[np.ndarray] | SampleSet,
    rel_step: float = 1e-4,
    tol: float = RANK_RTOL,
) -> Verdict:
    """Continuity proxy for a local frame of the constrained structure.

    At each sample the constrained representation is assembled, its pivots
    are frozen, and it is re-assembled at two perturbed points
    ``x + s d`` and ``x + (s/10) d``. A continuous frame moves about ten
    times less for the smaller step; a jump does not shrink.
    """
    worst, witness = 0.0, None
    rng = np.random.default_rng(0)
    for x in samples:
        x = np.asarray(x, dtype=float).reshape(-1)
        base, piv = _constrained(rep_fn(x), E_fn(x), tol, None)
        T0 = base.stacked
        d = rng.standard_normal(x.size)
        d /= max(np.linalg.norm(d), 1e-300)
        s = rel_step * (1.0 + np.linalg.norm(x))
        diffs = []
        for step in (s, s / 10):
            xp = x + step * d
            try:
                Tp = _constrained(rep_fn(xp), E_fn(xp), tol, piv)[0].stacked
                diffs.append(float(np.max(np.abs(Tp - T0))))
            except PhError:
                diffs.append(float("inf"))
        floor = 1e-10 * (1.0 + float(np.max(np.abs(T0))))
        if diffs[1] <= floor:
            ratio = 0.0
        elif math.isinf(diffs[1]):
            ratio = float("inf")
        else:
            ratio = diffs[1] / max(diffs[0], floor)
        if ratio > worst:
            worst, witness = ratio, x
    return _verdict("local_trivialization_proxy", worst, 0.5, witness)


# ---------------------------------------------------------------------------
# Lagrangian submanifolds


def check_lagrangian_local(
    H: Optional[Callable[[np.ndarray], float]],
    grad_H: Callable[[np.ndarray], np.ndarray],
    d: Optional[Callable[[np.ndarray], np.ndarray]],
    d_jac: Optional[Callable[[np.ndarray], np.ndarray]],
    z1: np.ndarray,
    tol: float = 1e-6,
    lam: Optional[np.ndarray] = None,
    rank_rtol: float = RANK_RTOL,
) -> Verdict:
    """Tangent-space test of ``{(x, grad H(x) + d'(x)^T lam) : d(x) = 0}``.

    At ``z1`` the tangent space is spanned by ``(v, M v)`` for ``v`` in
    ``ker d'(z1)`` and by ``(0, y)`` for ``y`` in ``im d'(z1)^T``, with
    ``M = (grad H)'(z1) + sum_l lam_l d_l''(z1)`` from finite differences.
    The check passes when the symplectic pairing ``v1.w2 - w1.v2`` vanishes
    on all pairs of basis vectors, the Jacobian of ``grad_H`` is symmetric
    and (if ``H`` is given) ``grad_H`` matches the gradient of ``H``.
    """
    z1 = np.asarray(z1, dtype=float).reshape(-1)
    n = z1.size
    if d is None:
        d = lambda _x: np.zeros(0)  # noqa: E731
        d_jac = lambda _x: np.zeros((0, n))  # noqa: E731
    dz = np.atleast_1d(np.asarray(d(z1), dtype=float))
    k = dz.size
    if k and float(np.max(np.abs(dz))) > tol:
        raise ConstraintError(f"d(z1) = {dz} is not zero")
    D1 = np.asarray(d_jac(z1), dtype=float).reshape(k, n)
    r = numerical_rank(D1, rank_rtol) if k else 0
    if r != k:
        raise RankError(f"d'(z1) has rank {r}, needs full row rank {k}")
    lam = np.ones(k) if lam is None else np.asarray(lam, dtype=float).reshape(k)

    hess = fd_jacobian(lambda x: np.asarray(grad_H(x), dtype=float), z1, rel=1e-5)
    if k:
        curv = fd_jacobian(lambda x: np.asarray(d_jac(x), dtype=float).reshape(k, n).T @ lam, z1, rel=1e-5)
    else:
        curv = np.zeros((n, n))
    Mz = hess + curv
    scale = 1.0 + float(np.max(np.abs(Mz))) if Mz.size else 1.0

    asym = float(np.max(np.abs(hess - hess.T))) / (1.0 + float(np.max(np.abs(hess)))) if n else 0.0
    grad_err = 0.0
    if H is not None:
        g = np.asarray(grad_H(z1), dtype=float)
        g_fd = fd_gradient(H, z1)
        grad_err = float(np.max(np.abs(g - g_fd))) / (1.0 + float(np.max(np.abs(g)))) if n else 0.0

    V1 = continuous_kernel_basis(D1, k, rank_rtol) if k else np.eye(n)
    T1 = np.hstack([V1, np.zeros((n, k))])
    T2 = np.hstack([Mz @ V1, D1.T])
    omega = T1.T @ T2 - T2.T @ T1
    pairing = float(np.max(np.abs(omega))) / scale if omega.size else 0.0
    tangent_rank = numerical_rank(np.vstack([T1, T2]), rank_rtol)

    worst = max(pairing, asym, 1e-4 * grad_err)
    ok = pairing <= tol and asym <= tol and grad_err <= 1e-4 and tangent_rank == n
    return Verdict(
        "lagrangian_submanifold",
        PASS if ok else FAIL,
        worst,
        tol,
        [float(v) for v in z1] if not ok else None,
        {"pairing_defect": pairing, "hessian_asymmetry": asym, "gradient_mismatch": grad_err,
         "tangent_dimension": tangent_rank, "n": n},
    )


# ---------------------------------------------------------------------------
# resistive relations


def check_resistive(
    tau_d: Callable[[np.ndarray, np.ndarray], np.ndarray],
    samples: Sequence[tuple[np.ndarray, np.ndarray]],
    tol: float = 1e-12,
) -> Verdict:
    """Passes iff ``omega^T tau_d(zeta, omega) >= -tol`` at every sample."""
    worst_val, witness = float("inf"), None
    count = 0
    for zeta, omega in samples:
        zeta = np.asarray(zeta, dtype=float)
        omega = np.asarray(omega, dtype=float)
        p = float(omega @ np.asarray(tau_d(zeta, omega), dtype=float))
        count += 1
        if p < worst_val:
            worst_val, witness = p, np.concatenate([zeta, omega])
    if count == 0:
        raise ValueError("no samples")
    ok = worst_val >= -tol
    return Verdict(
        "resistive_passivity",
        PASS if ok else FAIL,
        max(0.0, -worst_val),
        tol,
        [float(v) for v in witness] if (not ok or witness is not None) else None,
        {"min_power": worst_val, "samples": count},
    )


# ---------------------------------------------------------------------------
# aggregate report


@dataclass
class VerificationReport:
    subject: str
    checks: list[Verdict]
    samples: dict[str, Any]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.axiom)

    def __getitem__(self, name: str) -> Verdict:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[Verdict]:
        return [c for c in self.checks if c.axiom and not c.passed]

    def to_dict(self) -> dict[str, Any]:
        return {
            "subject": self.subject,
            "overall": PASS if self.passed else FAIL,
            "samples": _jsonable(self.samples),
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _guarded(name: str, fn: Callable[[], Verdict], axiom: bool = True) -> Verdict:
    try:
        v = fn()
    except (PhError, ValueError, np.linalg.LinAlgError) as exc:
        return Verdict(name, ERROR, float("inf"), 0.0, None, {"error": f"{type(exc).__name__}: {exc}"}, axiom)
    v.name = name
    v.axiom = axiom
    return v


def lagrangian_data(sys: PhSystem) -> tuple[Callable, Callable, Callable, Callable]:
    """Energy ``H(zeta, Gamma)`` and constraint ``d`` of the storage relation.

    For singular ``M`` the pseudo-inverse is used and ``W Gamma = 0`` with
    ``im W^T = ker M`` is appended to the constraints.
    """
    npot, nk, k = sys.n_pot, sys.n_kin, sys.k_pos
    M = np.asarray(sys.M)
    Mp = np.linalg.pinv(M)
    w, U = np.linalg.eigh(0.5 * (M + M.T))
    W = U[:, w <= 1e-12 * max(1.0, float(np.max(np.abs(w))))].T
    nw = W.shape[0]

    def H(z):
        zeta, gam = z[:npot], z[npot:]
        return 0.5 * gam @ Mp @ gam + float(sys.V_pot(zeta))

    def grad_H(z):
        zeta, gam = z[:npot], z[npot:]
        return np.concatenate([np.asarray(sys.grad_V(zeta), dtype=float), Mp @ gam])

    def d(z):
        zeta, gam = z[:npot], z[npot:]
        return np.concatenate([np.asarray(sys.c(zeta), dtype=float).reshape(k), W @ gam])

    def d_jac(z):
        zeta = z[:npot]
        out = np.zeros((k + nw, npot + nk))
        out[:k, :npot] = np.asarray(sys.c_jac(zeta), dtype=float).reshape(k, npot)
        out[k:, npot:] = W
        return out

    return H, grad_H, d, d_jac


def verify_system(
    sys: PhSystem,
    samples: Optional[SampleSet] = None,
    *,
    tol: float = 1e-9,
    fd_tol: float = 1e-4,
    mass_floor: float = 1e-12,
    lagrangian_points: int = 10,
    trivialization_points: int = 20,
) -> VerificationReport:
    """Run every structural check on ``sys`` over ``samples`` of ``(zeta, omega)``.

    Per-check exceptions are recorded as ``error`` verdicts instead of
    aborting. The mass-matrix definiteness check is informative only; it is
    needed for simulation, not for the port-Hamiltonian structure.
    """
    if samples is None:
        samples = system_samples(sys)
    npot, nk = sys.n_pot, sys.n_kin
    pts = [(np.asarray(x[:npot]), np.asarray(x[npot:])) for x in samples]
    M = np.asarray(sys.M)
    checks: list[Verdict] = []

    def mass_sym() -> Verdict:
        err = float(np.max(np.abs(M - M.T))) if M.size else 0.0
        return _verdict("", err, tol * (1.0 + float(np.max(np.abs(M)))), None if err == 0 else [])

    def mass_pd() -> Verdict:
        lo = float(np.min(np.linalg.eigvalsh(0.5 * (M + M.T)))) if M.size else math.inf
        return _verdict("", max(0.0, mass_floor - lo), 0.0, None if lo > mass_floor else [], min_eigenvalue=lo)

    def point_eval() -> Verdict:
        for zeta, omega in pts:
            eval_point(sys, zeta, omega)
        return _verdict("", 0.0, 0.0, None, samples=len(pts))

    def gyro() -> Verdict:
        worst, wit = 0.0, None
        for zeta, omega in pts:
            Gm = np.asarray(sys.G(M @ omega), dtype=float)
            e = float(np.max(np.abs(Gm + Gm.T))) / (1.0 + float(np.max(np.abs(Gm)))) if Gm.size else 0.0
            if e > worst:
                worst, wit = e, M @ omega
        return _verdict("", worst, tol, wit)

    def a_rank() -> Verdict:
        ranks = []
        for zeta, _ in pts:
            A = np.asarray(sys.A(zeta), dtype=float).reshape(sys.l_vel, nk)
            ranks.append(numerical_rank(A) if A.size else 0)
        values, counts = np.unique(ranks, return_counts=True)
        mode = int(values[np.argmax(counts)])
        bad = [i for i, r in enumerate(ranks) if r != mode]
        return _verdict("", float(len(bad)), 0.0, pts[bad[0]][0] if bad else None,
                        rank=mode, rank_counts={int(v): int(c) for v, c in zip(values, counts)})

    feasible = []

    def c_rank() -> Verdict:
        worst, wit = 0.0, None
        for zeta, _ in pts:
            z = project_positions(sys, zeta)
            sys.check_domain(z)
            feasible.append(z)
            Cj = np.asarray(sys.c_jac(z), dtype=float).reshape(sys.k_pos, npot)
            r = numerical_rank(Cj) if Cj.size else 0
            if r != sys.k_pos and wit is None:
                worst, wit = float(sys.k_pos - r), z
        return _verdict("", worst, 0.0, wit, k_pos=sys.k_pos)

    def grad_v() -> Verdict:
        worst, wit = 0.0, None
        for zeta, _ in pts:
            g = np.asarray(sys.grad_V(zeta), dtype=float)
            g_fd = fd_gradient(lambda z: float(sys.V_pot(z)), zeta)
            e = float(np.max(np.abs(g - g_fd))) / (1.0 + float(np.max(np.abs(g)))) if g.size else 0.0
            if e > worst:
                worst, wit = e, zeta
        return _verdict("", worst, fd_tol, wit if worst > fd_tol else None)

    def c_jac() -> Verdict:
        worst, wit = 0.0, None
        if sys.k_pos:
            for zeta, _ in pts:
                Cj = np.asarray(sys.c_jac(zeta), dtype=float).reshape(sys.k_pos, npot)
                C_fd = fd_jacobian(lambda z: np.asarray(sys.c(z), dtype=float), zeta)
                e = float(np.max(np.abs(Cj - C_fd))) / (1.0 + float(np.max(np.abs(Cj))))
                if e > worst:
                    worst, wit = e, zeta
        return _verdict("", worst, fd_tol, wit if worst > fd_tol else None)

    def resistive() -> Verdict:
        return check_resistive(sys.tau_d, pts)

    def rep_at(x: np.ndarray) -> ImageRep:
        return assemble_unconstrained_dirac(sys, x[:npot], x[npot:])

    def E_at(x: np.ndarray) -> np.ndarray:
        return velocity_constraint_effort_map(sys, x[:npot])

    zg = [np.concatenate([zeta, M @ omega]) for zeta, omega in pts]

    def dirac() -> Verdict:
        worst, wit = 0.0, None
        for x in zg:
            v = check_dirac_pointwise(rep_at(x), tol)
            if not v.passed or v.magnitude > worst:
                worst, wit = max(worst, v.magnitude), x
                if not v.passed:
                    return Verdict("", FAIL, v.magnitude, tol, list(map(float, x)), v.detail)
        return _verdict("", worst, tol, None)

    def dimconst() -> Verdict:
        return check_dim_constancy(rep_at, E_at, zg)

    def constrained() -> Verdict:
        worst = 0.0
        for x in zg:
            v = check_dirac_pointwise(assemble_constrained_dirac(rep_at(x), E_at(x)), tol)
            if not v.passed:
                return Verdict("", FAIL, v.magnitude, tol, list(map(float, x)), v.detail)
            worst = max(worst, v.magnitude)
        return _verdict("", worst, tol, None)

    def trivial() -> Verdict:
        return check_local_trivialization(rep_at, E_at, zg[:trivialization_points])

    def lagrangian() -> Verdict:
        H, gH, d, dj = lagrangian_data(sys)
        worst = 0.0
        base = feasible or [project_positions(sys, z) for z, _ in pts]
        for zeta, (_, omega) in list(zip(base, pts))[:lagrangian_points]:
            z1 = np.concatenate([zeta, M @ omega])
            v = check_lagrangian_local(H, gH, d, dj, z1)
            if not v.passed:
                return v
            worst = max(worst, v.magnitude)
        return _verdict("", worst, 1e-6, None)

    plan = [
        ("model_evaluation", point_eval, True),
        ("mass_matrix_symmetric", mass_sym, True),
        ("mass_matrix_positive_definite", mass_pd, False),
        ("gyroscopic_skew_symmetry", gyro, True),
        ("velocity_constraint_constant_rank", a_rank, True),
        ("position_constraint_full_rank", c_rank, True),
        ("potential_gradient_consistency", grad_v, True),
        ("constraint_jacobian_consistency", c_jac, True),
        ("resistive_passivity", resistive, True),
        ("dirac_pointwise", dirac, True),
        ("dirac_dimension_constancy", dimconst, True),
        ("constrained_dirac_pointwise", constrained, True),
        ("local_trivialization_proxy", trivial, True),
        ("lagrangian_submanifold", lagrangian, True),
    ]
    for name, fn, axiom in plan:
        checks.append(_guarded(name, fn, axiom))
    return VerificationReport(
        sys.name, checks, {"count": len(pts), "seed": samples.seed, "box": [list(b) for b in samples.box]}
    )


@dataclass(frozen=True)
class DiracFamily:
    """A state-modulated Dirac structure with an effort constraint ``E(x) e = 0``.

    Used for fixtures that are not full multibody systems.
    """

    name: str
    rep_fn: Callable[[np.ndarray], ImageRep]
    E_fn: Callable[[np.ndarray], np.ndarray]
    box: tuple[tuple[float, float], ...]
    anchors: tuple[tuple[float, ...], ...] = ()


def verify_family(family: DiracFamily, samples: Optional[SampleSet] = None, tol: float = 1e-9) -> VerificationReport:
    if samples is None:
        samples = SampleSet.draw(family.box, 200, 42, anchors=family.anchors)
    pts = list(samples)

    def dirac() -> Verdict:
        for x in pts:
            v = check_dirac_pointwise(family.rep_fn(x), tol)
            if not v.passed:
                return Verdict("", FAIL, v.magnitude, tol, list(map(float, np.atleast_1d(x))), v.detail)
        return _verdict("", 0.0, tol, None)

    def constrained() -> Verdict:
        for x in pts:
            v = check_dirac_pointwise(assemble_constrained_dirac(family.rep_fn(x), family.E_fn(x)), tol)
            if not v.passed:
                return Verdict("", FAIL, v.magnitude, tol, list(map(float, np.atleast_1d(x))), v.detail)
        return _verdict("", 0.0, tol, None)

    checks = [
        _guarded("dirac_pointwise", dirac),
        _guarded("dirac_dimension_constancy", lambda: check_dim_constancy(family.rep_fn, family.E_fn, pts)),
        _guarded("constrained_dirac_pointwise", constrained),
        _guarded("local_trivialization_proxy",
                 lambda: check_local_trivialization(family.rep_fn, family.E_fn, pts[:20])),
    ]
    return VerificationReport(
        family.name, checks, {"count": len(pts), "seed": samples.seed, "box": [list(b) for b in samples.box]}
    )
