"""Built-in example systems and the name registry used by the command line.

Planar bodies use body-fixed velocities ``(v_x', v_y', omega)`` at a
reference point offset from the center of mass, which makes the mass matrix
constant and produces gyroscopic forces. The gyroscope uses Z-Y-X Euler
angles ``(alpha, beta, gamma)`` with ``R = R_z(gamma) R_y(beta) R_x(alpha)``
and body angular velocities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np

from .core import PhSystem
from .errors import ParamError
from .interconnect import CouplingSpec, couple
from .structure import DiracFamily, ImageRep

GIMBAL_MARGIN = 1e-6

DEFAULTS: dict[str, dict[str, float]] = {
    "diff-drive": {"m": 1.0, "l": 0.1, "I_S": 0.05, "b": 0.5},
    "diff-drive-reduced": {"m": 1.0, "l": 0.1, "I_S": 0.05, "b": 0.5},
    "gyroscope": {"m": 1.0, "r": 0.1, "w": 0.02},
    "crank": {"l1": 0.2, "I_1A": 0.01},
    "rod-slider": {"l2": 0.5, "m2": 1.0, "r2": 0.25, "I_2B": 0.1},
    "slider-crank": {"l1": 0.2, "I_1A": 0.01, "l2": 0.5, "m2": 1.0, "r2": 0.25, "I_2B": 0.1},
    "cart": {"m": 1.0},
}


@dataclass(frozen=True)
class ModelParams:
    """Named numeric parameters, defaults filled in and validated."""

    name: str
    values: Mapping[str, float] = field(default_factory=dict)

    @classmethod
    def create(cls, name: str, overrides: Optional[Mapping[str, float]] = None) -> "ModelParams":
        base = dict(DEFAULTS.get(name, {}))
        for k, v in (overrides or {}).items():
            if k not in base:
                known = ", ".join(sorted(base)) or "none"
                raise ParamError(f"unknown parameter {k!r} for {name} (known: {known})")
            try:
                base[k] = float(v)
            except (TypeError, ValueError) as exc:
                raise ParamError(f"parameter {k} must be a number, got {v!r}") from exc
        for k, v in base.items():
            if not (v > 0 and math.isfinite(v)):
                raise ParamError(f"parameter {k} of {name} must be positive, got {v}")
        return cls(name, base)

    def __getitem__(self, key: str) -> float:
        return self.values[key]


def _params(name: str, params: Union[ModelParams, Mapping[str, float], None]) -> ModelParams:
    if isinstance(params, ModelParams):
        return ModelParams.create(name, params.values)
    return ModelParams.create(name, params)


def _rot(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def _planar_Z(zeta: np.ndarray) -> np.ndarray:
    Z = np.eye(3)
    Z[:2, :2] = _rot(zeta[2])
    return Z


def _planar_G(m: float, r: float, I_ref: float) -> Callable[[np.ndarray], np.ndarray]:
    """Gyroscopic matrix of a planar body whose reference point sits ``r`` behind the CoM.

    With ``Gamma = (p_x, p_y, L)`` the angular rate is ``(L - r p_y) / (I_ref - m r^2)``.
    """
    I_c = I_ref - m * r * r
    S = np.array([[0.0, 1.0, r], [-1.0, 0.0, 0.0], [-r, 0.0, 0.0]])

    def G(gamma: np.ndarray) -> np.ndarray:
        return -(m * (gamma[2] - r * gamma[1]) / I_c) * S

    return G


def _planar_mass(m: float, r: float, I_ref: float) -> np.ndarray:
    return np.array([[m, 0.0, 0.0], [0.0, m, m * r], [0.0, m * r, I_ref]])


# ---------------------------------------------------------------------------
# differential-drive robot


def diff_drive(params=None) -> PhSystem:
    """Two-wheeled robot with the no-side-slip constraint ``v_y = 0``.

    Ports are the left and right wheel channels; their flows are the wheel
    contact speeds ``v_x -+ (b/2) omega``.
    """
    p = _params("diff-drive", params)
    m, l, I_S, b = p["m"], p["l"], p["I_S"], p["b"]
    I_O = I_S + m * l * l
    A = np.array([[0.0, 1.0, 0.0]])
    B = np.array([[1.0, 1.0], [0.0, 0.0], [-b / 2, b / 2]])
    return PhSystem(
        n_pot=3,
        n_kin=3,
        M=_planar_mass(m, l, I_O),
        m_ports=2,
        l_vel=1,
        Z=_planar_Z,
        G=_planar_G(m, l, I_O),
        A=lambda _z: A,
        B=lambda _z: B,
        port_labels=("left_wheel", "right_wheel"),
        name="diff-drive",
        zeta_box=((-2.0, 2.0), (-2.0, 2.0), (-math.pi, math.pi)),
        omega_box=((-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)),
    )


def diff_drive_reduced(params=None) -> PhSystem:
    """The same robot with ``v_y = 0`` eliminated: velocities ``(v_x, omega)``."""
    p = _params("diff-drive-reduced", params)
    m, l, I_S, b = p["m"], p["l"], p["I_S"], p["b"]
    I_O = I_S + m * l * l
    B = np.array([[1.0, 1.0], [-b / 2, b / 2]])
    S = np.array([[0.0, 1.0], [-1.0, 0.0]])

    def Z(zeta):
        c, s = math.cos(zeta[2]), math.sin(zeta[2])
        return np.array([[c, 0.0], [s, 0.0], [0.0, 1.0]])

    def G(gamma):
        return -(m * l * gamma[1] / I_O) * S

    return PhSystem(
        n_pot=3,
        n_kin=2,
        M=np.diag([m, I_O]),
        m_ports=2,
        Z=Z,
        G=G,
        B=lambda _z: B,
        port_labels=("left_wheel", "right_wheel"),
        name="diff-drive-reduced",
        zeta_box=((-2.0, 2.0), (-2.0, 2.0), (-math.pi, math.pi)),
        omega_box=((-2.0, 2.0), (-2.0, 2.0)),
    )


# ---------------------------------------------------------------------------
# gyroscope


def euler_kinematics(zeta: np.ndarray) -> np.ndarray:
    """Map from body angular velocity to Z-Y-X Euler-angle rates."""
    a, bta = zeta[0], zeta[1]
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(bta), math.sin(bta)
    return np.array(
        [
            [cb, sa * sb, ca * sb],
            [0.0, ca * cb, -sa * cb],
            [0.0, sa, ca],
        ]
    ) / cb


def _cross(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def gyroscope(params=None) -> PhSystem:
    """Disc spinning about its body x' axis; one torque port about the gimbal axis."""
    p = _params("gyroscope", params)
    m, r, w = p["m"], p["r"], p["w"]
    M = (m / 12.0) * np.diag([6 * r * r, 3 * r * r + w * w, 3 * r * r + w * w])
    limit = math.pi / 2 - GIMBAL_MARGIN

    def guard(zeta):
        return bool(abs(zeta[1]) < limit)

    def reason(zeta):
        return f"beta={zeta[1]:.17g} within {GIMBAL_MARGIN:g} rad of +-pi/2 (gimbal lock)"

    return PhSystem(
        n_pot=3,
        n_kin=3,
        M=M,
        m_ports=1,
        Z=euler_kinematics,
        G=lambda gamma: -_cross(gamma),
        B=lambda z: np.array([[0.0], [math.cos(z[0])], [-math.sin(z[0])]]),
        domain_guard=guard,
        domain_reason=reason,
        port_labels=("gimbal_torque",),
        name="gyroscope",
        zeta_box=((-math.pi, math.pi), (-1.4, 1.4), (-math.pi, math.pi)),
        omega_box=((-20.0, 20.0),) * 3,
    )


def spin_axis(zeta: np.ndarray) -> np.ndarray:
    """World direction of the body x' axis."""
    b, g = zeta[1], zeta[2]
    return np.array([math.cos(g) * math.cos(b), math.sin(g) * math.cos(b), -math.sin(b)])


# ---------------------------------------------------------------------------
# slider-crank parts


def crank(params=None) -> PhSystem:
    """Crank pivoting at A; ports ``[C_x, C_y, torque at A]``."""
    p = _params("crank", params)
    l1 = p["l1"]

    def B(z):
        return np.array([[-l1 * math.sin(z[0]), l1 * math.cos(z[0]), 1.0]])

    return PhSystem(
        n_pot=1,
        n_kin=1,
        M=np.array([[p["I_1A"]]]),
        m_ports=3,
        B=B,
        port_labels=("C_x", "C_y", "drive_torque"),
        name="crank",
        zeta_box=((-math.pi, math.pi),),
        omega_box=((-10.0, 10.0),),
    )


def rod_slider(params=None) -> PhSystem:
    """Connecting rod with its slider at B, kept on the line ``y_B = 0``.

    Positions ``(x_B, y_B, phi_2)``; ports ``[C_x, C_y, slider force]`` where
    C is the rod end at distance ``l2`` from B.
    """
    p = _params("rod-slider", params)
    l2, m2, r2, I2 = p["l2"], p["m2"], p["r2"], p["I_2B"]
    if I2 <= m2 * r2 * r2:
        raise ParamError("I_2B must exceed m2 * r2^2 (inertia about B includes the CoM offset)")
    cj = np.array([[0.0, 1.0, 0.0]])

    def B(z):
        c, s = math.cos(z[2]), math.sin(z[2])
        return np.array([[c, s, c], [-s, c, -s], [-l2 * s, l2 * c, 0.0]])

    return PhSystem(
        n_pot=3,
        n_kin=3,
        M=_planar_mass(m2, r2, I2),
        m_ports=3,
        k_pos=1,
        Z=_planar_Z,
        G=_planar_G(m2, r2, I2),
        B=B,
        c=lambda z: np.array([z[1]]),
        c_jac=lambda _z: cj,
        port_labels=("C_x", "C_y", "slider_force"),
        name="rod-slider",
        zeta_box=((-1.0, 1.0), (-0.1, 0.1), (-math.pi, math.pi)),
        omega_box=((-5.0, 5.0),) * 3,
    )


SLIDER_CRANK_SPEC = CouplingSpec((0, 1), (0, 1))


def slider_crank(params=None) -> PhSystem:
    """Crank and rod-slider joined at C; external ports: drive torque and slider force."""
    p = _params("slider-crank", params)
    v = p.values
    sc = couple(
        crank({"l1": v["l1"], "I_1A": v["I_1A"]}),
        rod_slider({k: v[k] for k in ("l2", "m2", "r2", "I_2B")}),
        SLIDER_CRANK_SPEC,
        name="slider-crank",
    )
    return sc


def slider_crank_configuration(phi1: float, l1: float = 0.2, l2: float = 0.5) -> np.ndarray:
    """Loop-closed positions ``(phi1, x_B, y_B, phi2)`` with the slider at ``y_B = 0``."""
    s = l1 * math.sin(phi1) / l2
    if abs(s) >= 1:
        raise ParamError("rod too short to close the loop at this crank angle")
    phi2 = math.pi - math.asin(s)
    x_B = l1 * math.cos(phi1) - l2 * math.cos(phi2)
    return np.array([phi1, x_B, 0.0, phi2])


def loop_closure_error(zeta: np.ndarray, l1: float = 0.2, l2: float = 0.5) -> float:
    """``|l1 (cos phi1, sin phi1) - (r_B + l2 (cos phi2, sin phi2))|``."""
    phi1, xB, yB, phi2 = zeta
    d = np.array([l1 * math.cos(phi1) - xB - l2 * math.cos(phi2), l1 * math.sin(phi1) - yB - l2 * math.sin(phi2)])
    return float(np.linalg.norm(d))


def slider_crank_A(zeta: np.ndarray, l1: float = 0.2, l2: float = 0.5) -> np.ndarray:
    """Closed-form constraint matrix of the combined slider-crank."""
    phi1, _, _, phi2 = zeta
    c2, s2 = math.cos(phi2), math.sin(phi2)
    return np.array(
        [
            [-l1 * math.sin(phi1), -c2, s2, l2 * s2],
            [l1 * math.cos(phi1), -s2, -c2, -l2 * c2],
        ]
    )


# ---------------------------------------------------------------------------
# small fixtures


def cart(params=None) -> PhSystem:
    """Free point mass on a line with one force port."""
    p = _params("cart", params)
    return PhSystem(
        n_pot=1, n_kin=1, M=np.array([[p["m"]]]), m_ports=1,
        B=lambda _z: np.ones((1, 1)), port_labels=("force",), name="cart",
    )


def rank_drop_a(params=None) -> PhSystem:
    """Cart whose port matrix ``[zeta_1]`` vanishes at the origin."""
    return PhSystem(
        n_pot=1, n_kin=1, M=np.eye(1), m_ports=1,
        B=lambda z: np.array([[z[0]]]), port_labels=("force",), name="rank-drop-a",
    )


def rank_drop_b(params=None) -> PhSystem:
    """Cart with an identically zero port matrix."""
    return PhSystem(
        n_pot=1, n_kin=1, M=np.eye(1), m_ports=1,
        B=lambda _z: np.zeros((1, 1)), port_labels=("force",), name="rank-drop-b",
    )


def remark_counterexample() -> DiracFamily:
    """Constant Dirac structure on R^2 restricted by ``e_1 + x e_2 = 0``.

    The restricted space has dimension 1 for ``x != 0`` and 2 at ``x = 0``,
    so the restriction is not a modulated Dirac structure.
    """
    K = np.array([[1.0, 0.0], [0.0, 0.0]])
    L = np.array([[0.0, 0.0], [0.0, 1.0]])
    rep = ImageRep(K, L)
    return DiracFamily(
        "remark-a1-counterexample",
        lambda _x: rep,
        lambda x: np.array([[1.0, float(np.atleast_1d(x)[0])]]),
        ((-1.0, 1.0),),
        anchors=((0.0,),),
    )


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class ModelEntry:
    name: str
    build: Callable[..., Union[PhSystem, DiracFamily]]
    description: str
    simulable: bool = True


REGISTRY: dict[str, ModelEntry] = {
    e.name: e
    for e in (
        ModelEntry("diff-drive", diff_drive, "differential-drive robot, nonholonomic"),
        ModelEntry("diff-drive-reduced", diff_drive_reduced, "differential-drive robot, constraint eliminated"),
        ModelEntry("gyroscope", gyroscope, "spinning disc in Euler angles"),
        ModelEntry("crank", crank, "crank (slider-crank part 1)"),
        ModelEntry("rod-slider", rod_slider, "rod with slider (slider-crank part 2)"),
        ModelEntry("slider-crank", slider_crank, "coupled slider-crank mechanism"),
        ModelEntry("cart", cart, "free point mass on a line"),
        ModelEntry("rank-drop-a", rank_drop_a, "fixture: port matrix [zeta_1]"),
        ModelEntry("rank-drop-b", rank_drop_b, "fixture: zero port matrix"),
        ModelEntry("remark-a1-counterexample", lambda _p=None: remark_counterexample(),
                   "fixture: restriction that is not a modulated Dirac structure", simulable=False),
    )
}

# systems of the worked examples, checked as a group
EXAMPLE_MODELS = ("diff-drive", "diff-drive-reduced", "gyroscope", "crank", "rod-slider", "slider-crank")


def get_model(name: str, params: Optional[Mapping[str, float]] = None):
    if name not in REGISTRY:
        raise ParamError(f"unknown model {name!r}; available: {', '.join(sorted(REGISTRY))}")
    entry = REGISTRY[name]
    if name == "remark-a1-counterexample":
        if params:
            raise ParamError(f"{name} takes no parameters")
        return entry.build()
    if name.startswith("rank-drop") and params:
        raise ParamError(f"{name} takes no parameters")
    return entry.build(params)


@dataclass(frozen=True)
class InitialGuess:
    zeta: np.ndarray
    omega: np.ndarray
    keep: tuple[int, ...] = ()


def initial_guess(name: str, sys: PhSystem, fields: Mapping[str, list[float]],
                  params: Optional[Mapping[str, float]] = None) -> InitialGuess:
    """Initial guess from ``zeta=...``/``omega=...`` and model-specific shortcuts.

    Shortcuts: slider-crank ``phi1`` (loop-closed positions) and ``omega1``
    (crank rate, held fixed during projection); gyroscope ``spin``
    (``omega = (spin, 0, 0)``).
    """
    zeta = np.zeros(sys.n_pot)
    omega = np.zeros(sys.n_kin)
    keep: list[int] = []
    known = {"zeta", "omega"}
    if name == "slider-crank":
        known |= {"phi1", "omega1"}
        p = ModelParams.create(name, params)
        phi1 = fields.get("phi1", [0.0])
        zeta = slider_crank_configuration(_scalar(phi1, "phi1"), p["l1"], p["l2"])
        if "omega1" in fields:
            omega[0] = _scalar(fields["omega1"], "omega1")
            keep.append(0)
    if name == "gyroscope":
        known |= {"spin"}
        if "spin" in fields:
            omega[0] = _scalar(fields["spin"], "spin")
    unknown = set(fields) - known
    if unknown:
        raise ParamError(f"unknown initial-condition keys {sorted(unknown)} for {name} (known: {sorted(known)})")
    if "zeta" in fields:
        zeta = _vector(fields["zeta"], sys.n_pot, "zeta")
    if "omega" in fields:
        omega = _vector(fields["omega"], sys.n_kin, "omega")
        keep = []
    return InitialGuess(zeta, omega, tuple(keep))


def _scalar(v: list[float], key: str) -> float:
    if len(v) != 1:
        raise ParamError(f"{key} takes one number, got {len(v)}")
    return float(v[0])


def _vector(v: list[float], n: int, key: str) -> np.ndarray:
    if len(v) != n:
        raise ParamError(f"{key} needs {n} numbers, got {len(v)}")
    return np.array(v, dtype=float)
