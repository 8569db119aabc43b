"""Power-preserving coupling of two systems through pairs of ports.

Coupled ports are identified by equal flows, ``B_c1^T omega_1 = B_c2^T omega_2``,
and opposite efforts. The flow equality becomes extra velocity-constraint
rows of the combined system, and the coupling effort is the multiplier of
those rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import block_diag

from .core import Multipliers, PhSystem, State
from .errors import PortError, ShapeError
from .linalg import numerical_rank
from .structure import FAIL, PASS, SampleSet, Verdict


@dataclass(frozen=True)
class CouplingSpec:
    """Port columns of system 1 and system 2 that are joined, channel by channel."""

    ports_1: tuple[int, ...]
    ports_2: tuple[int, ...]

    def __post_init__(self) -> None:
        p1 = tuple(int(i) for i in self.ports_1)
        p2 = tuple(int(i) for i in self.ports_2)
        if len(p1) != len(p2):
            raise PortError(f"{len(p1)} ports of system 1 paired with {len(p2)} ports of system 2")
        for p in (p1, p2):
            if len(set(p)) != len(p):
                raise PortError(f"port indices {p} repeat")
            if any(i < 0 for i in p):
                raise PortError(f"negative port index in {p}")
        object.__setattr__(self, "ports_1", p1)
        object.__setattr__(self, "ports_2", p2)

    @property
    def m_c(self) -> int:
        return len(self.ports_1)

    @classmethod
    def parse(cls, text: str) -> "CouplingSpec":
        """Parse ``"0,1:0,1"`` (ports of system 1, colon, ports of system 2)."""
        try:
            left, right = text.split(":")
            p1 = [int(s) for s in left.split(",") if s.strip()]
            p2 = [int(s) for s in right.split(",") if s.strip()]
        except ValueError as exc:
            raise PortError(f"cannot parse pairing {text!r}; expected e.g. '0,1:0,1'") from exc
        return cls(tuple(p1), tuple(p2))


@dataclass(frozen=True)
class CouplingInfo:
    """Index bookkeeping of a combined system (stored on ``PhSystem.coupling``)."""

    spec: CouplingSpec
    n_pot_1: int
    n_kin_1: int
    l_vel_1: int
    l_vel_2: int
    ext_1: tuple[int, ...]
    ext_2: tuple[int, ...]
    rank: int
    B_c1: object
    B_c2: object

    @property
    def coupling_rows(self) -> slice:
        start = self.l_vel_1 + self.l_vel_2
        return slice(start, start + self.spec.m_c)

    def coupling_effort(self, mu: np.ndarray) -> np.ndarray:
        """Effort ``tau_c1 = -tau_c2`` carried by the coupled ports."""
        return np.asarray(mu, dtype=float)[self.coupling_rows]

    def coupled_flows(self, zeta: np.ndarray, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z1, z2 = zeta[: self.n_pot_1], zeta[self.n_pot_1 :]
        w1, w2 = omega[: self.n_kin_1], omega[self.n_kin_1 :]
        return self.B_c1(z1).T @ w1, self.B_c2(z2).T @ w2


def _columns(sys: PhSystem, idx: Sequence[int]):
    idx = np.array(idx, dtype=int)
    shape = (sys.n_kin, sys.m_ports)

    def f(z: np.ndarray) -> np.ndarray:
        return np.asarray(sys.B(z), dtype=float).reshape(shape)[:, idx]

    return f


def _sample_zeta(sys: PhSystem, count: int, seed: int) -> SampleSet:
    box = tuple(sys.zeta_box)
    center = [0.5 * (lo + hi) for lo, hi in box]
    return SampleSet.draw(box, count, seed, guard=sys.domain_guard, anchors=[center])


def couple(sys1: PhSystem, sys2: PhSystem, spec: CouplingSpec, name: Optional[str] = None) -> PhSystem:
    """Combined system with the paired ports turned into velocity constraints.

    ``A = [A1 0; 0 A2; B_c1^T -B_c2^T]`` and ``B = diag(B_ext1, B_ext2)``;
    all other data are stacked block-diagonally.
    """
    for i in spec.ports_1:
        if i >= sys1.m_ports:
            raise PortError(f"port {i} out of range for {sys1.name} ({sys1.m_ports} ports)")
    for i in spec.ports_2:
        if i >= sys2.m_ports:
            raise PortError(f"port {i} out of range for {sys2.name} ({sys2.m_ports} ports)")
    np1, nk1, np2, nk2 = sys1.n_pot, sys1.n_kin, sys2.n_pot, sys2.n_kin
    ext1 = tuple(i for i in range(sys1.m_ports) if i not in spec.ports_1)
    ext2 = tuple(i for i in range(sys2.m_ports) if i not in spec.ports_2)
    Bc1, Bc2 = _columns(sys1, spec.ports_1), _columns(sys2, spec.ports_2)
    Be1, Be2 = _columns(sys1, ext1), _columns(sys2, ext2)
    M1 = np.asarray(sys1.M)
    m_c = spec.m_c
    l1, l2 = sys1.l_vel, sys2.l_vel

    def split(z):
        z = np.asarray(z, dtype=float)
        return z[:np1], z[np1:]

    def splitw(w):
        w = np.asarray(w, dtype=float)
        return w[:nk1], w[nk1:]

    def Z(z):
        a, b = split(z)
        out = np.zeros((np1 + np2, nk1 + nk2))
        out[:np1, :nk1] = np.asarray(sys1.Z(a)).reshape(np1, nk1)
        out[np1:, nk1:] = np.asarray(sys2.Z(b)).reshape(np2, nk2)
        return out

    def G(g):
        a, b = splitw(g)
        out = np.zeros((nk1 + nk2, nk1 + nk2))
        out[:nk1, :nk1] = np.asarray(sys1.G(a)).reshape(nk1, nk1)
        out[nk1:, nk1:] = np.asarray(sys2.G(b)).reshape(nk2, nk2)
        return out

    def A(z):
        a, b = split(z)
        out = np.zeros((l1 + l2 + m_c, nk1 + nk2))
        out[:l1, :nk1] = np.asarray(sys1.A(a)).reshape(l1, nk1)
        out[l1 : l1 + l2, nk1:] = np.asarray(sys2.A(b)).reshape(l2, nk2)
        out[l1 + l2 :, :nk1] = Bc1(a).T
        out[l1 + l2 :, nk1:] = -Bc2(b).T
        return out

    m1 = len(ext1)

    def B(z):
        a, b = split(z)
        out = np.zeros((nk1 + nk2, m1 + len(ext2)))
        out[:nk1, :m1] = Be1(a)
        out[nk1:, m1:] = Be2(b)
        return out

    def c(z):
        a, b = split(z)
        return np.concatenate([np.asarray(sys1.c(a), dtype=float).reshape(-1),
                               np.asarray(sys2.c(b), dtype=float).reshape(-1)])

    def c_jac(z):
        a, b = split(z)
        out = np.zeros((sys1.k_pos + sys2.k_pos, np1 + np2))
        out[: sys1.k_pos, :np1] = np.asarray(sys1.c_jac(a)).reshape(sys1.k_pos, np1)
        out[sys1.k_pos :, np1:] = np.asarray(sys2.c_jac(b)).reshape(sys2.k_pos, np2)
        return out

    def V(z):
        a, b = split(z)
        return float(sys1.V_pot(a)) + float(sys2.V_pot(b))

    def grad_V(z):
        a, b = split(z)
        return np.concatenate([np.asarray(sys1.grad_V(a), dtype=float), np.asarray(sys2.grad_V(b), dtype=float)])

    def tau_d(z, w):
        a, b = split(z)
        wa, wb = splitw(w)
        return np.concatenate([np.asarray(sys1.tau_d(a, wa), dtype=float),
                               np.asarray(sys2.tau_d(b, wb), dtype=float)])

    def guard(z):
        a, b = split(z)
        return bool(sys1.domain_guard(a)) and bool(sys2.domain_guard(b))

    def reason(z):
        a, b = split(z)
        if not sys1.domain_guard(a):
            return sys1.domain_reason(a) if sys1.domain_reason else f"outside the admissible set of {sys1.name}"
        return sys2.domain_reason(b) if sys2.domain_reason else f"outside the admissible set of {sys2.name}"

    labels = tuple(f"{sys1.name}.{sys1.port_labels[i]}" for i in ext1) + tuple(
        f"{sys2.name}.{sys2.port_labels[i]}" for i in ext2
    )
    combined = PhSystem(
        n_pot=np1 + np2,
        n_kin=nk1 + nk2,
        M=block_diag(M1, np.asarray(sys2.M)),
        m_ports=len(ext1) + len(ext2),
        k_pos=sys1.k_pos + sys2.k_pos,
        l_vel=l1 + l2 + m_c,
        Z=Z,
        G=G,
        A=A,
        B=B,
        c=c,
        c_jac=c_jac,
        V_pot=V,
        grad_V=grad_V,
        tau_d=tau_d,
        domain_guard=guard,
        domain_reason=reason,
        port_labels=labels,
        name=name or f"{sys1.name}+{sys2.name}",
        zeta_box=tuple(sys1.zeta_box) + tuple(sys2.zeta_box),
        omega_box=tuple(sys1.omega_box) + tuple(sys2.omega_box),
    )
    ranks = [numerical_rank(A(z)) if combined.l_vel else 0 for z in _sample_zeta(combined, 50, 7)]
    values, counts = np.unique(ranks, return_counts=True)
    info = CouplingInfo(spec, np1, nk1, l1, l2, ext1, ext2, int(values[np.argmax(counts)]), Bc1, Bc2)
    object.__setattr__(combined, "coupling", info)
    return combined


def check_interconnection_rank(
    sys1: PhSystem,
    sys2: PhSystem,
    spec: CouplingSpec,
    samples: Optional[SampleSet] = None,
    count: int = 200,
    seed: int = 42,
) -> Verdict:
    """Is the rank of the combined constraint matrix constant over the samples?

    Samples are positions of the combined system; the box center is always
    included so that rank drops at symmetric configurations are seen.
    """
    combined = couple(sys1, sys2, spec)
    if samples is None:
        samples = _sample_zeta(combined, count, seed)
    ranks = []
    for z in samples:
        A = np.asarray(combined.A(z), dtype=float).reshape(combined.l_vel, combined.n_kin)
        ranks.append(numerical_rank(A) if A.size else 0)
    values, counts = np.unique(ranks, return_counts=True)
    mode = int(values[np.argmax(counts)])
    bad = [i for i, r in enumerate(ranks) if r != mode]
    hist = {int(v): int(c) for v, c in zip(values, counts)}
    if not bad:
        return Verdict("interconnection_rank", PASS, 0.0, 0.0, None, {"rank": mode, "samples": len(ranks)})
    i = bad[0]
    return Verdict(
        "interconnection_rank",
        FAIL,
        float(abs(ranks[i] - mode)),
        0.0,
        [float(v) for v in samples.points[i]],
        {"rank": mode, "witness_rank": ranks[i], "rank_counts": hist, "samples": len(ranks)},
    )


def coupling_power_residual(sys: PhSystem, state: State, mult: Multipliers) -> float:
    """Net power through the coupled ports, ``(omega_c1 - omega_c2)^T tau_c``.

    Zero whenever the coupling rows of ``A omega = 0`` hold.
    """
    info = sys.coupling
    if not isinstance(info, CouplingInfo):
        raise ShapeError(f"{sys.name} was not built by couple()")
    mu = np.asarray(mult.mu, dtype=float)
    if mu.shape != (sys.l_vel,):
        raise ShapeError(f"mu has shape {mu.shape}, expected {(sys.l_vel,)}")
    if info.spec.m_c == 0:
        return 0.0
    f1, f2 = info.coupled_flows(np.asarray(state.zeta, float), np.asarray(state.omega, float))
    return float((f1 - f2) @ info.coupling_effort(mu))


def coupling_power_residuals(sys: PhSystem, traj) -> np.ndarray:
    """:func:`coupling_power_residual` at every row of a trajectory."""
    return np.array([coupling_power_residual(sys, traj.state(k), traj.multipliers(k)) for k in range(len(traj))])
