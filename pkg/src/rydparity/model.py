"""Physical parameters, pulse envelopes, the three-stage schedule, stage
Hamiltonians on the full 36-dim space, and the Lindblad collapse operators.

Units: angular frequencies and decay rates in rad/us and 1/us, times in us,
distances in um.  A quantity quoted as "x MHz" in configuration means
Omega/2pi = x and is converted with the MHZ factor on load.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .opalg import (
    C0,
    C1,
    CR,
    FULL_LAYOUT,
    TA,
    TB,
    TE,
    TR,
    TARGET_LAYOUT,
    Operator,
    SpaceLayout,
    StateVector,
    embed,
    local_unit,
)

# rad/us per MHz of ordinary frequency.
MHZ = 2.0 * math.pi

# Cs defaults: 126S1/2 Rydberg lifetime 540 us (controls and target),
# 7P1/2 intermediate lifetime 165 ns.
TAU_RYDBERG_US = 540.0
TAU_INTERMEDIATE_US = 0.165


@dataclass(frozen=True)
class PhysicalParams:
    """All rates, frequencies and geometry of the three-atom system (rad/us, us, um).

    `delta_big` is the intermediate-state detuning, `delta_small` the
    Rydberg-leg detuning, `v` the control-target interaction shift.  The
    control-control shift at distance 2l is v/64 (vdW sixth-power law) and
    participates only when `v_cc_enabled`.
    """

    omega_e: float
    omega_c: float
    omega_r: float
    delta_big: float
    delta_small: float
    v: float
    gamma_r: float = 1.0 / TAU_RYDBERG_US
    gamma_R: float = 1.0 / TAU_RYDBERG_US
    gamma_e: float = 1.0 / TAU_INTERMEDIATE_US
    l: float = 9.3
    c6: float | None = None
    v_cc_enabled: bool = False

    def __post_init__(self):
        for name in ("omega_e", "omega_c", "omega_r", "gamma_r", "gamma_R", "gamma_e"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.l <= 0:
            raise ValueError(f"inter-atom spacing must be > 0, got {self.l}")

    @property
    def v_cc(self) -> float:
        """Control-control shift: distance 2l, sixth-power scaling."""
        return self.v / 64.0 if self.v_cc_enabled else 0.0

    @classmethod
    def protocol_default(
        cls,
        omega_e: float,
        *,
        coupling_ratio: float = 2.5,
        detuning_ratio: float = 10.0,
        control_ratio: float = 3.0,
        blockade_over_coupling: float = 2.5,
        gamma_r: float = 1.0 / TAU_RYDBERG_US,
        gamma_R: float = 1.0 / TAU_RYDBERG_US,
        gamma_e: float = 1.0 / TAU_INTERMEDIATE_US,
        l: float = 9.3,
        c6: float | None = None,
        v_cc_enabled: bool = False,
    ) -> "PhysicalParams":
        """Parameter set satisfying the protocol conditions.

        Enforces delta = V, Omega_r = 3*Omega_e (by default) and the
        dark-state condition Omega_c/Omega_e > 2.
        """
        if coupling_ratio <= 2.0:
            raise ValueError(
                f"protocol requires Omega_c/Omega_e > 2, got {coupling_ratio}"
            )
        omega_c = coupling_ratio * omega_e
        v = blockade_over_coupling * omega_c
        return cls(
            omega_e=omega_e,
            omega_c=omega_c,
            omega_r=control_ratio * omega_e,
            delta_big=detuning_ratio * omega_e,
            delta_small=v,
            v=v,
            gamma_r=gamma_r,
            gamma_R=gamma_R,
            gamma_e=gamma_e,
            l=l,
            c6=c6,
            v_cc_enabled=v_cc_enabled,
        )

    @classmethod
    def from_c6(cls, c6: float, l: float, **kwargs) -> "PhysicalParams":
        """Construct with the blockade shift derived from V = C6 / l^6."""
        v = c6 / l**6
        return cls(v=v, delta_small=kwargs.pop("delta_small", v), c6=c6, l=l, **kwargs)

    def replace(self, **changes) -> "PhysicalParams":
        return dataclasses.replace(self, **changes)

    def without_decay(self) -> "PhysicalParams":
        return self.replace(gamma_r=0.0, gamma_R=0.0, gamma_e=0.0)


@dataclass(frozen=True)
class ConstantPulse:
    amplitude: float
    duration: float

    def evaluate(self, t: float) -> float:
        return self.amplitude


@dataclass(frozen=True)
class RaisedCosinePulse:
    """Smooth envelope (peak/2)(1 - cos(2 pi t / duration)); zero at both ends."""

    peak: float
    duration: float

    def evaluate(self, t: float):
        return 0.5 * self.peak * (1.0 - np.cos(2.0 * math.pi * t / self.duration))


@dataclass(frozen=True)
class PulseSchedule:
    """Durations of the three protocol stages (us)."""

    t1: float
    t2: float
    t3: float

    @property
    def total(self) -> float:
        return self.t1 + self.t2 + self.t3

    @property
    def boundaries(self) -> tuple[float, float, float, float]:
        return (0.0, self.t1, self.t1 + self.t2, self.total)

    @classmethod
    def from_params(cls, params: PhysicalParams) -> "PulseSchedule":
        if params.omega_r <= 0 or params.omega_e <= 0:
            raise ValueError("schedule requires positive omega_r and omega_e")
        t_pi = math.pi / params.omega_r
        t_raman = 16.0 * math.pi * params.delta_big / (3.0 * params.omega_e**2)
        return cls(t1=t_pi, t2=t_raman, t3=t_pi)


def raman_envelope(params: PhysicalParams) -> RaisedCosinePulse:
    return RaisedCosinePulse(params.omega_e, PulseSchedule.from_params(params).t2)


@dataclass(frozen=True)
class DarkStateInfo:
    """Mixing ratio and the two dark states of the zero-shift Raman Hamiltonian."""

    y: float
    d1: StateVector
    d2: StateVector


# Local building blocks on the 4-level target. The coupling matrix carries
# the 1/2 so a stage-2 Hamiltonian is H_static + Omega_e(t) * H_couple.
def target_coupling_matrix() -> np.ndarray:
    m = local_unit(4, TA, TE) + local_unit(4, TB, TE)
    return 0.5 * (m + m.conj().T)


def target_static_matrix(params: PhysicalParams) -> np.ndarray:
    m = -params.delta_big * local_unit(4, TE, TE)
    leg = 0.5 * params.omega_c * local_unit(4, TE, TR)
    return m + leg + leg.conj().T


def control_drive_hamiltonian(params: PhysicalParams) -> Operator:
    """Simultaneous pi-pulse drive on the controls (stages 1 and 3).

    Control 1 couples |0> <-> |r>, control 2 couples |1> <-> |r>, both at
    Omega_r; the target is untouched.
    """
    half = 0.5 * params.omega_r
    h1 = half * local_unit(3, C0, CR)
    h2 = half * local_unit(3, C1, CR)
    h = embed(h1 + h1.conj().T, 0, FULL_LAYOUT) + embed(h2 + h2.conj().T, 1, FULL_LAYOUT)
    return h


def _raman_static(params: PhysicalParams) -> Operator:
    """Time-independent part of the unified stage-2 Hamiltonian."""
    rr1 = embed(local_unit(3, CR, CR), 0, FULL_LAYOUT)
    rr2 = embed(local_unit(3, CR, CR), 1, FULL_LAYOUT)
    big_r = embed(local_unit(4, TR, TR), 2, FULL_LAYOUT)
    h = embed(target_static_matrix(params), 2, FULL_LAYOUT)
    h = h + params.v * ((rr1 + rr2) @ big_r) + (-params.delta_small) * big_r
    if params.v_cc_enabled:
        h = h + params.v_cc * (rr1 @ rr2)
    return h


def raman_hamiltonian_parts(params: PhysicalParams):
    """(H_static, H_couple, envelope) with H(t) = H_static + envelope(t) * H_couple."""
    return (
        _raman_static(params),
        embed(target_coupling_matrix(), 2, FULL_LAYOUT),
        raman_envelope(params),
    )


def raman_hamiltonian(params: PhysicalParams, t: float) -> Operator:
    """Unified time-independent-frame stage-2 Hamiltonian at time t in [0, T2].

    The Rydberg-leg shift is (V * n_r - delta)|R><R| with n_r the control
    Rydberg number operator, which reproduces the zero-shift (n_r = 1,
    delta = V), -delta (n_r = 0) and 2V - delta (n_r = 2) sectors of the
    per-case rotating frames.
    """
    static, couple, envelope = raman_hamiltonian_parts(params)
    if not 0.0 <= t <= envelope.duration * (1 + 1e-12):
        raise ValueError(f"t = {t} outside stage 2 [0, {envelope.duration}]")
    return static + float(envelope.evaluate(t)) * couple


def rotating_frame_raman_hamiltonian(params: PhysicalParams, t: float) -> Operator:
    """Literal rotating-frame stage-2 Hamiltonian with the explicit e^{i delta t} phase.

    Same physics as `raman_hamiltonian` in a frame that leaves the Rydberg
    leg oscillating; used to test frame equivalence, not for production runs.
    """
    envelope = raman_envelope(params)
    rr1 = embed(local_unit(3, CR, CR), 0, FULL_LAYOUT)
    rr2 = embed(local_unit(3, CR, CR), 1, FULL_LAYOUT)
    big_r = embed(local_unit(4, TR, TR), 2, FULL_LAYOUT)

    local = -params.delta_big * local_unit(4, TE, TE)
    leg = 0.5 * params.omega_c * np.exp(1j * params.delta_small * t) * local_unit(4, TE, TR)
    local = local + leg + leg.conj().T
    h = embed(local, 2, FULL_LAYOUT) + params.v * ((rr1 + rr2) @ big_r)
    if params.v_cc_enabled:
        h = h + params.v_cc * (rr1 @ rr2)
    return h + float(envelope.evaluate(t)) * embed(target_coupling_matrix(), 2, FULL_LAYOUT)


def collapse_operators(params: PhysicalParams, layout: SpaceLayout = FULL_LAYOUT) -> list[Operator]:
    """The seven decay channels of the master equation, embedded on the full space.

    Four control decays sqrt(gamma_r/2)|i><r| (i = 0, 1 on each control),
    one target Rydberg decay sqrt(gamma_R)|e><R|, and two intermediate
    decays sqrt(gamma_e/2)|j><e| (j = A, B).
    """
    ops = []
    control_sites = [k for k, d in enumerate(layout.local_dims) if d == 3]
    target_site = layout.n_sites - 1
    if layout.local_dims[target_site] != 4:
        raise ValueError("layout must end with the 4-level target site")
    amp_r = math.sqrt(params.gamma_r / 2.0)
    for site in control_sites:
        for i in (C0, C1):
            ops.append(embed(amp_r * local_unit(3, i, CR), site, layout))
    ops.append(embed(math.sqrt(params.gamma_R) * local_unit(4, TE, TR), target_site, layout))
    amp_e = math.sqrt(params.gamma_e / 2.0)
    for j in (TA, TB):
        ops.append(embed(amp_e * local_unit(4, j, TE), target_site, layout))
    return ops


def dark_states(params: PhysicalParams, t: float) -> DarkStateInfo:
    """Mixing ratio y = sqrt(2) Omega_e(t) / Omega_c and the two dark states.

    D1 = (|A> - |B>)/sqrt(2) never couples; D2 interpolates between
    (|A> + |B>)/sqrt(2) and |R> as the envelope opens.  Both are
    zero-energy eigenstates of the zero-shift stage-2 Hamiltonian.
    """
    if params.omega_c == 0:
        raise ValueError("mixing ratio undefined for omega_c = 0")
    envelope = raman_envelope(params)
    if not 0.0 <= t <= envelope.duration * (1 + 1e-12):
        raise ValueError(f"t = {t} outside stage 2 [0, {envelope.duration}]")
    y = math.sqrt(2.0) * float(envelope.evaluate(t)) / params.omega_c
    d1 = np.zeros(4, dtype=complex)
    d1[TA] = 1.0 / math.sqrt(2.0)
    d1[TB] = -1.0 / math.sqrt(2.0)
    d2 = np.zeros(4, dtype=complex)
    d2[TA] = 1.0 / math.sqrt(2.0)
    d2[TB] = 1.0 / math.sqrt(2.0)
    d2[TR] = -y
    d2 = d2 / math.sqrt(1.0 + y * y)
    return DarkStateInfo(
        y=y,
        d1=StateVector(TARGET_LAYOUT, d1),
        d2=StateVector(TARGET_LAYOUT, d2),
    )


COMPUTATIONAL_LABELS = ("00A", "00B", "01A", "01B", "10A", "10B", "11A", "11B")
CONTROL_LEVEL_CHARS = "01r"
TARGET_LEVEL_CHARS = "ABeR"


def label_levels(label: str, layout: SpaceLayout = FULL_LAYOUT) -> tuple[int, ...]:
    """Per-site level indices of a label such as '10A' or 'r0e'."""
    names = [CONTROL_LEVEL_CHARS] * (layout.n_sites - 1) + [TARGET_LEVEL_CHARS]
    if len(label) != layout.n_sites:
        raise ValueError(f"label {label!r} must have {layout.n_sites} characters")
    levels = []
    for ch, table in zip(label, names):
        if ch not in table:
            raise ValueError(f"invalid level {ch!r} in label {label!r}")
        levels.append(table.index(ch))
    return tuple(levels)


def label_index(label: str, layout: SpaceLayout = FULL_LAYOUT) -> int:
    return layout.index_of(label_levels(label, layout))


def computational_state(label: str, layout: SpaceLayout = FULL_LAYOUT) -> StateVector:
    """Basis state for a computational label such as '10A' (controls + target)."""
    return StateVector.basis(layout, label_levels(label, layout))


def level_label(index: int, layout: SpaceLayout = FULL_LAYOUT) -> str:
    """Human-readable label of a flat basis index, e.g. 24 -> 'r0A'."""
    levels = layout.levels_of(index)
    chars = []
    for k, lev in enumerate(levels):
        table = TARGET_LEVEL_CHARS if k == layout.n_sites - 1 else CONTROL_LEVEL_CHARS
        chars.append(table[lev])
    return "".join(chars)
