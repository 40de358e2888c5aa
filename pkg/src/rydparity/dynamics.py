"""Time propagation (unitary and dissipative), the three-stage protocol
runner, and extraction of the realized gate as a quantum channel on the
computational subspace.

Integration is fixed-step RK4 with the step bounded by
(1/steps_per_period) * (2 pi / omega_max), omega_max the largest frequency
scale of the parameter set.  A piecewise-constant matrix-exponential
propagator (midpoint-sampled) serves as an independent oracle.

Vectorization convention: column stacking, vec(X)[i + d*j] = X[i, j], so
vec(A X B) = kron(B^T, A) vec(X).  The channel matrix maps vec(rho_in) to
vec(rho_out) in this convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import model
from .errors import IntegrationError
from .model import PhysicalParams, PulseSchedule
from .opalg import (
    DensityOperator,
    FULL_LAYOUT,
    Operator,
    SpaceLayout,
    StateVector,
    hermiticity_defect,
)


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(matrix, dtype=complex).flatten(order="F")


def unvec(vector: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(vector, dtype=complex)
    if dim is None:
        dim = round(math.isqrt(v.size))
    return v.reshape((dim, dim), order="F")


@dataclass(frozen=True)
class StepPolicy:
    """Fixed-step RK4 sizing: at least steps_per_period steps per 2pi/omega_max."""

    steps_per_period: int = 50
    min_steps: int = 32

    def stage_steps(self, duration: float, omega_max: float) -> int:
        if duration <= 0:
            return 0
        if omega_max <= 0:
            return self.min_steps
        needed = duration * omega_max * self.steps_per_period / (2.0 * math.pi)
        return max(self.min_steps, int(math.ceil(needed)))


def dominant_frequency(params: PhysicalParams) -> float:
    """Largest frequency scale present in any protocol stage."""
    return max(
        abs(params.delta_big),
        params.omega_c,
        params.omega_r,
        params.omega_e,
        abs(params.v),
        abs(params.delta_small),
        abs(2.0 * params.v - params.delta_small),
        abs(params.v_cc),
    )


@dataclass(frozen=True)
class Stage:
    """One protocol stage: H(t) = static + envelope(t) * couple for t in [0, duration]."""

    name: str
    duration: float
    static: np.ndarray
    couple: np.ndarray | None = None
    envelope: Callable[[float], float] | None = None

    def h_at(self, t: float) -> np.ndarray:
        if self.couple is None:
            return self.static
        return self.static + float(self.envelope(t)) * self.couple


def protocol_stages(params: PhysicalParams) -> tuple[Stage, Stage, Stage]:
    """The pi-pulse / shaped-Raman / pi-pulse sequence on the 36-dim space."""
    schedule = PulseSchedule.from_params(params)
    h_ctl = model.control_drive_hamiltonian(params).entries
    static, couple, envelope = model.raman_hamiltonian_parts(params)
    return (
        Stage("pi-pulse-1", schedule.t1, h_ctl),
        Stage("raman", schedule.t2, static.entries, couple.entries, envelope.evaluate),
        Stage("pi-pulse-2", schedule.t3, h_ctl),
    )


# ---------------------------------------------------------------------------
# RK4 kernels
# ---------------------------------------------------------------------------


def _check_finite(arr: np.ndarray, context: str):
    if not np.all(np.isfinite(arr)):
        raise IntegrationError(f"non-finite values encountered during {context}")


def _rk4_schrodinger(h_at, state: np.ndarray, duration: float, steps: int) -> np.ndarray:
    """RK4 for d(psi)/dt = -i H(t) psi; `state` may be a vector or a matrix of columns."""
    if steps <= 0:
        return state
    dt = duration / steps
    psi = np.array(state, dtype=complex)
    sixth = dt / 6.0
    for n in range(steps):
        t = n * dt
        h_a = h_at(t)
        h_b = h_at(t + 0.5 * dt)
        h_c = h_at(t + dt)
        k1 = -1j * (h_a @ psi)
        k2 = -1j * (h_b @ (psi + (0.5 * dt) * k1))
        k3 = -1j * (h_b @ (psi + (0.5 * dt) * k2))
        k4 = -1j * (h_c @ (psi + dt * k3))
        psi += sixth * (k1 + 2.0 * (k2 + k3) + k4)
    return psi


class _JumpAction:
    """Fast application of sum_k L_k rho L_k^dagger for sparse collapse operators.

    Each operator is stored as its nonzero triplets; the quadratic action is
    a gather / scatter-add on index grids.  Falls back to dense products for
    operators with repeated rows (none of the model's channels need it).
    """

    def __init__(self, collapse: Sequence[np.ndarray], dim: int):
        self.dim = dim
        self.gather = []
        self.dense = []
        m_total = np.zeros((dim, dim), dtype=complex)
        for l_op in collapse:
            l_op = np.asarray(l_op, dtype=complex)
            m_total += 0.5 * (l_op.conj().T @ l_op)
            rows, cols = np.nonzero(l_op)
            if rows.size == 0:
                continue
            vals = l_op[rows, cols]
            if np.unique(rows).size == rows.size:
                coeff = vals[:, None] * vals.conj()[None, :]
                self.gather.append((rows, cols, coeff))
            else:
                self.dense.append(l_op)
        self.m_half = m_total

    def apply(self, rho: np.ndarray, out: np.ndarray):
        """Accumulate sum_k L_k rho L_k^dagger into `out` (leading batch dims allowed)."""
        for rows, cols, coeff in self.gather:
            sub = rho[..., cols[:, None], cols[None, :]]
            out[..., rows[:, None], rows[None, :]] += coeff * sub
        for l_op in self.dense:
            out += l_op @ rho @ l_op.conj().T


def _rk4_lindblad(
    h_at,
    jumps: _JumpAction,
    rho: np.ndarray,
    duration: float,
    steps: int,
    hermitize: bool = False,
) -> tuple[np.ndarray, float]:
    """RK4 for the Lindblad equation; rho may carry leading batch dimensions.

    Works with preallocated buffers: the commutator and anticommutator are
    obtained from two products with the precombined drift -i H(t) - M, the
    quadratic jump terms from index gathers.  Returns (rho_final,
    max_hermiticity_defect_seen); the defect is measured before each
    symmetrization and is 0.0 when hermitize is off.
    """
    if steps <= 0:
        return np.array(rho, dtype=complex), 0.0
    dt = duration / steps
    rho = np.array(rho, dtype=complex)
    dim = rho.shape[-1]
    m_half = jumps.m_half

    k = np.empty_like(rho)
    right = np.empty_like(rho)
    y = np.empty_like(rho)
    acc = np.empty_like(rho)

    def rhs_into(drift, drift_dag, x, out):
        np.matmul(drift, x, out=out)
        np.matmul(x.reshape(-1, dim), drift_dag, out=right.reshape(-1, dim))
        out += right
        jumps.apply(x, out)

    max_defect = 0.0
    for n in range(steps):
        t = n * dt
        d_a = -1j * h_at(t) - m_half
        d_b = -1j * h_at(t + 0.5 * dt) - m_half
        d_c = -1j * h_at(t + dt) - m_half

        rhs_into(d_a, d_a.conj().T, rho, k)         # k1
        np.copyto(acc, k)
        np.multiply(k, 0.5 * dt, out=y)
        y += rho
        rhs_into(d_b, d_b.conj().T, y, k)           # k2
        k *= 2.0
        acc += k
        np.multiply(k, 0.25 * dt, out=y)            # (dt/2) * k2
        y += rho
        rhs_into(d_b, d_b.conj().T, y, k)           # k3
        k *= 2.0
        acc += k
        np.multiply(k, 0.5 * dt, out=y)             # dt * k3
        y += rho
        rhs_into(d_c, d_c.conj().T, y, k)           # k4
        acc += k
        acc *= dt / 6.0
        rho += acc

        if hermitize:
            adjoint = rho.conj().swapaxes(-1, -2)
            defect = float(np.max(np.abs(rho - adjoint)))
            max_defect = max(max_defect, defect)
            rho = 0.5 * (rho + adjoint)
    return rho, max_defect


def propagate_state(
    h_at,
    psi0: StateVector,
    duration: float,
    steps: int,
    norm_tol: float = 1e-8,
) -> StateVector:
    """Closed-system propagation of a normalized state vector."""
    if abs(psi0.norm() - 1.0) > 1e-10:
        raise ValueError(f"initial state norm {psi0.norm()} is not 1")
    amps = _rk4_schrodinger(h_at, psi0.amplitudes, duration, steps)
    _check_finite(amps, "state propagation")
    norm = float(np.linalg.norm(amps))
    if abs(norm - 1.0) > norm_tol:
        raise IntegrationError(
            f"norm drifted to {norm} (tolerance {norm_tol}); reduce the step size"
        )
    return StateVector(psi0.layout, amps)


def propagate_density(
    h_at,
    collapse: Sequence,
    rho0: DensityOperator,
    duration: float,
    steps: int,
    trace_tol: float = 1e-8,
    positivity_tol: float = 1e-6,
) -> DensityOperator:
    """Lindblad propagation of a physical density matrix.

    Hermiticity is enforced by symmetrization each step; trace and
    positivity are checked at the end of the interval.
    """
    rho0.check_physical()
    mats = [c.entries if isinstance(c, Operator) else np.asarray(c) for c in collapse]
    jumps = _JumpAction(mats, rho0.layout.total_dim)
    out, _defect = _rk4_lindblad(
        h_at, jumps, rho0.entries, duration, steps, hermitize=True
    )
    _check_finite(out, "density propagation")
    trace0 = rho0.trace()
    drift = abs(float(np.trace(out).real) - trace0)
    if drift > trace_tol:
        raise IntegrationError(f"trace drifted by {drift:.3e} (tolerance {trace_tol})")
    min_eig = float(np.linalg.eigvalsh(out)[0])
    if min_eig < -positivity_tol:
        raise IntegrationError(
            f"positivity violated: min eigenvalue {min_eig:.3e}; step too large"
        )
    return DensityOperator(rho0.layout, out)


# ---------------------------------------------------------------------------
# Protocol runner
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Propagation:
    """Sampled trajectory of a protocol run; stage boundaries are exact grid points."""

    times: np.ndarray
    states: tuple
    step_sizes: tuple[float, ...]
    stage_boundaries: tuple[float, ...]


@dataclass(frozen=True)
class ProtocolResult:
    final_state: object
    propagation: Propagation
    populations: np.ndarray
    computational_populations: np.ndarray
    leakage: float

    def population_of(self, label: str) -> float:
        layout = self.final_state.layout
        return float(self.populations[model.label_index(label, layout)])


def _as_input_state(input_state, layout: SpaceLayout, dissipative: bool):
    if isinstance(input_state, str):
        input_state = model.computational_state(input_state, layout)
    if dissipative:
        if isinstance(input_state, StateVector):
            return DensityOperator.from_state(input_state)
        if isinstance(input_state, DensityOperator):
            return input_state
        raise TypeError("input must be a label, StateVector or DensityOperator")
    if isinstance(input_state, StateVector):
        return input_state
    raise TypeError("closed-system runs need a label or StateVector input")


def run_protocol(
    params: PhysicalParams,
    input_state,
    dissipative: bool = True,
    policy: StepPolicy = StepPolicy(),
    samples_per_stage: int = 20,
) -> ProtocolResult:
    """Run pi-pulse / Raman / pi-pulse from a computational input.

    `input_state` is a label such as '10A', a StateVector, or (dissipative
    only) a DensityOperator.  Decay channels stay active in every stage.
    """
    layout = FULL_LAYOUT
    stages = protocol_stages(params)
    omega_max = dominant_frequency(params)
    state = _as_input_state(input_state, layout, dissipative)

    mats = [op.entries for op in model.collapse_operators(params)] if dissipative else []
    jumps = _JumpAction(mats, layout.total_dim) if dissipative else None

    times = [0.0]
    snaps = [state]
    step_sizes = []
    raw = state.entries if dissipative else state.amplitudes
    t_offset = 0.0
    for stage in stages:
        steps = policy.stage_steps(stage.duration, omega_max)
        dt = stage.duration / steps
        step_sizes.append(dt)
        chunk_edges = np.unique(
            np.clip(np.round(np.linspace(0, steps, samples_per_stage + 1)), 0, steps)
        ).astype(int)
        done = 0
        for edge in chunk_edges[1:]:
            n_sub = int(edge - done)
            t_local = done * dt
            h_shifted = (lambda t, s=stage, t0=t_local: s.h_at(t0 + t))
            if dissipative:
                raw, _ = _rk4_lindblad(h_shifted, jumps, raw, n_sub * dt, n_sub, hermitize=True)
            else:
                raw = _rk4_schrodinger(h_shifted, raw, n_sub * dt, n_sub)
            done = int(edge)
            times.append(t_offset + done * dt)
            snaps.append(
                DensityOperator(layout, raw) if dissipative else StateVector(layout, raw)
            )
        _check_finite(raw, f"stage {stage.name}")
        t_offset += stage.duration

    final = snaps[-1]
    if dissipative:
        drift = abs(final.trace() - 1.0)
        if drift > 1e-8:
            raise IntegrationError(f"protocol trace drifted by {drift:.3e}")
        pops = final.populations()
    else:
        norm = final.norm()
        if abs(norm - 1.0) > 1e-8:
            raise IntegrationError(f"protocol norm drifted to {norm}")
        pops = final.populations()

    comp_idx = layout.computational_indices()
    comp_pops = pops[comp_idx].copy()
    total_mass = final.trace() if dissipative else final.norm() ** 2
    schedule = PulseSchedule.from_params(params)
    propagation = Propagation(
        times=np.asarray(times),
        states=tuple(snaps),
        step_sizes=tuple(step_sizes),
        stage_boundaries=schedule.boundaries,
    )
    return ProtocolResult(
        final_state=final,
        propagation=propagation,
        populations=pops,
        computational_populations=comp_pops,
        leakage=float(total_mass - comp_pops.sum()),
    )


# ---------------------------------------------------------------------------
# Quantum channel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantumChannel:
    """Linear map on the computational subspace, column-stacking superoperator.

    Leakage to non-computational levels shows up as a per-input trace
    deficit; the map is deliberately not re-normalized.
    """

    dim: int
    matrix: np.ndarray
    leakage: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.dim**2, self.dim**2):
            raise ValueError(f"superoperator shape {m.shape} != dim^2 {self.dim**2}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        lk = np.array(self.leakage, dtype=float)
        lk.setflags(write=False)
        object.__setattr__(self, "leakage", lk)

    @classmethod
    def from_unitary(cls, u: np.ndarray) -> "QuantumChannel":
        u = np.asarray(u, dtype=complex)
        d = u.shape[0]
        s = np.kron(u.conj(), u)
        traces = np.linalg.norm(u, axis=0) ** 2
        return cls(dim=d, matrix=s, leakage=1.0 - traces)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return unvec(self.matrix @ vec(rho), self.dim)

    def choi(self) -> np.ndarray:
        d = self.dim
        j = np.zeros((d * d, d * d), dtype=complex)
        for col in range(d):
            for row in range(d):
                unit = np.zeros((d, d), dtype=complex)
                unit[row, col] = 1.0
                j += np.kron(unit, self.apply(unit))
        return j

    def choi_min_eigenvalue(self) -> float:
        j = self.choi()
        return float(np.linalg.eigvalsh(0.5 * (j + j.conj().T))[0])

    def choi_hermiticity_defect(self) -> float:
        return hermiticity_defect(self.choi())

    def output_traces(self) -> np.ndarray:
        d = self.dim
        diag_rows = np.arange(d) * (d + 1)
        return np.real(self.matrix[np.ix_(diag_rows, diag_rows)].sum(axis=0))

    def is_completely_positive(self, tol: float = 1e-7) -> bool:
        return self.choi_min_eigenvalue() >= -tol

    def is_trace_nonincreasing(self, tol: float = 1e-8) -> bool:
        return bool(np.all(self.output_traces() <= 1.0 + tol))


def extract_channel_from_stages(
    stages: Sequence[Stage],
    collapse: Sequence[np.ndarray],
    layout: SpaceLayout,
    omega_max: float,
    policy: StepPolicy = StepPolicy(),
    dissipative: bool = True,
) -> QuantumChannel:
    """Propagate all computational matrix units through the stages and
    assemble the superoperator on the computational subspace.

    Dissipative runs integrate the master equation for the d^2 units as one
    batch (linearity of the generator permits non-Hermitian inputs); closed
    runs propagate the unitary and conjugate, which is the same restriction.
    """
    comp = layout.computational_indices()
    d = comp.size
    dim = layout.total_dim

    if dissipative:
        batch = np.zeros((d * d, dim, dim), dtype=complex)
        for col in range(d):
            for row in range(d):
                batch[row + d * col, comp[row], comp[col]] = 1.0
        jumps = _JumpAction(list(collapse), dim)
        for stage in stages:
            steps = policy.stage_steps(stage.duration, omega_max)
            batch, _ = _rk4_lindblad(stage.h_at, jumps, batch, stage.duration, steps)
        _check_finite(batch, "channel extraction")
        # batch index b = row + d*col matches the vec index of its input unit,
        # so column b of the superoperator is vec of the projected output.
        blocks = batch[:, comp[:, None], comp[None, :]]
        matrix = np.ascontiguousarray(blocks.transpose(0, 2, 1).reshape(d * d, d * d).T)
    else:
        u = np.eye(dim, dtype=complex)
        for stage in stages:
            steps = policy.stage_steps(stage.duration, omega_max)
            u = _rk4_schrodinger(stage.h_at, u, stage.duration, steps)
        _check_finite(u, "propagator extraction")
        u_comp = u[np.ix_(comp, comp)]
        matrix = np.kron(u_comp.conj(), u_comp)

    diag_rows = np.arange(d) * (d + 1)
    traces = np.real(matrix[np.ix_(diag_rows, diag_rows)].sum(axis=0))
    return QuantumChannel(dim=d, matrix=matrix, leakage=1.0 - traces)


def extract_channel(
    params: PhysicalParams,
    dissipative: bool = True,
    policy: StepPolicy = StepPolicy(),
) -> QuantumChannel:
    """Realized parity-gate channel on the 8-dim computational subspace."""
    collapse = (
        [op.entries for op in model.collapse_operators(params)] if dissipative else []
    )
    return extract_channel_from_stages(
        protocol_stages(params),
        collapse,
        FULL_LAYOUT,
        dominant_frequency(params),
        policy,
        dissipative,
    )


# ---------------------------------------------------------------------------
# Superoperator and matrix-exponential oracle
# ---------------------------------------------------------------------------


def liouvillian_superoperator(hamiltonian, collapse: Sequence = ()) -> np.ndarray:
    """Explicit matrix of the Lindblad generator for a frozen Hamiltonian.

    Column-stacking convention: acting on vec(rho) it reproduces
    -i[H, rho] + sum_k ( L rho L^dag - {L^dag L, rho}/2 ).
    """
    h = hamiltonian.entries if isinstance(hamiltonian, Operator) else np.asarray(hamiltonian)
    dim = h.shape[0]
    eye = np.eye(dim, dtype=complex)
    out = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for c in collapse:
        l_op = c.entries if isinstance(c, Operator) else np.asarray(c, dtype=complex)
        ldl = l_op.conj().T @ l_op
        out += np.kron(l_op.conj(), l_op)
        out -= 0.5 * (np.kron(eye, ldl) + np.kron(ldl.T, eye))
    return out


def _stage_superoperators(stage: Stage, collapse: Sequence[np.ndarray]):
    l_static = scipy.sparse.csr_matrix(liouvillian_superoperator(stage.static, collapse))
    l_couple = None
    if stage.couple is not None:
        l_couple = scipy.sparse.csr_matrix(liouvillian_superoperator(stage.couple, ()))
    return l_static, l_couple


def expm_oracle_stages(
    stages: Sequence[Stage],
    collapse: Sequence[np.ndarray],
    state: np.ndarray,
    slices_per_stage: int | Sequence[int],
    dissipative: bool,
) -> np.ndarray:
    """Piecewise-constant (midpoint-sampled) matrix-exponential propagation.

    Closed runs exponentiate H per slice; dissipative runs apply the sparse
    Liouvillian exponential to vec(rho).  Independent of the RK4 path.
    """
    if isinstance(slices_per_stage, int):
        slices_per_stage = [slices_per_stage] * len(stages)
    out = np.array(state, dtype=complex)
    for stage, n_slices in zip(stages, slices_per_stage):
        if stage.duration <= 0:
            continue
        dt = stage.duration / n_slices
        if dissipative:
            l_static, l_couple = _stage_superoperators(stage, collapse)
            v = out.flatten(order="F")
            for k in range(n_slices):
                t_mid = (k + 0.5) * dt
                gen = l_static
                if l_couple is not None:
                    gen = l_static + float(stage.envelope(t_mid)) * l_couple
                v = scipy.sparse.linalg.expm_multiply(gen * dt, v)
            dim = out.shape[0]
            out = v.reshape((dim, dim), order="F")
        else:
            for k in range(n_slices):
                t_mid = (k + 0.5) * dt
                u = scipy.linalg.expm(-1j * stage.h_at(t_mid) * dt)
                out = u @ out
    return out


def expm_oracle_protocol(
    params: PhysicalParams,
    input_state,
    dissipative: bool = True,
    slices_per_stage: int | Sequence[int] = 1000,
):
    """Full-protocol oracle propagation; returns the final state object."""
    layout = FULL_LAYOUT
    state = _as_input_state(input_state, layout, dissipative)
    collapse = (
        [op.entries for op in model.collapse_operators(params)] if dissipative else []
    )
    raw = state.entries if dissipative else state.amplitudes
    final = expm_oracle_stages(
        protocol_stages(params), collapse, raw, slices_per_stage, dissipative
    )
    if dissipative:
        return DensityOperator(layout, final)
    return StateVector(layout, final)
