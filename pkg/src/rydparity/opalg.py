"""Dense complex operator algebra over heterogeneous tensor-product spaces.

Everything downstream (Hamiltonians, Lindblad propagation, channel
extraction) is expressed in terms of the types and embedding helpers
defined here.  The standard system is two three-level control atoms
(levels 0, 1, r) and one four-level target atom (levels A, B, e, R),
a 3 x 3 x 4 = 36 dimensional product space.  Site order is fixed as
(control 1, control 2, target); basis index = i1*12 + i2*4 + it.

All wrapper types are immutable after construction and safe to share
between worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

# Control-atom level indices.
C0, C1, CR = 0, 1, 2
# Target-atom level indices.
TA, TB, TE, TR = 0, 1, 2, 3

CONTROL_LEVEL_NAMES = ("0", "1", "r")
TARGET_LEVEL_NAMES = ("A", "B", "e", "R")


def _frozen_complex(a, shape_kind):
    arr = np.array(a, dtype=complex)
    arr.setflags(write=False)
    if shape_kind == "matrix" and (arr.ndim != 2 or arr.shape[0] != arr.shape[1]):
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if shape_kind == "vector" and arr.ndim != 1:
        raise ValueError(f"expected a vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered per-site dimensions of a tensor-product space."""

    local_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.local_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"invalid local dimensions {self.local_dims}")
        object.__setattr__(self, "local_dims", dims)

    @property
    def n_sites(self) -> int:
        return len(self.local_dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.local_dims))

    def index_of(self, levels) -> int:
        """Flat basis index of a per-site level tuple (site 0 most significant)."""
        if len(levels) != self.n_sites:
            raise ValueError(f"need {self.n_sites} levels, got {len(levels)}")
        idx = 0
        for lev, dim in zip(levels, self.local_dims):
            if not 0 <= lev < dim:
                raise ValueError(f"level {lev} out of range for local dim {dim}")
            idx = idx * dim + lev
        return idx

    def levels_of(self, index) -> tuple[int, ...]:
        out = []
        for dim in reversed(self.local_dims):
            out.append(index % dim)
            index //= dim
        return tuple(reversed(out))

    def computational_indices(self) -> np.ndarray:
        """Flat indices of the qubit product states (levels 0 and 1 on every site).

        Ordering is site-major: for the full layout this is
        |00A>, |00B>, |01A>, |01B>, |10A>, |10B>, |11A>, |11B>.
        """
        idx = [0]
        for dim in self.local_dims:
            idx = [i * dim + b for i in idx for b in (0, 1)]
        return np.asarray(idx, dtype=np.intp)


FULL_LAYOUT = SpaceLayout((3, 3, 4))
TWO_ATOM_LAYOUT = SpaceLayout((3, 4))
TARGET_LAYOUT = SpaceLayout((4,))


@dataclass(frozen=True)
class Operator:
    """Complex matrix on a layout's product space.

    Hermiticity is a checkable predicate, not an invariant: Hamiltonians
    and density matrices are Hermitian, propagated matrix units are not.
    """

    layout: SpaceLayout
    entries: np.ndarray

    def __post_init__(self):
        arr = _frozen_complex(self.entries, "matrix")
        if arr.shape[0] != self.layout.total_dim:
            raise ValueError(
                f"matrix dim {arr.shape[0]} does not match layout dim {self.layout.total_dim}"
            )
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return hermiticity_defect(self.entries) <= tol

    def dagger(self) -> "Operator":
        return Operator(self.layout, self.entries.conj().T)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            if other.layout != self.layout:
                raise ValueError("layout mismatch in operator product")
            return Operator(self.layout, self.entries @ other.entries)
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, Operator):
            if other.layout != self.layout:
                raise ValueError("layout mismatch in operator sum")
            return Operator(self.layout, self.entries + other.entries)
        return NotImplemented

    def __mul__(self, scalar):
        return Operator(self.layout, self.entries * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class StateVector:
    """Complex amplitude vector on a layout's product space."""

    layout: SpaceLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        arr = _frozen_complex(self.amplitudes, "vector")
        if arr.shape[0] != self.layout.total_dim:
            raise ValueError(
                f"vector dim {arr.shape[0]} does not match layout dim {self.layout.total_dim}"
            )
        object.__setattr__(self, "amplitudes", arr)

    @classmethod
    def basis(cls, layout: SpaceLayout, levels) -> "StateVector":
        amps = np.zeros(layout.total_dim, dtype=complex)
        amps[layout.index_of(levels)] = 1.0
        return cls(layout, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class DensityOperator:
    """Density matrix on a layout's product space."""

    layout: SpaceLayout
    entries: np.ndarray

    def __post_init__(self):
        arr = _frozen_complex(self.entries, "matrix")
        if arr.shape[0] != self.layout.total_dim:
            raise ValueError(
                f"matrix dim {arr.shape[0]} does not match layout dim {self.layout.total_dim}"
            )
        object.__setattr__(self, "entries", arr)

    @classmethod
    def from_state(cls, psi: StateVector) -> "DensityOperator":
        return cls(psi.layout, np.outer(psi.amplitudes, psi.amplitudes.conj()))

    @classmethod
    def basis_projector(cls, layout: SpaceLayout, levels) -> "DensityOperator":
        return cls.from_state(StateVector.basis(layout, levels))

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def hermiticity_defect(self) -> float:
        return hermiticity_defect(self.entries)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.entries + self.entries.conj().T))[0])

    def populations(self) -> np.ndarray:
        return self.entries.diagonal().real.copy()

    def check_physical(self, herm_tol=1e-10, eig_tol=1e-9):
        """Raise if the state is not a physically prepared density matrix."""
        defect = self.hermiticity_defect()
        if defect > herm_tol:
            raise ValueError(f"density matrix not Hermitian: defect {defect:.3e}")
        lam = self.min_eigenvalue()
        if lam < -eig_tol:
            raise ValueError(f"density matrix not positive: min eigenvalue {lam:.3e}")


def hermiticity_defect(matrix: np.ndarray) -> float:
    """Max elementwise deviation from Hermiticity."""
    return float(np.max(np.abs(matrix - matrix.conj().T)))


def kron(a, b):
    """Kronecker product; Operators combine into an Operator on the joined layout."""
    if isinstance(a, Operator) and isinstance(b, Operator):
        layout = SpaceLayout(a.layout.local_dims + b.layout.local_dims)
        return Operator(layout, np.kron(a.entries, b.entries))
    a_m = a.entries if isinstance(a, Operator) else np.asarray(a, dtype=complex)
    b_m = b.entries if isinstance(b, Operator) else np.asarray(b, dtype=complex)
    return np.kron(a_m, b_m)


def kron_all(matrices) -> np.ndarray:
    return reduce(np.kron, matrices)


def embed(local_op, site: int, layout: SpaceLayout) -> Operator:
    """Lift a single-site operator to the full space: I (x) ... (x) op (x) ... (x) I."""
    local = np.asarray(local_op, dtype=complex)
    if not 0 <= site < layout.n_sites:
        raise ValueError(f"site {site} out of range for {layout.n_sites}-site layout")
    d = layout.local_dims[site]
    if local.shape != (d, d):
        raise ValueError(
            f"local operator shape {local.shape} does not match site dimension {d}"
        )
    factors = [
        local if k == site else np.eye(dim, dtype=complex)
        for k, dim in enumerate(layout.local_dims)
    ]
    return Operator(layout, kron_all(factors))


def local_unit(dim: int, row: int, col: int) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[row, col] = 1.0
    return m


def project_computational(op, layout: SpaceLayout) -> np.ndarray:
    """Restrict an operator to the qubit product subspace (levels 0, 1 per site).

    Returns the 2^n x 2^n block <i| op |j> in site-major ordering; for the
    full three-atom layout that is control-1 major, control-2 middle,
    target minor.
    """
    matrix = op.entries if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    if isinstance(op, Operator) and op.layout != layout:
        raise ValueError("operator layout does not match the requested layout")
    if matrix.shape[0] != layout.total_dim:
        raise ValueError(
            f"matrix dim {matrix.shape[0]} does not match layout dim {layout.total_dim}"
        )
    idx = layout.computational_indices()
    return matrix[np.ix_(idx, idx)].copy()


def embed_computational(block: np.ndarray, layout: SpaceLayout) -> np.ndarray:
    """Inverse of project_computational: place a qubit-subspace block into the full space."""
    block = np.asarray(block, dtype=complex)
    idx = layout.computational_indices()
    if block.shape != (idx.size, idx.size):
        raise ValueError(
            f"block shape {block.shape} does not match computational dim {idx.size}"
        )
    full = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    full[np.ix_(idx, idx)] = block
    return full
