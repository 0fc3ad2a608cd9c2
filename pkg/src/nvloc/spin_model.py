"""Ground-state spin Hamiltonian of an NV center coupled to a 15N nucleus.

All energies are expressed as ordinary frequencies (Hz), i.e. energy / h.
Matrices act on the six-dimensional product space ordered as ``BASIS``::

    index  0        1        2       3       4        5
    m_S    -1       -1       0       0       +1       +1
    m_I    -1/2     +1/2     -1/2    +1/2    -1/2     +1/2
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

BASIS = tuple((m_s, m_i) for m_s in (-1, 0, 1) for m_i in (-0.5, 0.5))

# Conservative regime limits for the closed-form frequency formulas.
SECULAR_BZ_LIMIT = 10e-3
TRANSVERSE_LIMIT_FRACTION = 0.1


class RegimeWarning(UserWarning):
    """A closed-form approximation is evaluated outside its validity regime."""


def basis_index(m_s, m_i):
    return BASIS.index((int(m_s), float(m_i)))


@dataclass(frozen=True)
class SpinConstants:
    """Hamiltonian parameters for an NV center with a 15N nucleus (Hz and Hz/T)."""

    D: float = 2.87e9
    gamma_e: float = 28e9
    gamma_I: float = -4.3e6
    A_z: float = 3.03e6
    A_perp: float = 3.65e6
    gamma_I_perp: float = 75e6

    def __post_init__(self):
        for name in ("D", "gamma_e", "A_z", "A_perp", "gamma_I_perp"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be positive and finite, got {value!r}")
        if not (math.isfinite(self.gamma_I) and self.gamma_I < 0):
            raise ValidationError(f"gamma_I must be negative for 15N, got {self.gamma_I!r}")


@dataclass(frozen=True)
class NVFrameField:
    """Magnetic field in the NV frame (z along the symmetry axis), tesla."""

    B_x: float = 0.0
    B_y: float = 0.0
    B_z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(b) for b in (self.B_x, self.B_y, self.B_z)):
            raise ValidationError("field components must be finite")

    @classmethod
    def from_components(cls, B_z, B_perp, azimuth=0.0):
        return cls(B_perp * math.cos(azimuth), B_perp * math.sin(azimuth), B_z)

    @property
    def B_perp(self):
        return math.hypot(self.B_x, self.B_y)

    @property
    def magnitude(self):
        return math.sqrt(self.B_x**2 + self.B_y**2 + self.B_z**2)

    def as_array(self):
        return np.array([self.B_x, self.B_y, self.B_z])


@dataclass(frozen=True)
class TransitionSet:
    """The four |0, m_I> -> |+-1, m_I> transition frequencies, Hz."""

    plus_up: float
    plus_down: float
    minus_up: float
    minus_down: float

    def frequency(self, branch, m_i):
        key = ("plus" if branch > 0 else "minus") + ("_up" if m_i > 0 else "_down")
        return getattr(self, key)

    def labeled(self):
        """List of ``((branch, m_I), frequency)`` sorted by frequency."""
        items = [
            ((+1, +0.5), self.plus_up),
            ((+1, -0.5), self.plus_down),
            ((-1, +0.5), self.minus_up),
            ((-1, -0.5), self.minus_down),
        ]
        return sorted(items, key=lambda item: item[1])

    def as_array(self):
        return np.array(sorted((self.plus_up, self.plus_down, self.minus_up, self.minus_down)))


def _spin_one():
    r2 = math.sqrt(2.0)
    s_z = np.diag([-1.0, 0.0, 1.0]).astype(complex)
    s_plus = np.zeros((3, 3), dtype=complex)
    s_plus[1, 0] = r2
    s_plus[2, 1] = r2
    return s_plus, s_plus.conj().T, s_z


def _spin_half():
    i_z = np.diag([-0.5, 0.5]).astype(complex)
    i_plus = np.zeros((2, 2), dtype=complex)
    i_plus[1, 0] = 1.0
    return i_plus, i_plus.conj().T, i_z


def spin_one_operators():
    """(S_x, S_y, S_z) for S = 1 in the ordered basis m = -1, 0, +1."""
    s_plus, s_minus, s_z = _spin_one()
    return (s_plus + s_minus) / 2, (s_plus - s_minus) / 2j, s_z


def spin_half_operators():
    """(I_x, I_y, I_z) for I = 1/2 in the ordered basis m = -1/2, +1/2."""
    i_plus, i_minus, i_z = _spin_half()
    return (i_plus + i_minus) / 2, (i_plus - i_minus) / 2j, i_z


def build_hamiltonian(c: SpinConstants, field: NVFrameField) -> np.ndarray:
    """Return the 6x6 Hamiltonian (Hz) for the field given in the NV frame.

    The non-secular hyperfine term is A_perp (S_x I_x + S_y I_y), i.e.
    (A_perp / 2)(S+ I- + S- I+) with S+|m> = sqrt(S(S+1) - m(m+1))|m+1>.
    With this normalisation the m_S = 0 nuclear doublet responds to a
    transverse field with the effective ratio ``gamma_I_perp`` ~ 75 MHz/T.
    """
    s_ops = spin_one_operators()
    i_ops = spin_half_operators()
    s_plus, s_minus, s_z = _spin_one()
    i_plus, i_minus, i_z = _spin_half()
    one_s = np.eye(3)
    one_i = np.eye(2)
    b = field.as_array()

    h = c.D * np.kron(s_z @ s_z, one_i)
    for k in range(3):
        h = h + c.gamma_e * b[k] * np.kron(s_ops[k], one_i)
        h = h + c.gamma_I * b[k] * np.kron(one_s, i_ops[k])
    h = h + c.A_z * np.kron(s_z, i_z)
    h = h + 0.5 * c.A_perp * (np.kron(s_plus, i_minus) + np.kron(s_minus, i_plus))
    return h


def _check_hermitian(h):
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {h.shape}")
    scale = np.max(np.abs(h)) or 1.0
    if np.max(np.abs(h - h.conj().T)) >= 1e-9 * scale:
        raise ValidationError("matrix is not hermitian")
    return h


def eigensystem(h, degeneracy_tol=1e-9):
    """Eigen-decomposition of a hermitian matrix with reproducible vectors.

    Eigenvalues are ascending. Inside a degenerate cluster the eigenvectors
    are re-chosen by projecting basis states onto the cluster subspace in
    order of decreasing overlap, so the result does not depend on LAPACK's
    arbitrary choice. Each vector's largest component is made real positive.
    """
    h = _check_hermitian(h)
    values, vectors = np.linalg.eigh(h)
    scale = max(np.max(np.abs(h)), 1.0)
    n = len(values)

    start = 0
    while start < n:
        stop = start + 1
        while stop < n and values[stop] - values[start] <= degeneracy_tol * scale:
            stop += 1
        if stop - start > 1:
            sub = vectors[:, start:stop]
            weights = np.sum(np.abs(sub) ** 2, axis=1)
            order = sorted(range(n), key=lambda i: (-round(weights[i], 12), i))
            chosen = []
            for i in order:
                v = sub @ sub[i].conj()
                for u in chosen:
                    v = v - u * (u.conj() @ v)
                norm = np.linalg.norm(v)
                if norm > 1e-8:
                    chosen.append(v / norm)
                if len(chosen) == stop - start:
                    break
            vectors[:, start:stop] = np.column_stack(chosen)
        start = stop

    for j in range(n):
        v = vectors[:, j]
        mags = np.abs(v)
        k = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
        vectors[:, j] = v * (abs(v[k]) / v[k])
    return values, vectors


def secular_transitions(c: SpinConstants, B_z: float) -> TransitionSet:
    """omega_{+-, m_I} = D +- gamma_e B_z +- m_I A_z."""
    if abs(B_z) > SECULAR_BZ_LIMIT:
        warnings.warn(
            f"|B_z| = {abs(B_z):.3g} T exceeds {SECULAR_BZ_LIMIT} T; secular formula may be inaccurate",
            RegimeWarning,
            stacklevel=2,
        )
    zeeman = c.gamma_e * B_z
    half = 0.5 * c.A_z
    return TransitionSet(
        plus_up=c.D + zeeman + half,
        plus_down=c.D + zeeman - half,
        minus_up=c.D - zeeman - half,
        minus_down=c.D - zeeman + half,
    )


def exact_transitions(c: SpinConstants, field: NVFrameField) -> TransitionSet:
    """Transition frequencies from exact diagonalization.

    Each eigenstate is identified with the basis state it overlaps most;
    valid while the fields are small enough not to reorder levels.
    """
    values, vectors = eigensystem(build_hamiltonian(c, field))
    energy = {}
    weights = np.abs(vectors) ** 2
    for j in range(len(values)):
        energy[BASIS[int(np.argmax(weights[:, j]))]] = values[j]
    if len(energy) != len(BASIS):
        raise ValidationError("could not assign eigenstates to basis states; field too large")

    def line(m_s, m_i):
        return energy[(m_s, m_i)] - energy[(0, m_i)]

    return TransitionSet(
        plus_up=line(1, 0.5),
        plus_down=line(1, -0.5),
        minus_up=line(-1, 0.5),
        minus_down=line(-1, -0.5),
    )


def nuclear_splitting(c: SpinConstants, field: NVFrameField) -> float:
    """Exact splitting (Hz) of the two eigenstates with dominant m_S = 0 character."""
    values, vectors = eigensystem(build_hamiltonian(c, field))
    zero_weight = np.sum(np.abs(vectors[[basis_index(0, -0.5), basis_index(0, 0.5)], :]) ** 2, axis=0)
    pair = np.sort(np.argsort(zero_weight)[-2:])
    return float(values[pair[1]] - values[pair[0]])


def nuclear_oscillation_frequency(c: SpinConstants, B_z: float, B_perp: float) -> float:
    """Nuclear oscillation frequency in m_S = 0: sqrt((gamma_I B_z)^2 + (gamma_I_perp B_perp)^2)."""
    if B_perp < 0:
        raise ValidationError("B_perp is a magnitude and must be >= 0")
    if B_perp > TRANSVERSE_LIMIT_FRACTION * c.A_z / abs(c.gamma_I):
        warnings.warn(
            f"B_perp = {B_perp:.3g} T is not small against A_z/|gamma_I|",
            RegimeWarning,
            stacklevel=2,
        )
    return math.hypot(c.gamma_I * B_z, c.gamma_I_perp * B_perp)


def simulate_nutation_sequence(c: SpinConstants, field: NVFrameField, delays) -> np.ndarray:
    """m_S = 0 population after the pi - delay - pi sequence.

    Starts from an equal mixture of |0,-1/2> and |0,+1/2>. Each selective
    pi pulse is an instantaneous swap |0,+1/2> <-> |+1,+1/2>; between them
    the state evolves freely under the full Hamiltonian.
    """
    delays = np.asarray(delays, dtype=float)
    if np.any(delays < 0):
        raise ValidationError("delays must be non-negative")
    values, vectors = eigensystem(build_hamiltonian(c, field))

    a, b = basis_index(0, 0.5), basis_index(1, 0.5)
    swap = np.eye(6)
    swap[[a, b]] = swap[[b, a]]
    zero = [basis_index(0, -0.5), basis_index(0, 0.5)]

    phases = np.exp(-2j * np.pi * np.outer(delays, values))  # (n_delays, 6)
    signal = np.zeros(delays.shape)
    for start in zero:
        psi = swap[:, start]
        coeffs = vectors.conj().T @ psi
        evolved = (phases * coeffs) @ vectors.T  # (n_delays, 6)
        final = evolved @ swap.T
        signal += 0.5 * np.sum(np.abs(final[:, zero]) ** 2, axis=1)
    return np.clip(signal, 0.0, 1.0)


def sx_matrix_element(c: SpinConstants | None = None, bra=0, ket=-1) -> float:
    """<bra|S_x|ket> for the S = 1 electron spin, computed from the operator."""
    s_x = spin_one_operators()[0]
    index = {-1: 0, 0: 1, 1: 2}
    return float(np.real(s_x[index[bra], index[ket]]))
