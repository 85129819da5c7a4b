"""Line-array geometry and row-orthonormal compression operators.

Element positions are integers in units of half-wavelength.  A compression
operator maps length-n snapshots to length-m ones and always has
orthonormal rows, so compressed white noise stays white.  Three kinds are
supported: the identity (no compression), selection of a sparse subset of
elements (e.g. a co-prime subarray pattern), and whitened random
projections drawn uniformly over row-orthonormal matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORTHONORMALITY_TOL = 1e-10


@dataclass(frozen=True)
class ElementPositions:
    """Sorted, distinct, nonnegative integer element positions starting at 0."""

    positions: tuple

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        if len(pos) == 0:
            raise ValueError("need at least one element")
        if pos[0] != 0:
            raise ValueError("first element must sit at position 0")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("positions must be strictly increasing")
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return len(self.positions)

    @property
    def aperture(self):
        return self.positions[-1]

    def as_array(self):
        return np.asarray(self.positions, dtype=np.float64)

    def to_json(self):
        return {"positions": list(self.positions)}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(obj["positions"]))


def dense_positions(n):
    """The n-element uniform line array at unit (half-wavelength) spacing."""
    if n < 1:
        raise ValueError("n must be positive")
    return ElementPositions(tuple(range(n)))


def coprime_positions(m1, m2):
    """Interleaved co-prime pattern: multiples of m1 up to (2*m2-1)*m1 joined
    with multiples of m2 up to (m1-1)*m2.

    The two subarrays share only the origin, so the union always has
    m1 + 2*m2 - 1 elements.  The argument order matters (the pattern is not
    symmetric in m1, m2); only gcd(m1, m2) == 1 is required.
    """
    m1, m2 = int(m1), int(m2)
    if m1 < 1 or m2 < 1:
        raise ValueError("subsampling factors must be positive")
    if math.gcd(m1, m2) != 1:
        raise ValueError(f"({m1}, {m2}) is not a co-prime pair")
    first = {k * m1 for k in range(2 * m2)}
    second = {k * m2 for k in range(m1)}
    union = tuple(sorted(first | second))
    assert len(union) == m1 + 2 * m2 - 1
    return ElementPositions(union)


def steering_vector(positions, theta):
    """Unit-modulus mode vector exp(j * position * theta), first entry 1."""
    return np.exp(1j * positions.as_array() * float(theta))


def steering_matrix(positions, thetas):
    """Columns are steering vectors for every angle in ``thetas``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=np.float64))
    return np.exp(1j * np.outer(positions.as_array(), thetas))


def steering_derivative(positions, theta):
    """Derivative of the steering vector with respect to the angle."""
    p = positions.as_array()
    return 1j * p * np.exp(1j * p * float(theta))


@dataclass(frozen=True)
class CompressionOperator:
    """Row-orthonormal m-by-n operator applied to every snapshot."""

    matrix: np.ndarray
    kind: str
    source_positions: ElementPositions | None = field(default=None)

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.complex128)
        if matrix.ndim != 2:
            raise ValueError("operator must be a matrix")
        m, n = matrix.shape
        if m > n:
            raise ValueError(f"operator must not expand: m={m} > n={n}")
        if self.kind not in ("identity", "selection", "whitened-random"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        gram = matrix @ matrix.conj().T
        if not np.allclose(gram, np.eye(m), atol=ORTHONORMALITY_TOL):
            raise ValueError("operator rows are not orthonormal")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def m(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        return self.matrix.shape[1]

    def apply(self, vectors):
        """Compress a vector or a stack of column snapshots."""
        return self.matrix @ vectors

    def to_json(self):
        obj = {
            "kind": self.kind,
            "shape": [self.m, self.n],
            "matrix": [
                [[float(z.real), float(z.imag)] for z in row] for row in self.matrix
            ],
        }
        if self.source_positions is not None:
            obj["source_positions"] = list(self.source_positions.positions)
        return obj

    @classmethod
    def from_json(cls, obj):
        rows = obj["matrix"]
        matrix = np.array(
            [[complex(re, im) for re, im in row] for row in rows], dtype=np.complex128
        )
        positions = None
        if obj.get("source_positions") is not None:
            positions = ElementPositions(tuple(obj["source_positions"]))
        return cls(matrix, obj["kind"], positions)


def identity_compressor(n):
    """The trivial operator: keeps all n elements."""
    return CompressionOperator(np.eye(n, dtype=np.complex128), "identity")


def selection_compressor(positions, n):
    """Select the given element positions out of a dense n-element array."""
    if positions.aperture >= n:
        raise ValueError(
            f"position {positions.aperture} does not exist in a dense array of {n}"
        )
    matrix = np.zeros((len(positions), n), dtype=np.complex128)
    for row, pos in enumerate(positions.positions):
        matrix[row, pos] = 1.0
    return CompressionOperator(matrix, "selection", source_positions=positions)


def random_whitened_compressor(m, n, seed):
    """Whitened complex-Gaussian projection, uniform over row-orthonormal
    m-by-n matrices.

    Draws an i.i.d. standard complex normal matrix and orthonormalizes its
    rows by the inverse Hermitian square root of its Gram matrix.
    Deterministic for a given seed; a numerically singular draw (zero
    probability) is retried with a perturbed seed at most three times.
    """
    m, n = int(m), int(n)
    if m > n:
        raise ValueError(f"m={m} must not exceed n={n}")
    for attempt in range(3):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=int(seed), spawn_key=(attempt,))
        )
        raw = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        gram = raw @ raw.conj().T
        eigvals, eigvecs = np.linalg.eigh(gram)
        if eigvals[0] > 1e-12 * eigvals[-1]:
            inv_sqrt = (eigvecs * (1.0 / np.sqrt(eigvals))) @ eigvecs.conj().T
            return CompressionOperator(inv_sqrt @ raw, "whitened-random")
    raise ValueError("random compressor draw was numerically singular 3 times")
