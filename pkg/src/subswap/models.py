"""Measurement models and the signal/orthogonal subspace split.

Two models share the same mode matrix built from steering vectors: in the
first the source weights are deterministic and the parameters modulate the
measurement mean; in the second the weights are zero-mean complex Gaussian
and the parameters modulate the covariance.  Compression multiplies the
modes by a row-orthonormal operator; the subspace split then comes from an
SVD (mean case) or a Hermitian eigendecomposition of the compressed signal
covariance (covariance case).

Basis phases follow a fixed convention (first significant component of
every basis vector made real positive) so decompositions are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CompressionOperator, ElementPositions, steering_matrix

RANK_TOL = 1e-8
UNITARY_TOL = 1e-10
TIE_REL_TOL = 1e-9


class SubspaceRankError(ValueError):
    """The modes do not span a full p-dimensional signal subspace."""


def _check_thetas(thetas):
    thetas = tuple(float(t) for t in thetas)
    if len(thetas) == 0:
        raise ValueError("need at least one source")
    for t in thetas:
        if not (-math.pi < t <= math.pi):
            raise ValueError(f"electrical angle {t} outside (-pi, pi]")
    return thetas


@dataclass(frozen=True)
class MeanModel:
    """Deterministic-weight model: snapshots are CN(modes @ amplitudes, noise_power * I)."""

    thetas: tuple
    amplitudes: np.ndarray
    noise_power: float
    positions: ElementPositions

    def __post_init__(self):
        thetas = _check_thetas(self.thetas)
        amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if amplitudes.shape != (len(thetas),):
            raise ValueError("one amplitude per source required")
        if not self.noise_power > 0:
            raise ValueError("noise power must be positive")
        if len(thetas) > len(self.positions):
            raise ValueError("more sources than elements")
        amplitudes.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "noise_power", float(self.noise_power))

    @property
    def n(self):
        return len(self.positions)

    @property
    def p(self):
        return len(self.thetas)

    def mode_matrix(self):
        return steering_matrix(self.positions, self.thetas)

    def signal_mean(self):
        return self.mode_matrix() @ self.amplitudes

    def to_json(self):
        return {
            "kind": "mean",
            "thetas": list(self.thetas),
            "amplitudes": [[z.real, z.imag] for z in self.amplitudes],
            "noise_power": self.noise_power,
            "positions": list(self.positions.positions),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            tuple(obj["thetas"]),
            np.array([complex(re, im) for re, im in obj["amplitudes"]]),
            obj["noise_power"],
            ElementPositions(tuple(obj["positions"])),
        )


@dataclass(frozen=True)
class CovarianceModel:
    """Random-weight model: snapshots are CN(0, modes @ weight_cov @ modes^H + noise_power * I)."""

    thetas: tuple
    weight_cov: np.ndarray
    noise_power: float
    positions: ElementPositions

    def __post_init__(self):
        thetas = _check_thetas(self.thetas)
        p = len(thetas)
        weight_cov = np.asarray(self.weight_cov, dtype=np.complex128)
        if weight_cov.shape != (p, p):
            raise ValueError("weight covariance must be p x p")
        if not np.allclose(weight_cov, weight_cov.conj().T, atol=UNITARY_TOL):
            raise ValueError("weight covariance must be Hermitian")
        eigvals = np.linalg.eigvalsh(weight_cov)
        if eigvals[0] < -UNITARY_TOL * max(1.0, float(eigvals[-1])):
            raise ValueError("weight covariance must be positive semidefinite")
        if not self.noise_power > 0:
            raise ValueError("noise power must be positive")
        if p > len(self.positions):
            raise ValueError("more sources than elements")
        weight_cov.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "weight_cov", weight_cov)
        object.__setattr__(self, "noise_power", float(self.noise_power))

    @property
    def n(self):
        return len(self.positions)

    @property
    def p(self):
        return len(self.thetas)

    def mode_matrix(self):
        return steering_matrix(self.positions, self.thetas)

    def signal_cov(self):
        modes = self.mode_matrix()
        return modes @ self.weight_cov @ modes.conj().T

    def to_json(self):
        return {
            "kind": "covariance",
            "thetas": list(self.thetas),
            "weight_cov": [[[z.real, z.imag] for z in row] for row in self.weight_cov],
            "noise_power": self.noise_power,
            "positions": list(self.positions.positions),
        }

    @classmethod
    def from_json(cls, obj):
        weight_cov = np.array(
            [[complex(re, im) for re, im in row] for row in obj["weight_cov"]]
        )
        return cls(
            tuple(obj["thetas"]),
            weight_cov,
            obj["noise_power"],
            ElementPositions(tuple(obj["positions"])),
        )


@dataclass(frozen=True)
class CompressedModes:
    """Modes after compression plus the model-specific signal statistics.

    ``mean`` is present for the mean model, ``signal_cov`` for the
    covariance model.  A ``None`` compressor leaves the dense quantities
    untouched (the uncompressed code path).
    """

    modes: np.ndarray
    mean: np.ndarray | None = field(default=None)
    signal_cov: np.ndarray | None = field(default=None)

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=np.complex128)
        if modes.ndim != 2:
            raise ValueError("modes must be a matrix")
        modes.setflags(write=False)
        object.__setattr__(self, "modes", modes)

    @property
    def m(self):
        return self.modes.shape[0]

    @property
    def p(self):
        return self.modes.shape[1]


def _apply(compressor, matrix, n):
    if compressor is None:
        return matrix
    if compressor.n != n:
        raise ValueError(
            f"compressor expects {compressor.n} elements, model has {n}"
        )
    return compressor.apply(matrix)


def compressed_modes_mean(model, compressor=None):
    """Compressed modes and compressed mean for a :class:`MeanModel`."""
    modes = _apply(compressor, model.mode_matrix(), model.n)
    return CompressedModes(modes=modes, mean=modes @ model.amplitudes)


def compressed_modes_cov(model, compressor=None):
    """Compressed modes and compressed signal covariance for a :class:`CovarianceModel`."""
    modes = _apply(compressor, model.mode_matrix(), model.n)
    signal_cov = modes @ model.weight_cov @ modes.conj().T
    return CompressedModes(modes=modes, signal_cov=signal_cov)


@dataclass(frozen=True)
class SubspaceSplit:
    """Orthonormal signal and orthogonal bases plus the signal spectrum.

    ``spectrum`` holds singular values for the mean model and eigenvalues
    for the covariance model, sorted nonincreasing.
    """

    signal_basis: np.ndarray
    orth_basis: np.ndarray
    spectrum: np.ndarray

    def __post_init__(self):
        signal = np.asarray(self.signal_basis, dtype=np.complex128)
        orth = np.asarray(self.orth_basis, dtype=np.complex128)
        spectrum = np.asarray(self.spectrum, dtype=np.float64)
        full = np.hstack([signal, orth])
        m = full.shape[0]
        if full.shape[1] != m:
            raise ValueError("bases must jointly span the ambient space")
        if not np.allclose(full.conj().T @ full, np.eye(m), atol=UNITARY_TOL):
            raise ValueError("joint basis is not unitary")
        if np.any(np.diff(spectrum) > 0) or np.any(spectrum < 0):
            raise ValueError("spectrum must be nonnegative and nonincreasing")
        for arr in (signal, orth, spectrum):
            arr.setflags(write=False)
        object.__setattr__(self, "signal_basis", signal)
        object.__setattr__(self, "orth_basis", orth)
        object.__setattr__(self, "spectrum", spectrum)

    @property
    def m(self):
        return self.signal_basis.shape[0]

    @property
    def p(self):
        return self.signal_basis.shape[1]

    def signal_projector(self):
        return self.signal_basis @ self.signal_basis.conj().T

    def orth_projector(self):
        return self.orth_basis @ self.orth_basis.conj().T


def _fix_phases(basis):
    """Rotate each column so its first significant entry is real positive."""
    basis = np.array(basis)
    for col in range(basis.shape[1]):
        column = basis[:, col]
        magnitudes = np.abs(column)
        peak = magnitudes.max()
        if peak == 0.0:
            continue
        lead = np.argmax(magnitudes > 1e-12 * peak)
        pivot = column[lead]
        if pivot != 0.0:
            basis[:, col] = column * (pivot.conjugate() / abs(pivot))
    return basis


def subspace_split_mean(modes):
    """SVD split of the compressed modes into signal and orthogonal bases.

    Raises :class:`SubspaceRankError` when the smallest singular value
    falls below RANK_TOL relative to the largest (coincident sources or a
    compressor that annihilates a mode).
    """
    matrix = modes.modes
    m, p = matrix.shape
    if p > m:
        raise SubspaceRankError("more modes than compressed dimensions")
    basis, sing, _ = np.linalg.svd(matrix, full_matrices=True)
    if sing[0] == 0.0 or sing[p - 1] <= RANK_TOL * sing[0]:
        raise SubspaceRankError(
            f"modes are rank deficient: singular-value ratio "
            f"{0.0 if sing[0] == 0 else sing[p - 1] / sing[0]:.2e} <= {RANK_TOL}"
        )
    basis = _fix_phases(basis)
    return SubspaceSplit(basis[:, :p], basis[:, p:], sing[:p])


def subspace_split_cov(modes):
    """Eigendecomposition split of the compressed signal covariance."""
    if modes.signal_cov is None:
        raise ValueError("covariance-model modes required")
    m, p = modes.modes.shape
    if p > m:
        raise SubspaceRankError("more modes than compressed dimensions")
    eigvals, eigvecs = np.linalg.eigh(modes.signal_cov)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    top = np.clip(eigvals[:p], 0.0, None)
    if top[0] == 0.0 or top[p - 1] <= RANK_TOL * top[0]:
        raise SubspaceRankError(
            "compressed signal covariance is rank deficient"
        )
    eigvecs = _fix_phases(eigvecs)
    return SubspaceSplit(eigvecs[:, :p], eigvecs[:, p:], top)


@dataclass(frozen=True)
class MinimumMode:
    """The a-priori weakest mode: its column index, unit vector, and a tie flag."""

    index: int
    unit_vector: np.ndarray
    tie: bool


def _select_minimum(criteria, modes):
    criteria = np.asarray(criteria, dtype=np.float64)
    floor = criteria.min()
    near = np.flatnonzero(criteria <= floor * (1.0 + TIE_REL_TOL))
    index = int(near[0])
    column = modes.modes[:, index]
    return MinimumMode(index, column / np.linalg.norm(column), len(near) > 1)


def min_mode_mean(modes):
    """Mode capturing the least energy of the compressed mean.

    Ties (generic for symmetric equal-amplitude scenes) resolve to the
    smallest index and raise the flag.
    """
    if modes.mean is None:
        raise ValueError("mean-model modes required")
    overlap = modes.modes.conj().T @ modes.mean
    return _select_minimum(np.abs(overlap) ** 2, modes)


def min_mode_cov(modes):
    """Mode with the least quadratic overlap with the compressed signal covariance."""
    if modes.signal_cov is None:
        raise ValueError("covariance-model modes required")
    quad = np.einsum(
        "ij,ik,kj->j", modes.modes.conj(), modes.signal_cov, modes.modes
    )
    return _select_minimum(np.abs(quad) ** 2, modes)
