"""Riemannian dissimilarity between SPD covariance descriptors.

The distance between two SPD matrices A and B is

    d(A, B) = sqrt( sum_i ln^2(lambda_i) )

with lambda_i the generalized eigenvalues of the pencil (A, B). It is
computed by whitening with the Cholesky factor A = L L^T and taking the
ordinary symmetric eigenvalues of L^-1 B L^-T.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .descriptor import MultiscaleDescriptor
from .errors import DescriptorMismatchError, MetricDomainError

# generalized eigenvalues are clamped here before the logarithm, guarding
# against underflow on near-singular regularized matrices
EIGENVALUE_FLOOR = 1e-300

_SYMMETRY_ATOL = 1e-12


def riemannian_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic distance between two SPD matrices of equal dimension."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_spd_input(a, "first matrix")
    _check_spd_input(b, "second matrix")
    if a.shape != b.shape:
        raise MetricDomainError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    chol = _cholesky(a, "first matrix")
    half = solve_triangular(chol, b, lower=True)
    whitened = solve_triangular(chol, half.T, lower=True)
    whitened = (whitened + whitened.T) / 2.0
    eigs = np.linalg.eigvalsh(whitened)
    if eigs[0] <= 0.0:
        raise MetricDomainError("second matrix is not positive definite")
    return float(np.sqrt(np.sum(np.log(np.clip(eigs, EIGENVALUE_FLOOR, None)) ** 2)))


def multiscale_distance(d1: MultiscaleDescriptor, d2: MultiscaleDescriptor) -> float:
    """Sum of per-scale Riemannian distances between two descriptors."""
    if d1.scales != d2.scales:
        raise DescriptorMismatchError(f"scale lists differ: {d1.scales} vs {d2.scales}")
    return sum(
        riemannian_distance(m1.matrix, m2.matrix) for m1, m2 in zip(d1.matrices, d2.matrices)
    )


def distances_to_many(
    probe: MultiscaleDescriptor, entries: Sequence[MultiscaleDescriptor]
) -> np.ndarray:
    """Multiscale distances from one probe to every entry, in entry order.

    Equivalent to calling multiscale_distance per entry, but whitens once
    per scale with the probe's inverse Cholesky factor and batches the
    eigenvalue solves, which is what makes whole-database queries cheap.
    """
    if not entries:
        return np.zeros(0)
    for entry in entries:
        if entry.scales != probe.scales:
            raise DescriptorMismatchError(f"scale lists differ: {probe.scales} vs {entry.scales}")
    total = np.zeros(len(entries))
    identity = np.eye(probe.dimension)
    for scale_index in range(len(probe.scales)):
        chol = _cholesky(probe.matrices[scale_index].matrix, "probe matrix")
        whitener = solve_triangular(chol, identity, lower=True)
        stack = np.stack([e.matrices[scale_index].matrix for e in entries])
        total += _batched_distances(whitener, stack)
    return total


def pairwise_multiscale_distances(
    descriptors: Sequence[MultiscaleDescriptor], jobs: int = 1
) -> np.ndarray:
    """Full symmetric distance matrix over a list of descriptors.

    Only the upper triangle is computed (the metric is symmetric and zero
    on the diagonal); rows are independent, so ``jobs`` worker threads can
    fill them concurrently without changing the result.
    """
    n = len(descriptors)
    out = np.zeros((n, n))
    if n < 2:
        return out
    scales = descriptors[0].scales
    for d in descriptors:
        if d.scales != scales:
            raise DescriptorMismatchError("descriptors with mixed scale lists")
    identity = np.eye(descriptors[0].dimension)
    for scale_index in range(len(scales)):
        stack = np.stack([d.matrices[scale_index].matrix for d in descriptors])

        def fill_row(i: int) -> None:
            chol = _cholesky(stack[i], f"descriptor {i}")
            whitener = solve_triangular(chol, identity, lower=True)
            out[i, i + 1 :] += _batched_distances(whitener, stack[i + 1 :])

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                list(pool.map(fill_row, range(n - 1)))
        else:
            for i in range(n - 1):
                fill_row(i)
    return out + out.T


def _batched_distances(whitener: np.ndarray, stack: np.ndarray) -> np.ndarray:
    whitened = whitener @ stack @ whitener.T
    whitened = (whitened + whitened.transpose(0, 2, 1)) / 2.0
    eigs = np.linalg.eigvalsh(whitened)
    if eigs[:, 0].min() <= 0.0:
        raise MetricDomainError("encountered a matrix that is not positive definite")
    logs = np.log(np.clip(eigs, EIGENVALUE_FLOOR, None))
    return np.sqrt((logs**2).sum(axis=1))


def _check_spd_input(m: np.ndarray, name: str) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise MetricDomainError(f"{name} must be square, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise MetricDomainError(f"{name} contains non-finite values")
    tol = _SYMMETRY_ATOL * max(1.0, float(np.abs(m).max()))
    if float(np.abs(m - m.T).max()) > tol:
        raise MetricDomainError(f"{name} is not symmetric")


def _cholesky(m: np.ndarray, name: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise MetricDomainError(f"{name} is not positive definite") from exc
