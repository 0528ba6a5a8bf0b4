"""Covariance eigen-analysis by cyclic Jacobi rotations; bands are scored by their variance-weighted loadings."""
import logging
from dataclasses import dataclass

import numpy as np

from core.dataset import Dataset
from rankers import FeatureRanking, Ranker, RankerSettings, rank_by_scores

logger = logging.getLogger('bandsel.pca')

OFF_DIAGONAL_TOL = 1e-10
MAX_SWEEPS = 100
NEGLIGIBLE = np.finfo(np.float64).eps


@dataclass
class EigenDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def _off_diagonal_norm(A: np.ndarray) -> float:
    return float(np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2)))


def jacobi_eigen(matrix: np.ndarray) -> EigenDecomposition:
    A = np.array(matrix, dtype=np.float64)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T):
        raise ValueError("Jacobi eigen-solver needs a symmetric square matrix")
    V = np.eye(n)
    threshold = OFF_DIAGONAL_TOL * abs(float(np.trace(A)))

    sweeps = 0
    off = _off_diagonal_norm(A)
    while sweeps < MAX_SWEEPS and off > threshold:
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # below rounding of the diagonal pair: drop instead of rotating
                if abs(apq) <= NEGLIGIBLE * (abs(A[p, p]) + abs(A[q, q])):
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * col_p - s * col_q, s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * row_p - s * row_q, s * row_p + c * row_q
                v_p, v_q = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * v_p - s * v_q, s * v_p + c * v_q
        off = _off_diagonal_norm(A)
    if off > threshold:
        logger.warning(f"Jacobi stopped after {MAX_SWEEPS} sweeps, off-diagonal norm {off:.3g}")

    values = np.diag(A).copy()
    order = np.argsort(-values, kind='stable')
    logger.debug(f"Jacobi converged in {sweeps} sweeps for a {n}x{n} matrix")
    return EigenDecomposition(eigenvalues=values[order], eigenvectors=V[:, order])


def covariance_eigen(train: Dataset) -> EigenDecomposition:
    if train.n_samples < 2:
        raise ValueError("covariance needs at least two samples")
    covariance = np.atleast_2d(np.cov(train.samples, rowvar=False, ddof=1))
    return jacobi_eigen(covariance)


def rank_pca(e: EigenDecomposition) -> FeatureRanking:
    # sum_i lambda_i v_i[j]^2 is the variance of band j
    scores = (e.eigenvectors ** 2) @ e.eigenvalues
    return rank_by_scores(scores, "pca")


class PcaRanker(Ranker):
    name = "pca"

    def rank(self, train: Dataset, k: int, settings: RankerSettings) -> FeatureRanking:
        return rank_pca(covariance_eigen(train))


def setup(registry):
    registry.add_ranker(PcaRanker())
