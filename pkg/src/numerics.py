"""
Dense linear-algebra kernels
Unitary DFT, Hermitian eigendecomposition, PSD inverse square root, GSVD,
water-filling, Woodbury rank-one updates and the interleaved block helpers.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from src.exceptions import (
    ConfigError,
    DegenerateVectorError,
    NotHermitianError,
    NotPsdError,
    NumericalWarning,
    RankDeficiencyError,
    SingularUpdateError,
)

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-8
WOODBURY_TOL = 1e-12
LN2 = np.log(2.0)


@dataclass
class GsvdFactors:
    """Joint factorization M = V_M diag(sig_M) X^H, N = V_N diag(sig_N) X^H"""
    left_M: np.ndarray
    left_N: np.ndarray
    sig_M: np.ndarray
    sig_N: np.ndarray
    common: np.ndarray
    common_inv_h: np.ndarray
    deficiency: int = 0

    @property
    def num_modes(self):
        return self.sig_M.size

    def reconstruct(self):
        """Return (M, N) rebuilt from the factors"""
        rows = self.left_M.shape[0]
        lam_m = np.zeros((rows, self.num_modes))
        lam_n = np.zeros((rows, self.num_modes))
        np.fill_diagonal(lam_m, self.sig_M)
        np.fill_diagonal(lam_n, self.sig_N)
        xh = self.common.conj().T
        return self.left_M @ lam_m @ xh, self.left_N @ lam_n @ xh


def hermitize(A):
    """Hermitian part of A"""
    return 0.5 * (A + np.swapaxes(A, -1, -2).conj())


def is_hermitian(A, tol=HERMITIAN_TOL):
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        return False
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    return bool(np.max(np.abs(A - np.swapaxes(A, -1, -2).conj()), initial=0.0) <= tol * scale)


def _require_hermitian(A, what="matrix"):
    if not is_hermitian(A):
        raise NotHermitianError(f"{what} is not Hermitian within {HERMITIAN_TOL:g}")


def dft_matrix(n):
    """Unitary n-point DFT matrix, [W]_{jk} = exp(-2*pi*i*jk/n)/sqrt(n)"""
    if n < 1:
        raise ConfigError(f"DFT size must be >= 1, got {n}")
    return sla.dft(int(n), scale="sqrtn")


def hermitian_evd(A):
    """Eigendecomposition of a Hermitian matrix with eigenvalues in descending order"""
    A = np.asarray(A)
    _require_hermitian(A)
    w, V = sla.eigh(hermitize(A))
    return w[::-1].copy(), V[:, ::-1].copy()


def inv_sqrt_psd(A, ridge=0.0):
    """
    Inverse square root of a Hermitian PSD matrix.
    Eigenvalues below `ridge` are lifted to `ridge`; with ridge = 0 the null
    space is left out (pseudo-inverse square root).
    """
    A = np.asarray(A)
    _require_hermitian(A)
    if ridge < 0:
        raise ConfigError("ridge must be non-negative")
    w, V = sla.eigh(hermitize(A))
    scale = max(float(np.max(np.abs(w))), 0.0) if w.size else 0.0
    if w.size and w[0] < -PSD_TOL * max(scale, 1e-300):
        raise NotPsdError(f"smallest eigenvalue {w[0]:.3e} is negative")
    if ridge > 0:
        w = np.maximum(w, ridge)
    tiny = np.finfo(float).eps * max(scale, 1e-300) * max(A.shape[0], 1)
    safe = np.where(w > tiny, w, 1.0)
    inv_root = np.where(w > tiny, 1.0 / np.sqrt(safe), 0.0)
    return hermitize((V * inv_root) @ V.conj().T)


def sqrt_psd(A):
    """Principal square root of a Hermitian PSD matrix (negative round-off clipped)"""
    A = np.asarray(A)
    _require_hermitian(A)
    w, V = sla.eigh(hermitize(A))
    return hermitize((V * np.sqrt(np.maximum(w, 0.0))) @ V.conj().T)


def leading_eigpair(A):
    """Largest eigenvalue and a unit eigenvector of a Hermitian matrix"""
    A = np.asarray(A)
    n = A.shape[0]
    w, V = sla.eigh(hermitize(A), subset_by_index=[n - 1, n - 1])
    v = V[:, 0]
    return float(w[0]), v / np.linalg.norm(v)


def log2det(A):
    """log2 |A| for (a batch of) Hermitian positive definite matrices"""
    sign, logdet = np.linalg.slogdet(A)
    if np.any(np.real(sign) <= 0):
        raise NotPsdError("determinant of a matrix expected positive definite is not positive")
    return logdet / LN2


def _complete_unitary(columns, keep, size):
    """
    Build a size x size unitary whose columns at positions `keep` are the given
    orthonormal columns; remaining positions are filled from the orthogonal complement.
    """
    out = np.zeros((size, size), dtype=complex)
    good = columns[:, keep] if columns.size else np.zeros((size, 0), dtype=complex)
    if good.shape[1]:
        comp = sla.null_space(good.conj().T)
    else:
        comp = np.eye(size, dtype=complex)
    fill = [k for k in range(size) if k >= keep.size or not keep[k]]
    out[:, : keep.size][:, keep] = good
    for pos, col in zip(fill, comp.T):
        out[:, pos] = col
    return out


def gsvd(M, N_mat, strict=False):
    """
    Generalized SVD of the pair (M, N_mat) through the Gram pencil (M^H M, N^H N).

    The second Gram matrix is regularized by 1e-12 * trace before its Cholesky
    factor is taken. Modes are sorted by decreasing generalized value and
    normalized so that sig_N = 1 on every regular mode.
    """
    M = np.asarray(M, dtype=complex)
    N_mat = np.asarray(N_mat, dtype=complex)
    if M.shape[1] != N_mat.shape[1]:
        raise ConfigError("gsvd inputs must have the same number of columns")
    rows_m, cols = M.shape
    rows_n = N_mat.shape[0]
    if rows_m < cols or rows_n < cols:
        raise ConfigError("gsvd inputs must have at least as many rows as columns")

    gram_m = hermitize(M.conj().T @ M)
    gram_n = hermitize(N_mat.conj().T @ N_mat)
    trace_n = float(np.real(np.trace(gram_n)))
    trace_m = float(np.real(np.trace(gram_m)))
    if trace_n <= 0 and trace_m <= 0:
        raise RankDeficiencyError("both matrices of the pencil are zero", deficiency=cols)

    ridge = 1e-12 * (trace_n if trace_n > 0 else trace_m)
    eig_n = sla.eigvalsh(gram_n)
    deficiency = int(np.sum(eig_n <= 1e3 * ridge))
    if deficiency:
        stacked = np.linalg.matrix_rank(np.vstack([M, N_mat]))
        if strict and stacked < cols:
            raise RankDeficiencyError(
                f"stacked pencil has rank {stacked} < {cols}", deficiency=cols - stacked)
        warnings.warn(f"second GSVD factor has {deficiency} near-null direction(s); ridge applied",
                      NumericalWarning, stacklevel=2)

    L = sla.cholesky(gram_n + ridge * np.eye(cols), lower=True)
    half = sla.solve_triangular(L, gram_m, lower=True)
    pencil = hermitize(sla.solve_triangular(L, half.conj().T, lower=True).conj().T)
    lam, Y = sla.eigh(pencil)
    lam = np.maximum(lam[::-1], 0.0)
    Y = Y[:, ::-1]
    Z = sla.solve_triangular(L.conj().T, Y, lower=False)

    mz = M @ Z
    nz = N_mat @ Z
    sig_m = np.sqrt(lam)
    sig_n = np.linalg.norm(nz, axis=0)
    # ridge-dominated directions of N carry no power
    sig_n = np.where(sig_n ** 2 > 1e-8, sig_n, 0.0)

    floor_m = 1e-12 * max(float(sig_m.max(initial=0.0)), 1e-300)
    keep_m = sig_m > floor_m
    keep_n = sig_n > 0
    cols_m = np.zeros_like(mz)
    cols_m[:, keep_m] = mz[:, keep_m] / sig_m[keep_m]
    cols_n = np.zeros_like(nz)
    cols_n[:, keep_n] = nz[:, keep_n] / sig_n[keep_n]
    sig_m = np.where(keep_m, sig_m, 0.0)

    X = np.linalg.inv(Z).conj().T
    return GsvdFactors(
        left_M=_complete_unitary(cols_m, keep_m, rows_m),
        left_N=_complete_unitary(cols_n, keep_n, rows_n),
        sig_M=sig_m,
        sig_N=sig_n,
        common=X,
        common_inv_h=Z,
        deficiency=deficiency,
    )


def water_fill(gains, weights, budget, max_iter=200):
    """
    Maximize sum(log(1 + a_k s_k)) subject to sum(b_k s_k) = budget, s >= 0.

    With level nu the allocation is s_k = max(0, nu/b_k - 1/a_k), so the spent
    budget is sum(max(0, nu - b_k/a_k)). The active set is located by bisection
    on nu and the level then solved exactly on that set.
    """
    a = np.asarray(gains, dtype=float).ravel()
    b = np.asarray(weights, dtype=float).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ConfigError("gains and weights must be non-empty and of equal length")
    if np.any(a <= 0) or np.any(b <= 0):
        raise ConfigError("water_fill needs strictly positive gains and weights")
    if budget <= 0:
        raise ConfigError("water_fill budget must be positive")

    floor = b / a

    def spent(level):
        return float(np.sum(np.maximum(0.0, level - floor)))

    lo, hi = float(floor.min()), float(floor.max()) + float(budget)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if spent(mid) > budget:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break

    active = floor < hi
    level = (budget + floor[active].sum()) / active.sum()
    # the closed-form level can deactivate the marginal channel
    while np.any(floor[active] >= level) and active.sum() > 1:
        worst = np.argmax(np.where(active, floor, -np.inf))
        active[worst] = False
        level = (budget + floor[active].sum()) / active.sum()
    alloc = np.where(active, (level - floor) / b, 0.0)
    return np.maximum(alloc, 0.0)


def woodbury_update(A_inv, b, sign=1):
    """
    Rank-one inverse update (A + sign * b b^H)^{-1} from A^{-1}.
    Leading axes of A_inv (..., n, n) and b (..., n) are treated as a batch.
    """
    if sign not in (1, -1):
        raise ConfigError("sign must be +1 or -1")
    A_inv = np.asarray(A_inv)
    b = np.asarray(b)
    u = np.einsum("...ij,...j->...i", A_inv, b)
    quad = np.real(np.einsum("...i,...i->...", b.conj(), u))
    denom = 1.0 + sign * quad
    nonzero = np.linalg.norm(b, axis=-1) > 0
    if np.any(nonzero & (np.abs(denom) < WOODBURY_TOL)):
        raise SingularUpdateError("rank-one update makes the matrix singular")
    denom = np.where(nonzero, denom, 1.0)
    outer = u[..., :, None] * u.conj()[..., None, :]
    return A_inv - sign * outer / denom[..., None, None]


def normalize(v):
    """Unit-norm copy of v"""
    v = np.asarray(v)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n <= 1e-300:
        raise DegenerateVectorError("cannot normalize a zero vector")
    return v / n


def interleave_indices(N, P):
    """(N, P) index table idx[n, i] = n + i*N, block n of the interleaved domain"""
    return np.arange(N)[:, None] + N * np.arange(P)[None, :]


def to_blocks(A, N, P):
    """Extract the N diagonal P x P blocks of an NP x NP matrix in interleaved order"""
    idx = interleave_indices(N, P)
    return np.asarray(A)[idx[:, :, None], idx[:, None, :]]


def from_blocks(blocks, N, P):
    """Inverse of to_blocks: scatter N blocks into a dense NP x NP matrix"""
    idx = interleave_indices(N, P)
    out = np.zeros((N * P, N * P), dtype=np.result_type(blocks, complex))
    out[idx[:, :, None], idx[:, None, :]] = blocks
    return out


def off_block_mass(A, N, P):
    """Frobenius norm of A outside the interleaved blocks, relative to ||A||_F"""
    A = np.asarray(A)
    total = np.linalg.norm(A)
    if total == 0:
        return 0.0
    rest = A - from_blocks(to_blocks(A, N, P), N, P)
    return float(np.linalg.norm(rest) / total)


def block_inv_sqrt(blocks, min_eig=1e-12):
    """Per-block inverse and inverse square root of a stack of Hermitian PD blocks"""
    w, V = np.linalg.eigh(hermitize(blocks))
    if np.any(w < min_eig):
        raise NotPsdError(f"block eigenvalue {w.min():.3e} below {min_eig:g}")
    vh = np.swapaxes(V, -1, -2).conj()
    inv = (V / w[..., None, :]) @ vh
    inv_sqrt = (V / np.sqrt(w)[..., None, :]) @ vh
    return hermitize(inv), hermitize(inv_sqrt)
