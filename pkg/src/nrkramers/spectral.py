"""Dense small-matrix spectral routines.

Covers the linear algebra behind the transition-rate prefactor: symmetric
eigendecomposition, eigenvalues of non-symmetric real matrices through
Hessenberg reduction plus Francis double-shift QR, extraction of the
unique negative eigenvalue of the drift Jacobian at an index-1 saddle,
and the rank-one determinant identities it satisfies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, NumericFailureError, PreconditionViolationError

_EPS = float(np.finfo(float).eps)


def sym_eig(M):
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    Returns (w, V) with columns of V orthonormal and M V = V diag(w).
    Raises ContractViolationError if M is not symmetric to 1e-10.
    """
    M = np.asarray(M, float)
    scale = max(1.0, float(np.abs(M).max()))
    if np.max(np.abs(M - M.T)) > 1e-10 * scale:
        raise ContractViolationError("matrix is not symmetric to 1e-10")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return w, V


# ---------------------------------------------------------------------------
# non-symmetric eigenvalues: Hessenberg + Francis double-shift QR


def _householder_hessenberg(A):
    """Reduce A in place to upper Hessenberg form by Householder reflections."""
    n = A.shape[0]
    for k in range(n - 2):
        x = A[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha <= _EPS * max(1.0, np.abs(A).max()):
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x.copy()
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        A[k + 1:, k:] -= 2.0 * np.outer(v, v @ A[k + 1:, k:])
        A[:, k + 1:] -= 2.0 * np.outer(A[:, k + 1:] @ v, v)
    return A


def _balance(A):
    """Osborne balancing with radix-2 scaling; similarity, so eigenvalues unchanged."""
    A = A.copy()
    n = A.shape[0]
    for _ in range(20):
        converged = True
        for i in range(n):
            c = np.sum(np.abs(A[:, i])) - abs(A[i, i])
            r = np.sum(np.abs(A[i, :])) - abs(A[i, i])
            if c == 0.0 or r == 0.0:
                continue
            f = 1.0
            while c < r / 2.0:
                c *= 2.0
                r /= 2.0
                f *= 2.0
            while c > r * 2.0:
                c /= 2.0
                r *= 2.0
                f /= 2.0
            if f != 1.0:
                converged = False
                A[:, i] *= f
                A[i, :] /= f
        if converged:
            break
    return A


def _eig2x2(a, b, c, d):
    """Eigenvalues of [[a, b], [c, d]] as a pair of complex numbers."""
    mid = 0.5 * (a + d)
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc >= 0.0:
        r = np.sqrt(disc)
        return complex(mid + r), complex(mid - r)
    r = np.sqrt(-disc)
    return complex(mid, r), complex(mid, -r)


def _francis_step(H, lo, hi, exceptional):
    """One implicit double-shift QR sweep on the active block H[lo:hi+1, lo:hi+1]."""
    if exceptional:
        # ad hoc shifts to break rare convergence stalls
        w = abs(H[hi, hi - 1]) + abs(H[hi - 1, hi - 2]) if hi - 2 >= lo else abs(H[hi, hi - 1])
        s = 1.5 * w
        t = w * w
    else:
        s = H[hi - 1, hi - 1] + H[hi, hi]
        t = H[hi - 1, hi - 1] * H[hi, hi] - H[hi - 1, hi] * H[hi, hi - 1]
    x = H[lo, lo] * H[lo, lo] + H[lo, lo + 1] * H[lo + 1, lo] - s * H[lo, lo] + t
    y = H[lo + 1, lo] * (H[lo, lo] + H[lo + 1, lo + 1] - s)
    z = H[lo + 1, lo] * H[lo + 2, lo + 1] if lo + 2 <= hi else 0.0
    for k in range(lo, hi - 1):
        if lo + 2 <= hi and k <= hi - 2:
            vec = np.array([x, y, z])
        else:
            vec = np.array([x, y])
        alpha = np.linalg.norm(vec)
        if alpha != 0.0:
            if vec[0] > 0:
                alpha = -alpha
            v = vec.copy()
            v[0] -= alpha
            vnorm = np.linalg.norm(v)
            if vnorm > 0.0:
                v /= vnorm
                m = len(v)
                q = max(lo, k - 1)
                H[k:k + m, q:hi + 1] -= 2.0 * np.outer(v, v @ H[k:k + m, q:hi + 1])
                r = min(k + m + 1, hi + 1)
                H[lo:r, k:k + m] -= 2.0 * np.outer(H[lo:r, k:k + m] @ v, v)
        x = H[k + 1, k]
        y = H[k + 2, k] if k + 2 <= hi else 0.0
        if k + 3 <= hi:
            z = H[k + 3, k]
    # final 2-vector reflection at the bottom of the bulge
    vec = np.array([x, y])
    alpha = np.linalg.norm(vec)
    if alpha != 0.0:
        if vec[0] > 0:
            alpha = -alpha
        v = vec.copy()
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm > 0.0:
            v /= vnorm
            k = hi - 1
            q = max(lo, k - 1)
            H[k:hi + 1, q:hi + 1] -= 2.0 * np.outer(v, v @ H[k:hi + 1, q:hi + 1])
            H[lo:hi + 1, k:hi + 1] -= 2.0 * np.outer(H[lo:hi + 1, k:hi + 1] @ v, v)


def real_eigenvalues(M):
    """All eigenvalues of a real square matrix, as a complex array.

    Hessenberg reduction followed by Francis double-shift QR iteration.
    Matrices larger than 16 are balanced first.  Raises
    NumericFailureError if the iteration does not converge within
    100 * d sweeps or the eigenvalue product disagrees with det(M).
    """
    M = np.asarray(M, float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractViolationError("input must be a square matrix")
    n = M.shape[0]
    if n > 64:
        raise ContractViolationError("dimension capped at 64")
    if not np.all(np.isfinite(M)):
        raise ContractViolationError("matrix entries must be finite")
    if n == 1:
        return np.array([complex(M[0, 0])])
    detM = float(np.linalg.det(M))
    A = _balance(M) if n > 16 else M.copy()
    H = _householder_hessenberg(A)
    scale = max(1.0, float(np.abs(H).max()))
    eigs: list[complex] = []
    hi = n - 1
    sweeps = 0
    stall = 0
    max_sweeps = 100 * n
    while hi >= 0:
        # deflate negligible subdiagonals
        lo = hi
        while lo > 0 and abs(H[lo, lo - 1]) > _EPS * (abs(H[lo - 1, lo - 1]) + abs(H[lo, lo]) + _EPS * scale):
            lo -= 1
        if lo == hi:
            eigs.append(complex(H[hi, hi]))
            hi -= 1
            stall = 0
        elif lo == hi - 1:
            e1, e2 = _eig2x2(H[lo, lo], H[lo, hi], H[hi, lo], H[hi, hi])
            eigs.extend([e1, e2])
            hi -= 2
            stall = 0
        else:
            sweeps += 1
            stall += 1
            if sweeps > max_sweeps:
                raise NumericFailureError(f"QR iteration did not converge in {max_sweeps} sweeps")
            _francis_step(H, lo, hi, exceptional=(stall % 11 == 10))
    eigs_arr = np.array(eigs)
    prod = complex(np.prod(eigs_arr))
    prodmag = float(np.prod(np.abs(eigs_arr))) if n else 1.0
    ref = max(abs(detM), 1e-3 * prodmag, 1e-290)
    if abs(prod - detM) > 1e-6 * ref:
        raise NumericFailureError(
            f"eigenvalue product {prod} inconsistent with determinant {detM}")
    return eigs_arr


def _snap_real(eigs, norm):
    """Snap eigenvalues with negligible imaginary part to the real axis."""
    eigs = np.asarray(eigs, complex).copy()
    small = np.abs(eigs.imag) <= 1e-9 * max(norm, 1.0)
    eigs[small] = eigs[small].real
    return eigs


def unique_negative_eig(H, L, e1=None):
    """Magnitude mu of the unique negative eigenvalue of H + L, and direction v.

    H must be symmetric with exactly one negative eigenvalue and H L
    skew-symmetric; then H + L has exactly one eigenvalue with negative
    real part, which is real.  v is the unit eigenvector of H - L^T for
    -mu, sign-normalized so that v . e1 > 0 where e1 is the unstable
    Hessian direction (or the supplied orientation).
    """
    H = np.asarray(H, float)
    L = np.asarray(L, float)
    w, V = sym_eig(H)
    if not (w[0] < 0 and (len(w) == 1 or w[1] > 0)):
        raise PreconditionViolationError("H must have exactly one negative eigenvalue")
    HL = H @ L
    if np.max(np.abs(HL + HL.T)) > 1e-8 * (1.0 + float(np.abs(HL).max())):
        raise PreconditionViolationError("H L is not skew-symmetric to tolerance")
    A = H + L
    norm = float(np.linalg.norm(A))
    eigs = _snap_real(real_eigenvalues(A), norm)
    neg = eigs[eigs.real < 0]
    if len(neg) != 1:
        raise PreconditionViolationError(
            f"expected exactly one negative-real-part eigenvalue of H + L, found {len(neg)}"
            " (H L not skew or H not index-1)")
    if neg[0].imag != 0.0:
        raise NumericFailureError("negative eigenvalue of H + L is not real after snapping")
    mu = -float(neg[0].real)
    # eigenvector of H - L^T (similar to H + L) for -mu, via SVD null space
    B = H - L.T + mu * np.eye(len(H))
    _, s, Vt = np.linalg.svd(B)
    v = Vt[-1]
    if s[-1] > 1e-6 * max(1.0, s[0]):
        raise NumericFailureError("eigenvector residual too large for -mu")
    if e1 is None:
        e1 = V[:, 0]
    dot = float(v @ e1)
    if abs(dot) <= 1e-12:
        raise NumericFailureError("v . e1 numerically zero; instance too ill-conditioned")
    if dot < 0:
        v = -v
    return mu, v


def rank_one_dets(H, mu, v):
    """Determinants of the rank-one-shifted Hessian and the null direction.

    Returns (det(H + 2 mu v v^T), det(H + mu v v^T), unit H^{-1} v).
    The first equals -det(H); the second vanishes, with null space
    spanned by H^{-1} v.  Both identities are verified to 1e-8.
    """
    H = np.asarray(H, float)
    v = np.asarray(v, float)
    outer = mu * np.outer(v, v)
    det_plus2 = float(np.linalg.det(H + 2.0 * outer))
    det_plus1 = float(np.linalg.det(H + outer))
    detH = float(np.linalg.det(H))
    if abs(det_plus2 + detH) > 1e-8 * max(abs(detH), 1e-290):
        raise NumericFailureError("det(H + 2 mu v v^T) != -det(H); spectrum invalid")
    null_vec = np.linalg.solve(H, v)
    null_vec = null_vec / np.linalg.norm(null_vec)
    resid = float(np.linalg.norm((H + outer) @ null_vec))
    if resid > 1e-8 * max(1.0, float(np.abs(H).max())):
        raise NumericFailureError("H^{-1} v is not in the null space of H + mu v v^T")
    return det_plus2, det_plus1, null_vec


@dataclass(frozen=True, eq=False)
class SaddleSpectrum:
    """Spectral data of an index-1 saddle of the full drift field.

    hessian_eigs is ascending, so the single negative entry comes first;
    hessian_vecs holds the matching orthonormal eigenvectors as columns,
    with column 0 oriented toward the starting valley when that
    information is available.  mu is the decay rate of the unstable mode
    of the combined drift Jacobian and v its (adjoint) direction.
    """

    hessian_eigs: np.ndarray
    hessian_vecs: np.ndarray
    mu: float
    v: np.ndarray
    det_hessian: float

    @property
    def lambda1(self) -> float:
        return -float(self.hessian_eigs[0])

    @property
    def e1(self) -> np.ndarray:
        return self.hessian_vecs[:, 0]

    @property
    def dim(self) -> int:
        return len(self.hessian_eigs)

    def hessian(self) -> np.ndarray:
        return (self.hessian_vecs * self.hessian_eigs) @ self.hessian_vecs.T

    def validate(self):
        w = self.hessian_eigs
        if np.count_nonzero(w < 0) != 1 or w[0] >= 0:
            raise PreconditionViolationError("spectrum must have exactly one negative eigenvalue")
        H = self.hessian()
        vHinvv = float(self.v @ np.linalg.solve(H, self.v))
        if abs(vHinvv + 1.0 / self.mu) > 1e-8 * (1.0 / self.mu):
            raise NumericFailureError("v . H^{-1} v != -1/mu")
        if float(self.v @ self.e1) <= 0.0:
            raise NumericFailureError("v . e1 must be strictly positive")
        if self.mu < self.lambda1 - 1e-10:
            raise NumericFailureError("mu < lambda1 violates the rate comparison")

    @classmethod
    def from_matrices(cls, H, L, e1_direction=None) -> "SaddleSpectrum":
        """Build and check the spectrum from Hessian H and drift Jacobian L.

        e1_direction, when given, fixes the sign of the unstable Hessian
        eigenvector (it is flipped to have positive dot with it).
        """
        H = np.asarray(H, float)
        w, V = sym_eig(H)
        if np.count_nonzero(w < 0) != 1:
            raise PreconditionViolationError("Hessian must have exactly one negative eigenvalue")
        V = V.copy()
        if e1_direction is not None:
            if float(V[:, 0] @ np.asarray(e1_direction, float)) < 0:
                V[:, 0] = -V[:, 0]
        else:
            j = int(np.argmax(np.abs(V[:, 0])))
            if V[j, 0] < 0:
                V[:, 0] = -V[:, 0]
        mu, v = unique_negative_eig(H, np.asarray(L, float), e1=V[:, 0])
        # residual check against H - L^T
        resid = np.linalg.norm((H - np.asarray(L, float).T) @ v + mu * v)
        if resid > 1e-8 * abs(mu):
            raise NumericFailureError("eigenpair residual for H - L^T exceeds tolerance")
        spec = cls(hessian_eigs=w, hessian_vecs=V, mu=mu, v=v,
                   det_hessian=float(np.prod(w)))
        spec.validate()
        return spec

    def to_dict(self):
        return {
            "hessian_eigs": self.hessian_eigs.tolist(),
            "hessian_vecs": self.hessian_vecs.tolist(),
            "mu": self.mu,
            "v": self.v.tolist(),
            "det_hessian": self.det_hessian,
        }


def random_index1_pair(rng, d):
    """Random (H, L) with H index-1 symmetric and H L exactly skew.

    H = Q diag(-l1, l2..ld) Q^T with positive l's; L = H^{-1} S for a
    random skew S, so that H L = S is skew by construction.
    """
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = rng.uniform(0.3, 2.5, size=d)
    lam[0] = -lam[0]
    H = (Q * lam) @ Q.T
    A = rng.standard_normal((d, d))
    S = A - A.T
    L = np.linalg.solve(H, S)
    return 0.5 * (H + H.T), L
