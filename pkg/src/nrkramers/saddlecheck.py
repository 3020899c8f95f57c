"""Saddle-local test function and boundary-integral verification.

Around an index-1 saddle at level H the Gaussian-CDF profile
p(x) = Phi((x - sigma) . v sqrt(mu/eps)) concentrates the transition
flux on a thin box aligned with the Hessian eigenvectors.  This module
evaluates that profile, its exact derivatives under the adjoint
generator, and the flux integrals over the outgoing face of the box,
whose ratio to alpha_eps * omega must tend to one as eps shrinks.
Quadrature is one-dimensional, so the checks are restricted to d = 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, ndtr  # standard normal CDF, vectorized

from .errors import NumericFailureError, PreconditionViolationError
from .kramers import ek_constant
from .landscape import LandscapeSpec
from .spectral import SaddleSpectrum, sym_eig
from .topology import KIND_SADDLE, CriticalPoint

DEFAULT_J_BOX = 4.0
_QUAD_LIMIT = 2 ** 16


@dataclass(frozen=True, eq=False)
class SaddleBox:
    """Eigenvector-aligned box around the saddle at scale delta."""

    center: np.ndarray
    delta: float                 # sqrt(eps log(1/eps))
    J_box: float
    axes: np.ndarray             # Hessian eigenvectors as columns, e1 first
    half_widths: np.ndarray      # J delta/sqrt(lam1), then 2 J delta/sqrt(lam_j)
    level_cap: float             # H + J^2 delta^2

    @classmethod
    def build(cls, saddle: CriticalPoint, spectrum: SaddleSpectrum,
              epsilon: float, J_box: float = DEFAULT_J_BOX):
        if not 0.0 < epsilon < 1.0:
            raise PreconditionViolationError("epsilon must lie in (0, 1)")
        delta = math.sqrt(epsilon * math.log(1.0 / epsilon))
        lams = np.abs(spectrum.hessian_eigs)
        widths = J_box * delta / np.sqrt(lams)
        widths[1:] *= 2.0
        axes = spectrum.hessian_vecs.copy()
        axes[:, 0] = spectrum.e1
        return cls(center=saddle.location, delta=delta, J_box=float(J_box),
                   axes=axes, half_widths=widths,
                   level_cap=saddle.value + J_box ** 2 * delta ** 2)

    def to_dict(self):
        return {"center": self.center.tolist(), "delta": self.delta,
                "J_box": self.J_box, "axes": self.axes.tolist(),
                "half_widths": self.half_widths.tolist(),
                "level_cap": self.level_cap}


def test_function(x, spectrum: SaddleSpectrum, epsilon: float, center=None):
    """Profile value Phi((x - center) . v sqrt(mu/eps)) in [0, 1]."""
    x = np.asarray(x, float)
    rel = x if center is None else x - np.asarray(center, float)
    s = rel @ spectrum.v
    return ndtr(s * math.sqrt(spectrum.mu / epsilon))


def test_function_grad(x, spectrum: SaddleSpectrum, epsilon: float, center=None):
    """Exact gradient phi(z) sqrt(mu/eps) v with z the profile argument."""
    x = np.asarray(x, float)
    rel = x if center is None else x - np.asarray(center, float)
    root = math.sqrt(spectrum.mu / epsilon)
    z = (rel @ spectrum.v) * root
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return np.multiply.outer(phi * root, spectrum.v)


def adjoint_generator_on_profile(x, spec: LandscapeSpec,
                                 spectrum: SaddleSpectrum, epsilon: float,
                                 center=None):
    """L* p = -(grad U - ell) . grad p + eps Laplacian p, in closed form.

    With p the Gaussian-CDF profile along v, this reduces to
    phi(z) sqrt(mu/eps) [-(grad U - ell) . v - mu s], s = (x - center) . v.
    """
    x = np.asarray(x, float)
    rel = x if center is None else x - np.asarray(center, float)
    s = rel @ spectrum.v
    root = math.sqrt(spectrum.mu / epsilon)
    phi = np.exp(-0.5 * (s * root) ** 2) / math.sqrt(2.0 * math.pi)
    drift = (spec.grad(x) - spec.ell(x)) @ spectrum.v
    return phi * root * (-drift - spectrum.mu * s)


def _clip_to_cap(u_of_t, t_hi, cap):
    """Largest t in [0, t_hi] with u_of_t(t) < cap, by bisection."""
    if u_of_t(t_hi) < cap:
        return t_hi
    lo, hi = 0.0, t_hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if u_of_t(mid) < cap:
            lo = mid
        else:
            hi = mid
    return lo


def boundary_asymptotics(spec: LandscapeSpec, saddle: CriticalPoint,
                         epsilon_ladder, J_box: float = DEFAULT_J_BOX,
                         density: str = "harmonic"):
    """Flux integrals over the outgoing face, one row per epsilon.

    The face lies at (x - sigma) . e1 = J delta / sqrt(lam1), clipped to
    U < H + J^2 delta^2.  For each epsilon the row holds
    (eps, I1, I2, ratio) with

        I1 = eps * integral of (grad p . e1) exp(-(U - H)/eps),
        I2 = integral of (1 - p) (ell . e1) exp(-(U - H)/eps),
        ratio = (I1 - I2) / ((2 pi eps)^{d/2} omega),

    the factor exp(-H/eps) having been cancelled analytically on both
    sides.  The ratio must approach 1 along a decreasing ladder.

    density selects the Gibbs weight on the face: "harmonic" replaces U
    by its second-order Taylor model at the saddle, which is the form
    the limit statement actually evaluates and converges at rate
    O(delta); "exact" keeps U itself, which carries an extra
    exp(-c J^4 delta^4 / eps) deficit that vanishes only as
    eps log^2(1/eps) -> 0 and is far from 1 at moderate eps.
    """
    if density not in ("harmonic", "exact"):
        raise PreconditionViolationError("density must be harmonic or exact")
    if spec.dim != 2:
        raise PreconditionViolationError("face quadrature requires dimension 2")
    if saddle.kind != KIND_SADDLE:
        raise PreconditionViolationError("saddle must have index 1")
    eps_list = [float(e) for e in epsilon_ladder]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise PreconditionViolationError("epsilon ladder must be decreasing")
    omega, _, spectrum = ek_constant(saddle, spec)
    H = saddle.value
    rows = []
    for eps in eps_list:
        sbox = SaddleBox.build(saddle, spectrum, eps, J_box)
        e1 = sbox.axes[:, 0]
        e2 = sbox.axes[:, 1]
        base = sbox.center + sbox.half_widths[0] * e1

        def point(t):
            return base + t * e2

        def u_of_t(t):
            return float(spec.value(point(t)))

        def u_model(t):
            rel = point(t) - sbox.center
            return H + 0.5 * float(rel @ saddle.hessian @ rel)

        t_hi = _clip_to_cap(u_of_t, sbox.half_widths[1], sbox.level_cap)
        t_lo = -_clip_to_cap(lambda t: u_of_t(-t), sbox.half_widths[1],
                             sbox.level_cap)
        u_face = u_of_t if density == "exact" else u_model

        def weight(t):
            return math.exp(-(u_face(t) - H) / eps)

        root = math.sqrt(spectrum.mu / eps)
        v1 = float(spectrum.v @ e1)

        # both integrands pair a Gaussian tail ~exp(-z^2/2) against a
        # weight ~exp(+|U-H|/eps) of comparable magnitude; evaluate the
        # combined exponent in log space to avoid under/overflow
        def f1(t):
            x = point(t)
            z = float((x - sbox.center) @ spectrum.v) * root
            log_mag = -0.5 * z * z - 0.5 * math.log(2.0 * math.pi) \
                - (u_face(t) - H) / eps
            return v1 * root * math.exp(log_mag)

        def f2(t):
            x = point(t)
            z = float((x - sbox.center) @ spectrum.v) * root
            flux = float(spec.ell(x) @ e1)
            log_tail = float(log_ndtr(-z)) - (u_face(t) - H) / eps
            return flux * math.exp(log_tail)

        # exponent minimizer on the face; hint the adaptive quadrature
        lam = np.abs(spectrum.hessian_eigs)
        vt = spectrum.hessian_vecs.T @ spectrum.v
        t_star = -sbox.half_widths[0] * math.sqrt(lam[0]) * vt[1] / (vt[0] * lam[1])
        hints = [t_star] if t_lo < t_star < t_hi else None
        i1, err1 = integrate.quad(f1, t_lo, t_hi, epsabs=0.0, epsrel=1e-10,
                                  limit=_QUAD_LIMIT, points=hints)
        i2, err2 = integrate.quad(f2, t_lo, t_hi, epsabs=1e-300, epsrel=1e-10,
                                  limit=_QUAD_LIMIT, points=hints)
        if abs(err1) > 1e-8 * max(abs(i1), 1e-300):
            raise NumericFailureError("face quadrature did not converge")
        i1 *= eps
        alpha = (2.0 * math.pi * eps) ** (spec.dim / 2.0)
        rows.append((eps, i1, i2, (i1 - i2) / (alpha * omega)))
    return rows


def reduced_det_check(spectrum: SaddleSpectrum) -> float:
    """Relative mismatch in the reduced rank-one determinant identity.

    In the Hessian eigenbasis with v = (v_1, vt), both sides of
    det(diag(lam_2..lam_d) + mu vt vt^T) = mu v_1^2 / lam_1 * prod lam_k
    are evaluated; returns |lhs - rhs| / |rhs|.
    """
    if spectrum.dim < 2:
        raise PreconditionViolationError("needs dimension at least 2")
    vt_full = spectrum.hessian_vecs.T @ spectrum.v
    v1 = vt_full[0]
    vt = vt_full[1:]
    lams = spectrum.hessian_eigs
    lam1 = -lams[0]
    tail = lams[1:]
    lhs = float(np.linalg.det(np.diag(tail) + spectrum.mu * np.outer(vt, vt)))
    rhs = spectrum.mu * v1 ** 2 / lam1 * float(np.prod(tail))
    return abs(lhs - rhs) / abs(rhs)


def residual_ratio(spec: LandscapeSpec, saddle: CriticalPoint,
                   epsilon: float, J_box: float = DEFAULT_J_BOX,
                   grid: int = 201) -> float:
    """(integral of |L* p| exp(-(U-H)/eps) over the box) / (2 pi eps)^{d/2}.

    Riemann sum over the eigen-aligned box restricted to U below the
    level cap; decreases along a shrinking epsilon ladder when the
    profile solves the generator equation to leading order.
    """
    if spec.dim != 2:
        raise PreconditionViolationError("residual scan requires dimension 2")
    _, _, spectrum = ek_constant(saddle, spec)
    sbox = SaddleBox.build(saddle, spectrum, epsilon, J_box)
    t1 = np.linspace(-sbox.half_widths[0], sbox.half_widths[0], grid)
    t2 = np.linspace(-sbox.half_widths[1], sbox.half_widths[1], grid)
    h1 = t1[1] - t1[0]
    h2 = t2[1] - t2[0]
    g1, g2 = np.meshgrid(t1, t2, indexing="ij")
    pts = (sbox.center[None, :] + g1.reshape(-1, 1) * sbox.axes[:, 0]
           + g2.reshape(-1, 1) * sbox.axes[:, 1])
    u = spec.value(pts)
    mask = u < sbox.level_cap
    res = np.abs(adjoint_generator_on_profile(pts[mask], spec, spectrum,
                                              epsilon, sbox.center))
    w = np.exp(-(u[mask] - saddle.value) / epsilon)
    integral = float(np.sum(res * w)) * h1 * h2
    return integral / (2.0 * math.pi * epsilon) ** (spec.dim / 2.0)


def lateral_level_check(spec: LandscapeSpec, saddle: CriticalPoint,
                        epsilon: float, J_box: float = DEFAULT_J_BOX,
                        n: int = 256) -> bool:
    """True when the lateral box boundary stays above H + (5/4) J^2 delta^2."""
    _, _, spectrum = ek_constant(saddle, spec)
    sbox = SaddleBox.build(saddle, spectrum, epsilon, J_box)
    s = np.linspace(-sbox.half_widths[0], sbox.half_widths[0], n)
    floor = saddle.value + 1.25 * (J_box * sbox.delta) ** 2
    for sign in (1.0, -1.0):
        pts = (sbox.center[None, :] + s[:, None] * sbox.axes[:, 0]
               + sign * sbox.half_widths[1] * sbox.axes[:, 1][None, :])
        if np.any(spec.value(pts) < floor):
            return False
    return True


def face_partition_check(spec: LandscapeSpec, saddle: CriticalPoint,
                         epsilon: float, a: float,
                         J_box: float = DEFAULT_J_BOX, n: int = 512) -> bool:
    """Every sampled face point has (x-sigma).v >= a J delta or U >= H + a J^2 delta^2.

    Splits the outgoing face into a profile-dominated part and a
    high-level part; holds for small enough a on the benchmark.
    """
    _, _, spectrum = ek_constant(saddle, spec)
    sbox = SaddleBox.build(saddle, spectrum, epsilon, J_box)
    t = np.linspace(-sbox.half_widths[1], sbox.half_widths[1], n)
    pts = (sbox.center[None, :] + sbox.half_widths[0] * sbox.axes[:, 0]
           + t[:, None] * sbox.axes[:, 1][None, :])
    u = spec.value(pts)
    on_face = u < sbox.level_cap
    s = (pts - sbox.center) @ spectrum.v
    good = (s >= a * J_box * sbox.delta) | \
        (u >= saddle.value + a * (J_box * sbox.delta) ** 2)
    return bool(np.all(good[on_face]))


def asymptotics_csv(rows, omega: float, epsilon_dim: int = 2) -> str:
    """CSV rendering (eps, I1, I2, I1-I2, alpha*omega, ratio)."""
    lines = ["epsilon,I1,I2,I1_minus_I2,alpha_omega,ratio"]
    for eps, i1, i2, ratio in rows:
        alpha_omega = (2.0 * math.pi * eps) ** (epsilon_dim / 2.0) * omega
        lines.append(f"{eps:.17g},{i1:.17g},{i2:.17g},{i1 - i2:.17g},"
                     f"{alpha_omega:.17g},{ratio:.17g}")
    return "\n".join(lines) + "\n"
