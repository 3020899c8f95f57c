"""Transition-rate constants and mean-time predictions.

Assembles, from a valley decomposition, the per-gate rate constants

    omega     = mu / (2 pi sqrt(-det H)),
    omega_rev = lambda_1 / (2 pi sqrt(-det H)),

their sums over the gate set, the well-depth prefactor nu0, and the
predicted mean transition time nu0/omega0 * exp((H - h0)/eps).  The
reversible prediction uses omega0_rev in place of omega0; their ratio
is the speedup obtained from the orthogonal drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ModelInconsistencyError,
    NumericFailureError,
    PreconditionViolationError,
)
from .landscape import LandscapeSpec
from .spectral import SaddleSpectrum, sym_eig
from .topology import KIND_SADDLE, CriticalPoint, ValleyStructure

DEFAULT_EPSILONS = (0.15, 0.12, 0.10, 0.08)

# heuristic error-band constant in C * sqrt(eps) * log(1/eps); the
# asymptotic theory fixes the order but not the constant
ERROR_BAND_C = 1.0


def _neg_det_sqrt(hessian_eigs) -> float:
    """sqrt(-det H) for an index-1 Hessian, from its eigenvalue product."""
    w = np.asarray(hessian_eigs, float)
    if np.count_nonzero(w < 0) != 1:
        raise PreconditionViolationError(
            "Hessian must have exactly one negative eigenvalue")
    neg_det = -float(np.prod(w))
    if neg_det <= 0.0:
        raise NumericFailureError("-det H is not positive at the saddle")
    return math.sqrt(neg_det)


def ek_constant(saddle: CriticalPoint, spec: LandscapeSpec):
    """Rate constants (omega, omega_rev, spectrum) of an index-1 saddle.

    omega uses the magnitude mu of the unique negative eigenvalue of
    H + L, where L is the drift Jacobian of ell at the saddle; omega_rev
    uses the Hessian eigenvalue lambda_1 instead.  Raises
    ModelInconsistencyError if H L is not skew-symmetric there, which
    means ell is not orthogonal to grad U to second order.
    """
    if saddle.kind != KIND_SADDLE:
        raise PreconditionViolationError("saddle must have index 1")
    H = saddle.hessian
    L = saddle.ell_jac
    HL = H @ L
    scale = max(1.0, float(np.abs(HL).max()))
    if np.max(np.abs(HL + HL.T)) > 1e-8 * scale:
        raise ModelInconsistencyError(
            f"H L is not skew-symmetric at the saddle {saddle.location.tolist()}; "
            "the drift field breaks the orthogonality structure there")
    spectrum = SaddleSpectrum.from_matrices(H, L)
    root = _neg_det_sqrt(spectrum.hessian_eigs)
    omega = spectrum.mu / (2.0 * math.pi * root)
    omega_rev = spectrum.lambda1 / (2.0 * math.pi * root)
    return omega, omega_rev, spectrum


@dataclass(frozen=True, eq=False)
class SaddleRecord:
    """Per-gate constants entering the prediction."""

    saddle: CriticalPoint
    spectrum: SaddleSpectrum
    omega: float
    omega_rev: float

    def to_dict(self):
        return {
            "location": self.saddle.location.tolist(),
            "value": self.saddle.value,
            "lambda1": self.spectrum.lambda1,
            "mu": self.spectrum.mu,
            "omega": self.omega,
            "omega_rev": self.omega_rev,
        }


@dataclass(frozen=True, eq=False)
class EKPrediction:
    """Assembled prediction for the mean transition time out of a valley."""

    records: tuple          # SaddleRecord per gate saddle
    omega0: float           # sum of omega over the gate set
    omega0_rev: float       # sum of omega_rev over the gate set
    nu0: float              # sum of 1/sqrt(det H^m) over the deepest minima
    exponent: float         # H - h0

    def mean_time(self, epsilon: float) -> float:
        return self.nu0 / self.omega0 * math.exp(self.exponent / epsilon)

    def mean_time_rev(self, epsilon: float) -> float:
        return self.nu0 / self.omega0_rev * math.exp(self.exponent / epsilon)

    @property
    def speedup(self) -> float:
        return self.omega0 / self.omega0_rev

    def error_band(self, epsilon: float) -> float:
        """Heuristic relative error C sqrt(eps) log(1/eps); order-only guide."""
        return ERROR_BAND_C * math.sqrt(epsilon) * math.log(1.0 / epsilon)

    def table(self, epsilons):
        """Rows of (eps, predicted, predicted_rev, speedup) for reports."""
        return [(float(e), self.mean_time(e), self.mean_time_rev(e), self.speedup)
                for e in epsilons]

    def to_dict(self, epsilons=DEFAULT_EPSILONS):
        return {
            "saddles": [r.to_dict() for r in self.records],
            "omega0": self.omega0,
            "omega0_rev": self.omega0_rev,
            "nu0": self.nu0,
            "exponent": self.exponent,
            "speedup": self.speedup,
            "per_epsilon": [
                {"epsilon": e, "mean_time": t, "mean_time_rev": tr,
                 "error_band": self.error_band(e)}
                for e, t, tr, _ in self.table(epsilons)
            ],
        }


def predict(vs: ValleyStructure, spec: LandscapeSpec,
            epsilon_list=DEFAULT_EPSILONS) -> EKPrediction:
    """Mean-time prediction from a valley decomposition.

    Sums the gate rate constants into omega0 and the deepest-minima
    prefactors into nu0.  In the single-well single-gate case the result
    is cross-checked against the closed form
    2 pi / mu * sqrt(-det H_saddle / det H_min) * exp((H - h0)/eps),
    which must agree to 1e-12 relative.
    """
    if not vs.gates:
        raise PreconditionViolationError("valley structure has an empty gate set")
    records = []
    for gate in vs.gates:
        omega, omega_rev, spectrum = ek_constant(gate.point, spec)
        records.append(SaddleRecord(saddle=gate.point, spectrum=spectrum,
                                    omega=omega, omega_rev=omega_rev))
    omega0 = math.fsum(r.omega for r in records)
    omega0_rev = math.fsum(r.omega_rev for r in records)
    nu0_terms = []
    for m in vs.deepest:
        w, _ = sym_eig(m.hessian)
        det = float(np.prod(w))
        if det <= 0.0:
            raise NumericFailureError("minimum Hessian is not positive definite")
        nu0_terms.append(1.0 / math.sqrt(det))
    nu0 = math.fsum(nu0_terms)
    pred = EKPrediction(records=tuple(records), omega0=omega0,
                        omega0_rev=omega0_rev, nu0=nu0, exponent=vs.exponent)

    if len(vs.minima_home) == 1 and len(records) == 1:
        r = records[0]
        wmin, _ = sym_eig(vs.m0.hessian)
        closed = (2.0 * math.pi / r.spectrum.mu
                  * math.sqrt(-r.spectrum.det_hessian / float(np.prod(wmin))))
        for eps in epsilon_list:
            a = pred.mean_time(eps)
            b = closed * math.exp(pred.exponent / eps)
            if abs(a - b) > 1e-12 * abs(b):
                raise NumericFailureError(
                    "prediction disagrees with the single-gate closed form")
    return pred
