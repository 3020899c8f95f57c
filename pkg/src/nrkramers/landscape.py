"""Potential landscapes and the orthogonal drift field.

A landscape bundles a smooth potential U with a skew-symmetric matrix
generator J.  The extra drift is ell(x) = J(U(x)) grad U(x), which is
orthogonal to grad U and divergence-free by construction, so adding it
to the gradient descent drift leaves the Gibbs density exp(-U/eps)
invariant while breaking reversibility.

All evaluation callables are vectorized: a point is shape (d,), a batch
is shape (n, d).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, EvaluationError

_FD_CUBE = float(np.finfo(float).eps) ** (1.0 / 3.0)


# ---------------------------------------------------------------------------
# potentials


class Potential:
    """Interface: value/grad/hess, all accepting (d,) or (n, d) arrays."""

    dim: int

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class PolynomialPotential(Potential):
    """U(x) = sum_t c_t * prod_i x_i**k_{t,i}, given as [[c, [k_1..k_d]], ...]."""

    def __init__(self, terms, dim=None):
        if not terms:
            raise ConfigError("polynomial potential needs at least one term")
        self.terms = [(float(c), tuple(int(k) for k in ks)) for c, ks in terms]
        d = len(self.terms[0][1])
        if dim is not None and dim != d:
            raise ConfigError(f"dim {dim} inconsistent with exponent vectors of length {d}")
        if any(len(ks) != d for _, ks in self.terms):
            raise ConfigError("all exponent vectors must have the same length")
        if any(k < 0 for _, ks in self.terms for k in ks):
            raise ConfigError("exponents must be non-negative")
        self.dim = d
        self._coef = np.array([c for c, _ in self.terms])
        self._expo = np.array([ks for _, ks in self.terms])  # (T, d)

    def _powers(self, x, expo):
        # x: (..., d), expo: (T, d) -> (..., T)
        return np.prod(np.power(x[..., None, :], expo), axis=-1)

    def value(self, x):
        x = np.asarray(x, float)
        return self._powers(x, self._expo) @ self._coef

    def grad(self, x):
        x = np.asarray(x, float)
        out = np.zeros_like(x)
        for i in range(self.dim):
            mask = self._expo[:, i] > 0
            if not mask.any():
                continue
            e = self._expo[mask].copy()
            c = self._coef[mask] * e[:, i]
            e[:, i] -= 1
            out[..., i] = self._powers(x, e) @ c
        return out

    def hess(self, x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                if i == j:
                    mask = self._expo[:, i] > 1
                    if not mask.any():
                        continue
                    e = self._expo[mask].copy()
                    c = self._coef[mask] * e[:, i] * (e[:, i] - 1)
                    e[:, i] -= 2
                else:
                    mask = (self._expo[:, i] > 0) & (self._expo[:, j] > 0)
                    if not mask.any():
                        continue
                    e = self._expo[mask].copy()
                    c = self._coef[mask] * e[:, i] * e[:, j]
                    e[:, i] -= 1
                    e[:, j] -= 1
                h = self._powers(x, e) @ c
                out[..., i, j] = h
                out[..., j, i] = h
        return out

    def to_dict(self):
        return {"kind": "polynomial", "terms": [[c, list(ks)] for c, ks in self.terms]}


class DoubleWell1D(Potential):
    """U(x) = (x^2 - 1)^2 / 4."""

    dim = 1
    name = "doublewell1d"

    def value(self, x):
        x = np.asarray(x, float)
        return (x[..., 0] ** 2 - 1.0) ** 2 / 4.0

    def grad(self, x):
        x = np.asarray(x, float)
        g = np.empty_like(x)
        g[..., 0] = x[..., 0] ** 3 - x[..., 0]
        return g

    def hess(self, x):
        x = np.asarray(x, float)
        h = np.empty(x.shape[:-1] + (1, 1))
        h[..., 0, 0] = 3.0 * x[..., 0] ** 2 - 1.0
        return h

    def to_dict(self):
        return {"kind": "builtin", "name": self.name}


class DoubleWell2D(Potential):
    """U(x, y) = (x^2 - 1)^2 / 4 + y^2 / 2.

    Minima at (+-1, 0) with Hessian diag(2, 1); index-1 saddle at the
    origin with Hessian diag(-1, 1) and barrier height 1/4.
    """

    dim = 2
    name = "doublewell2d"

    def value(self, x):
        x = np.asarray(x, float)
        return (x[..., 0] ** 2 - 1.0) ** 2 / 4.0 + x[..., 1] ** 2 / 2.0

    def grad(self, x):
        x = np.asarray(x, float)
        g = np.empty_like(x)
        g[..., 0] = x[..., 0] ** 3 - x[..., 0]
        g[..., 1] = x[..., 1]
        return g

    def hess(self, x):
        x = np.asarray(x, float)
        h = np.zeros(x.shape[:-1] + (2, 2))
        h[..., 0, 0] = 3.0 * x[..., 0] ** 2 - 1.0
        h[..., 1, 1] = 1.0
        return h

    def to_dict(self):
        return {"kind": "builtin", "name": self.name}


def _triple_well_2d() -> PolynomialPotential:
    """U(x, y) = x^2 (x^2 - 4)^2 / 16 + x / 20 + y^2 / 2.

    Three minima near x = -2, 0, 2 (depths split by the linear tilt) and
    two index-1 saddles near x = -+ 2/sqrt(3) at distinct heights, the
    lower gate on the left.  All critical points are non-degenerate.
    """
    terms = [
        [1.0 / 16.0, [6, 0]],
        [-0.5, [4, 0]],
        [1.0, [2, 0]],
        [0.05, [1, 0]],
        [0.5, [0, 2]],
    ]
    return PolynomialPotential(terms)


class QuadraticPotential(Potential):
    """U(x) = |x|^2 / 2; single minimum at the origin."""

    def __init__(self, dim):
        self.dim = int(dim)

    def value(self, x):
        x = np.asarray(x, float)
        return 0.5 * np.sum(x * x, axis=-1)

    def grad(self, x):
        return np.asarray(x, float).copy()

    def hess(self, x):
        x = np.asarray(x, float)
        h = np.zeros(x.shape[:-1] + (self.dim, self.dim))
        idx = np.arange(self.dim)
        h[..., idx, idx] = 1.0
        return h

    def to_dict(self):
        return {"kind": "builtin", "name": f"quadratic{self.dim}d"}


_BUILTIN_POTENTIALS = {
    "doublewell1d": DoubleWell1D,
    "doublewell2d": DoubleWell2D,
    "triplewell2d": _triple_well_2d,
    "quadratic1d": lambda: QuadraticPotential(1),
    "quadratic2d": lambda: QuadraticPotential(2),
    "quadratic3d": lambda: QuadraticPotential(3),
}


# ---------------------------------------------------------------------------
# skew generators


class SkewGenerator:
    """J: R -> skew-symmetric d x d matrices, with scalar derivative J'."""

    def matrix(self, u: float) -> np.ndarray:
        raise NotImplementedError

    def deriv(self, u: float) -> np.ndarray:
        raise NotImplementedError

    def apply(self, u, g):
        """Vectorized J(u) g for u of shape (...,) and g of shape (..., d)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_skew(entries, tol=1e-12):
    m = np.asarray(entries, float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError("skew generator entries must form a square matrix")
    if np.max(np.abs(m + m.T)) > tol:
        raise ConfigError("skew generator entries are not skew-symmetric")
    return m


class ConstantSkew(SkewGenerator):
    def __init__(self, entries, validate=True):
        self.entries = _check_skew(entries) if validate else np.asarray(entries, float)

    def matrix(self, u):
        return self.entries

    def deriv(self, u):
        return np.zeros_like(self.entries)

    def apply(self, u, g):
        return g @ self.entries.T

    def to_dict(self):
        return {"kind": "constant", "entries": self.entries.tolist()}


class ScalarPolySkew(SkewGenerator):
    """J(u) = p(u) * E for a fixed skew matrix E and polynomial p."""

    def __init__(self, entries, coeffs, validate=True):
        self.entries = _check_skew(entries) if validate else np.asarray(entries, float)
        self.coeffs = np.asarray(coeffs, float)
        if self.coeffs.ndim != 1 or self.coeffs.size == 0:
            raise ConfigError("scalar_poly skew needs a non-empty coefficient list")

    def _p(self, u):
        return np.polynomial.polynomial.polyval(u, self.coeffs)

    def _dp(self, u):
        if self.coeffs.size == 1:
            return np.zeros_like(np.asarray(u, float))
        return np.polynomial.polynomial.polyval(u, np.polynomial.polynomial.polyder(self.coeffs))

    def matrix(self, u):
        return float(self._p(u)) * self.entries

    def deriv(self, u):
        return float(self._dp(u)) * self.entries

    def apply(self, u, g):
        return np.asarray(self._p(u))[..., None] * (g @ self.entries.T)

    def to_dict(self):
        return {"kind": "scalar_poly", "entries": self.entries.tolist(),
                "coeffs": self.coeffs.tolist()}


def zero_skew(dim: int) -> ConstantSkew:
    return ConstantSkew(np.zeros((dim, dim)))


def rotation_skew(amplitude: float = 1.0) -> ConstantSkew:
    """The 2-d generator [[0, a], [-a, 0]]."""
    return ConstantSkew([[0.0, amplitude], [-amplitude, 0.0]])


# ---------------------------------------------------------------------------
# landscape spec


@dataclass(frozen=True)
class LandscapeSpec:
    """Immutable bundle of potential and skew generator.

    The drift correction is ell(x) = J(U(x)) grad U(x); its Jacobian is
    D ell = (J'(U) grad U) (x) grad U + J(U) hess U, both analytic.
    """

    name: str
    dim: int
    potential: Potential
    skew: SkewGenerator = field(default=None)

    def __post_init__(self):
        if self.dim != self.potential.dim:
            raise ConfigError("spec dim does not match potential dim")
        if self.skew is None:
            object.__setattr__(self, "skew", zero_skew(self.dim))
        if self.skew.matrix(0.0).shape != (self.dim, self.dim):
            raise ConfigError("skew generator size does not match dim")

    # -- scalar / batch evaluation ------------------------------------------

    def value(self, x):
        return self.potential.value(x)

    def grad(self, x):
        return self.potential.grad(x)

    def hess(self, x):
        return self.potential.hess(x)

    def ell(self, x):
        """Vectorized ell(x) = J(U(x)) grad U(x)."""
        x = np.asarray(x, float)
        return self.skew.apply(self.value(x), self.grad(x))

    def ell_jacobian(self, x):
        return eval_ell_jacobian(self, x)

    def with_skew(self, skew: SkewGenerator) -> "LandscapeSpec":
        return LandscapeSpec(self.name, self.dim, self.potential, skew)

    # -- serialization -------------------------------------------------------

    def to_dict(self):
        return {
            "name": self.name,
            "dim": self.dim,
            "potential": self.potential.to_dict(),
            "skew": self.skew.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LandscapeSpec":
        try:
            name = doc["name"]
            dim = int(doc["dim"])
            pot_doc = doc["potential"]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"landscape document missing field: {exc}") from exc
        kind = pot_doc.get("kind")
        if kind == "builtin":
            bname = pot_doc.get("name")
            if bname not in _BUILTIN_POTENTIALS:
                raise ConfigError(f"unknown builtin potential {bname!r}")
            potential = _BUILTIN_POTENTIALS[bname]()
        elif kind == "polynomial":
            potential = PolynomialPotential(pot_doc.get("terms", []), dim=dim)
        else:
            raise ConfigError(f"unknown potential kind {kind!r}")
        skew_doc = doc.get("skew")
        if skew_doc is None:
            skew = zero_skew(dim)
        else:
            skind = skew_doc.get("kind")
            # defer skew-symmetry checking to the certificate so a bad
            # generator surfaces as a model failure, not a parse error
            if skind == "constant":
                skew = ConstantSkew(skew_doc["entries"], validate=False)
            elif skind == "scalar_poly":
                skew = ScalarPolySkew(skew_doc["entries"], skew_doc["coeffs"],
                                      validate=False)
            else:
                raise ConfigError(f"unknown skew kind {skind!r}")
        return cls(name=name, dim=dim, potential=potential, skew=skew)

    @classmethod
    def from_json(cls, path) -> "LandscapeSpec":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(doc)


def catalog(skew_amplitude: float = 1.0) -> dict:
    """Bundled example landscapes, keyed by name.

    1-d entries carry the (only possible) zero skew; 2-d entries carry the
    constant rotation generator scaled by ``skew_amplitude``.
    """
    entries = {}
    for name in ("doublewell1d", "doublewell2d", "triplewell2d"):
        potential = _BUILTIN_POTENTIALS[name]()
        if potential.dim == 2 and skew_amplitude != 0.0:
            skew = rotation_skew(skew_amplitude)
        else:
            skew = zero_skew(potential.dim)
        entries[name] = LandscapeSpec(name=name, dim=potential.dim,
                                      potential=potential, skew=skew)
    return entries


# ---------------------------------------------------------------------------
# operations


def eval_ell(spec: LandscapeSpec, x) -> np.ndarray:
    """ell(x) = J(U(x)) grad U(x) at a single point."""
    x = np.asarray(x, float)
    u = spec.value(x)
    g = spec.grad(x)
    if not np.isfinite(u) or not np.all(np.isfinite(g)):
        raise EvaluationError(f"potential or gradient not finite at {x.tolist()}", x=x)
    return spec.skew.matrix(float(u)) @ g


def eval_ell_jacobian(spec: LandscapeSpec, x) -> np.ndarray:
    """D ell(x) = (J'(U) grad U) (x) grad U + J(U) hess U, analytic."""
    x = np.asarray(x, float)
    u = spec.value(x)
    g = spec.grad(x)
    if not np.isfinite(u) or not np.all(np.isfinite(g)):
        raise EvaluationError(f"potential or gradient not finite at {x.tolist()}", x=x)
    h = spec.hess(x)
    return np.outer(spec.skew.deriv(float(u)) @ g, g) + spec.skew.matrix(float(u)) @ h


@dataclass(frozen=True, eq=False)
class OrthogonalityReport:
    """Certificate for grad U . ell = 0 and div ell = 0 over a probe set."""

    max_dot: float
    max_div: float
    passed: bool
    worst_dot_point: np.ndarray
    worst_div_point: np.ndarray
    n_probes: int

    def to_dict(self):
        return {
            "max_abs_grad_dot_ell": self.max_dot,
            "max_abs_div_ell": self.max_div,
            "passed": self.passed,
            "worst_dot_point": self.worst_dot_point.tolist(),
            "worst_div_point": self.worst_div_point.tolist(),
            "n_probes": self.n_probes,
        }


def probe_points(box, n: int = 256) -> np.ndarray:
    """Deterministic quasi-random probes (unscrambled Halton) in a box."""
    box = np.asarray(box, float)
    d = box.shape[0]
    sampler = qmc.Halton(d=d, scramble=False)
    unit = sampler.random(n)
    return box[:, 0] + unit * (box[:, 1] - box[:, 0])


def certify_orthogonality(spec: LandscapeSpec, probes) -> OrthogonalityReport:
    """Check grad U . ell and trace(D ell) against 1e-10 (1 + |grad U|^2)."""
    probes = np.atleast_2d(np.asarray(probes, float))
    if probes.size == 0:
        raise ConfigError("probe set must be non-empty")
    dots = np.empty(len(probes))
    divs = np.empty(len(probes))
    bounds = np.empty(len(probes))
    for i, x in enumerate(probes):
        g = spec.grad(x)
        dots[i] = abs(float(g @ eval_ell(spec, x)))
        divs[i] = abs(float(np.trace(eval_ell_jacobian(spec, x))))
        bounds[i] = 1e-10 * (1.0 + float(g @ g))
    passed = bool(np.all(dots <= bounds) and np.all(divs <= bounds))
    return OrthogonalityReport(
        max_dot=float(dots.max()),
        max_div=float(divs.max()),
        passed=passed,
        worst_dot_point=probes[int(dots.argmax())],
        worst_div_point=probes[int(divs.argmax())],
        n_probes=len(probes),
    )


# ---------------------------------------------------------------------------
# finite-difference helpers (certificates and test oracles)


def fd_grad(f, x, h=None):
    """Central-difference gradient with per-coordinate step eps^(1/3) (1+|x|)."""
    x = np.asarray(x, float)
    if h is None:
        h = _FD_CUBE * (1.0 + float(np.linalg.norm(x)))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def fd_jacobian(f, x, h=None):
    """Central-difference Jacobian of a vector field."""
    x = np.asarray(x, float)
    if h is None:
        h = _FD_CUBE * (1.0 + float(np.linalg.norm(x)))
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e), float) - np.asarray(f(x - e), float)) / (2.0 * h))
    return np.stack(cols, axis=-1)
