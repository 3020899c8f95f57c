"""Critical-point location and valley decomposition of sublevel sets.

Finds and classifies critical points by Newton iteration from a seed
grid, then splits the sublevel set {U < H} into the component containing
the starting minimum and everything else, identifying the index-1 gate
saddles on the shared boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    ConfigError,
    DegenerateCriticalPointError,
    GateNotFoundError,
    InconsistentLevelError,
    UnreachableTargetError,
)
from .landscape import LandscapeSpec, eval_ell_jacobian
from .spectral import sym_eig

KIND_MINIMUM = "minimum"
KIND_SADDLE = "saddle_index_1"
KIND_OTHER = "other_index_k"

_DEFAULT_CELLS = {1: 2000, 2: 400, 3: 96}


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    """A non-degenerate critical point of U with its local data."""

    location: np.ndarray
    kind: str
    hessian: np.ndarray
    value: float
    ell_jac: np.ndarray
    index: int  # number of negative Hessian eigenvalues

    def hessian_eigs(self):
        w, _ = sym_eig(self.hessian)
        return w

    def to_dict(self):
        return {
            "location": self.location.tolist(),
            "kind": self.kind,
            "value": self.value,
            "index": self.index,
            "hessian_eigs": self.hessian_eigs().tolist(),
            "hessian": self.hessian.tolist(),
            "ell_jac": self.ell_jac.tolist(),
        }


def _classify(index: int) -> str:
    if index == 0:
        return KIND_MINIMUM
    if index == 1:
        return KIND_SADDLE
    return KIND_OTHER


def find_critical_points(spec: LandscapeSpec, box, seeds_per_axis: int = 8):
    """Newton search for grad U = 0 from a regular seed grid.

    Diverging seeds are dropped silently; converged points are
    deduplicated and classified by Hessian signature.  A located point
    with |det hess| < 1e-8 raises DegenerateCriticalPointError.
    """
    if seeds_per_axis < 4:
        raise ConfigError("seeds_per_axis must be at least 4")
    box = np.asarray(box, float)
    d = spec.dim
    if box.shape != (d, 2):
        raise ConfigError(f"box must be shape ({d}, 2)")
    diam = float(np.linalg.norm(box[:, 1] - box[:, 0]))
    axes = [np.linspace(box[i, 0], box[i, 1], seeds_per_axis) for i in range(d)]
    seeds = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    margin = 0.05 * (box[:, 1] - box[:, 0])
    found: list[np.ndarray] = []
    dedup = 1e-6 * diam
    for x0 in seeds:
        x = x0.copy()
        ok = False
        for _ in range(80):
            g = spec.grad(x)
            if not np.all(np.isfinite(g)):
                break
            if np.linalg.norm(g) < 1e-12 * (1.0 + abs(float(spec.value(x)))):
                ok = True
                break
            h = spec.hess(x)
            try:
                step = np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)) or np.linalg.norm(step) > 10.0 * diam:
                break
            x = x - step
            if np.linalg.norm(x) > 100.0 * (1.0 + diam):
                break
        if not ok:
            continue
        if np.any(x < box[:, 0] - margin) or np.any(x > box[:, 1] + margin):
            continue
        if any(np.linalg.norm(x - p) < dedup for p in found):
            continue
        found.append(x)
    crits = []
    for x in found:
        h = spec.hess(x)
        w, _ = sym_eig(h)
        det = float(np.prod(w))
        if abs(det) < 1e-8:
            raise DegenerateCriticalPointError(
                f"critical point at {x.tolist()} has |det hess| = {abs(det):.3e} < 1e-8",
                x=x, det=det)
        index = int(np.count_nonzero(w < 0))
        crits.append(CriticalPoint(
            location=x, kind=_classify(index), hessian=h,
            value=float(spec.value(x)), ell_jac=eval_ell_jacobian(spec, x),
            index=index))
    crits.sort(key=lambda c: (c.value, tuple(c.location)))
    return crits


@dataclass(frozen=True, eq=False)
class GateSaddle:
    """A gate saddle with its unstable direction oriented toward the home valley."""

    point: CriticalPoint
    e1: np.ndarray            # unit unstable direction, home side is +e1
    far_label: int            # grid component label of the valley it opens into

    def to_dict(self):
        return {"point": self.point.to_dict(), "e1": self.e1.tolist(),
                "far_label": self.far_label}


@dataclass(frozen=True, eq=False)
class ValleyStructure:
    """Decomposition of {U < H} around a starting minimum."""

    level: float
    m0: CriticalPoint
    gates: tuple            # GateSaddle tuple; the gate set at level H
    minima_home: tuple      # minima in the component containing m0
    minima_far: tuple       # minima in the other components
    far_labels: tuple       # component label per far minimum
    deepest: tuple          # home minima at depth h0
    h0: float
    box: np.ndarray
    cells: int
    spacing: np.ndarray

    @property
    def exponent(self) -> float:
        return self.level - self.h0

    def to_dict(self):
        return {
            "level": self.level,
            "m0": self.m0.to_dict(),
            "gates": [g.to_dict() for g in self.gates],
            "minima_home": [c.to_dict() for c in self.minima_home],
            "minima_far": [c.to_dict() for c in self.minima_far],
            "far_labels": list(self.far_labels),
            "deepest": [c.to_dict() for c in self.deepest],
            "h0": self.h0,
            "exponent": self.exponent,
            "grid": {"box": self.box.tolist(), "cells": self.cells,
                     "spacing": self.spacing.tolist()},
        }


def default_box(crits, pad: float = 0.75) -> np.ndarray:
    """Bounding box of the critical points, padded on every side."""
    locs = np.stack([c.location for c in crits])
    lo = locs.min(axis=0)
    hi = locs.max(axis=0)
    span = np.maximum(hi - lo, 1.0)
    return np.stack([lo - pad * span, hi + pad * span], axis=1)


def _cell_index(p, lo, h, cells):
    idx = np.floor((p - lo) / h).astype(int)
    return tuple(np.clip(idx, 0, cells - 1))


def build_valley_structure(spec: LandscapeSpec, crits, m0: CriticalPoint,
                           H: float, grid: int | None = None,
                           box=None) -> ValleyStructure:
    """Flood-fill decomposition of {U < H} on a uniform grid.

    Connected components are computed over face-adjacent cells whose
    center value lies below H.  Cells within three cells of a level-H
    saddle are excluded from the labeling so that components cannot leak
    through the pinch at the gate; gate membership itself is decided by
    probing along the unstable direction just outside that exclusion
    zone.
    """
    d = spec.dim
    if d > 3:
        raise ConfigError("valley construction supports dimension <= 3")
    if m0.kind != KIND_MINIMUM:
        raise ConfigError("m0 must be a minimum")
    if not m0.value < H:
        raise InconsistentLevelError(
            f"level H = {H} is not above U(m0) = {m0.value}")
    cells = int(grid) if grid else _DEFAULT_CELLS[d]
    box = np.asarray(box, float) if box is not None else default_box(crits)
    lo = box[:, 0]
    h = (box[:, 1] - box[:, 0]) / cells
    hmax = float(h.max())

    ltol = 1e-7 * (1.0 + abs(H))
    level_saddles = [c for c in crits
                     if c.kind == KIND_SADDLE and abs(c.value - H) <= ltol]
    # generic-level guard: a non-gate critical value sitting exactly at H
    for c in crits:
        if all(c is not s for s in level_saddles) and abs(c.value - H) <= ltol:
            warnings.warn("critical value ties the level; shifting H by 1e-9")
            H = H + 1e-9
            break

    axes = [lo[i] + (np.arange(cells) + 0.5) * h[i] for i in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    values = spec.value(mesh.reshape(-1, d)).reshape(mesh.shape[:-1])
    mask = values < H
    # punch out the saddle pinch so grid adjacency cannot jump the ridge
    for s in level_saddles:
        dist2 = np.sum((mesh - s.location) ** 2, axis=-1)
        mask &= dist2 > (3.0 * hmax) ** 2
    labels, _ = ndimage.label(mask)

    home = labels[_cell_index(m0.location, lo, h, cells)]
    if home == 0:
        raise InconsistentLevelError(
            "starting minimum does not fall in any sublevel component at this level")

    minima = [c for c in crits if c.kind == KIND_MINIMUM and c.value < H]
    minima_home, minima_far, far_labels = [], [], []
    for m in minima:
        lab = labels[_cell_index(m.location, lo, h, cells)]
        if lab == home:
            minima_home.append(m)
        elif lab > 0:
            minima_far.append(m)
        m_is_m0 = np.allclose(m.location, m0.location)
        if lab == 0 and not m_is_m0:
            warnings.warn(f"minimum at {m.location.tolist()} not labeled; grid too coarse?")
        if lab != home and lab > 0:
            far_labels.append(int(lab))

    gates = []
    for s in level_saddles:
        w, V = sym_eig(s.hessian)
        e1 = V[:, 0]
        lab_plus = lab_minus = 0
        r = 2.0 * hmax
        while r <= 8.0 * hmax and (lab_plus == 0 or lab_minus == 0):
            if lab_plus == 0:
                lab_plus = labels[_cell_index(s.location + r * e1, lo, h, cells)]
            if lab_minus == 0:
                lab_minus = labels[_cell_index(s.location - r * e1, lo, h, cells)]
            r += hmax
        if lab_plus == 0 or lab_minus == 0 or lab_plus == lab_minus:
            continue
        if home not in (lab_plus, lab_minus):
            continue
        if lab_plus != home:
            e1 = -e1
            lab_plus, lab_minus = lab_minus, lab_plus
        gates.append(GateSaddle(point=s, e1=e1, far_label=int(lab_minus)))

    h0 = min(m.value for m in minima_home)
    deepest = tuple(m for m in minima_home
                    if m.value <= h0 + 1e-8 * (1.0 + abs(h0)))
    if not gates:
        raise GateNotFoundError(
            "no gate saddle joins the start component to any other component at "
            f"level {H}; transitions out of this valley are asymptotically slower "
            f"than exp((H - h0)/eps) with h0 = {h0}; raise the level")
    return ValleyStructure(
        level=float(H), m0=m0, gates=tuple(gates),
        minima_home=tuple(minima_home), minima_far=tuple(minima_far),
        far_labels=tuple(far_labels), deepest=deepest, h0=float(h0),
        box=box, cells=cells, spacing=h)


def auto_gate_level(spec: LandscapeSpec, crits, m0: CriticalPoint, targets,
                    grid: int | None = None, box=None) -> float:
    """Smallest saddle level at which every target minimum becomes reachable.

    Scans the index-1 saddle values above U(m0) in ascending order and
    returns the first level whose valley structure has a non-empty gate
    set with all targets among the far minima.
    """
    targets = [np.asarray(t, float) for t in targets]
    if not targets:
        raise ConfigError("targets must be non-empty")
    locs = np.stack([c.location for c in crits])
    match_tol = 1e-5 * (1.0 + float(np.ptp(locs)))
    candidates = sorted({c.value for c in crits
                         if c.kind == KIND_SADDLE and c.value > m0.value})
    for Hc in candidates:
        try:
            vs = build_valley_structure(spec, crits, m0, Hc, grid=grid, box=box)
        except (GateNotFoundError, InconsistentLevelError):
            continue
        gated = {g.far_label for g in vs.gates}
        far = [m.location for m, lab in zip(vs.minima_far, vs.far_labels)
               if lab in gated]
        if all(any(np.linalg.norm(t - f) <= match_tol for f in far) for t in targets):
            return float(Hc)
    raise UnreachableTargetError(
        "no saddle level above the start makes every target a far minimum")
