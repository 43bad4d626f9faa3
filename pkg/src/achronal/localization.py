"""Localization probabilities as fluxes through achronal surface regions.

The probability of finding the state in a region (graph of tau restricted
to a spatial mask) is the flux

    p = integral over mask of (J0(tau(x), x) - J(tau(x), x).grad tau(x)) d^3x,

realized as a Riemann sum over the conjugate position grid.  Quadrature
nodes are grouped by surface time: the current is evaluated on uniformly
spaced time slices (FFT fast path) and interpolated cubically in time at
each node's tau, which exploits that the current's time spectrum is bounded
by max |eps(k) - eps(p)| over the packet support.

Masks are exact predicates evaluated at nodes; because the position grid is
cell-centered, strict half-space and octant predicates partition nodes
without boundary ties.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .currents import CurrentSpec, FastBackend, build_fast
from .grids import position_window_mask
from .minkowski import PoincareElement
from .surfaces import (AchronalSurface, FlatSurface, SurfaceTransformResult,
                       transform_surface)
from .wavepacket import WavePacket, combine


class MaskOverlapError(ValueError):
    """Partition masks intersect on quadrature nodes."""


class UnsupportedGeometryError(ValueError):
    """No closed-form causal shadow for this mask."""


# ---------------------------------------------------------------------------
# spatial masks
# ---------------------------------------------------------------------------


class Mask:
    def contains(self, pts):
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def label(self) -> str:
        return json.dumps(self.descriptor(), separators=(",", ":"))


@dataclass(frozen=True)
class FullMask(Mask):
    def contains(self, pts):
        return np.ones(np.asarray(pts).shape[:-1], dtype=bool)

    def descriptor(self):
        return {"type": "full"}


@dataclass(frozen=True)
class BallMask(Mask):
    center: tuple
    radius: float

    def contains(self, pts):
        d = np.asarray(pts, dtype=float) - np.asarray(self.center)
        return np.sum(d * d, axis=-1) <= self.radius ** 2

    def descriptor(self):
        return {"type": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class BoxMask(Mask):
    lo: tuple
    hi: tuple

    def contains(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.all((pts >= np.asarray(self.lo)) & (pts <= np.asarray(self.hi)), axis=-1)

    def descriptor(self):
        return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class HalfSpaceMask(Mask):
    """normal.x > offset (strict)."""

    normal: tuple
    offset: float = 0.0

    def contains(self, pts):
        return np.asarray(pts, dtype=float) @ np.asarray(self.normal) > self.offset

    def descriptor(self):
        return {"type": "half_space", "normal": list(self.normal), "offset": self.offset}


@dataclass(frozen=True)
class ComplementMask(Mask):
    inner: Mask

    def contains(self, pts):
        return ~self.inner.contains(pts)

    def descriptor(self):
        return {"type": "complement", "of": self.inner.descriptor()}


@dataclass(frozen=True)
class UnionMask(Mask):
    parts: tuple

    def contains(self, pts):
        out = self.parts[0].contains(pts)
        for p in self.parts[1:]:
            out = out | p.contains(pts)
        return out

    def descriptor(self):
        return {"type": "union", "parts": [p.descriptor() for p in self.parts]}


@dataclass(frozen=True)
class IntersectionMask(Mask):
    parts: tuple

    def contains(self, pts):
        out = self.parts[0].contains(pts)
        for p in self.parts[1:]:
            out = out & p.contains(pts)
        return out

    def descriptor(self):
        return {"type": "intersection", "parts": [p.descriptor() for p in self.parts]}


def mask_from_descriptor(d: dict) -> Mask:
    kind = d["type"]
    if kind == "full":
        return FullMask()
    if kind == "ball":
        return BallMask(tuple(d["center"]), float(d["radius"]))
    if kind == "box":
        return BoxMask(tuple(d["lo"]), tuple(d["hi"]))
    if kind == "half_space":
        return HalfSpaceMask(tuple(d["normal"]), float(d.get("offset", 0.0)))
    if kind == "complement":
        return ComplementMask(mask_from_descriptor(d["of"]))
    if kind == "union":
        return UnionMask(tuple(mask_from_descriptor(p) for p in d["parts"]))
    if kind == "intersection":
        return IntersectionMask(tuple(mask_from_descriptor(p) for p in d["parts"]))
    raise ValueError(f"unknown mask descriptor {d!r}")


@dataclass(frozen=True)
class Region:
    surface: AchronalSurface
    mask: Mask = field(default_factory=FullMask)


@dataclass(frozen=True)
class LocalizationResult:
    probability: float
    error_estimate: float
    surface: str
    mask: str
    backend: str
    meta: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# quadrature engine
# ---------------------------------------------------------------------------


def _window_nodes(grid, window_half: Optional[int], refine: int):
    half = grid.n // 3 if window_half is None else int(window_half)
    sel = position_window_mask(grid, half, refine)
    ax = grid.position_axis(refine)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    nodes = np.stack([X[sel], Y[sel], Z[sel]], axis=1)
    return sel, nodes, ax[1] - ax[0], half


def _slice_times(tmin: float, tmax: float, dt: float):
    k0 = int(np.floor(tmin / dt)) - 1
    k1 = int(np.ceil(tmax / dt)) + 2
    return k0 * dt + dt * np.arange(k1 - k0 + 1)


def _cubic_rows(tvals, times, dt):
    """4-point Lagrange interpolation stencil: indices and weights."""
    pos = (tvals - times[0]) / dt
    i1 = np.clip(np.floor(pos).astype(int), 1, len(times) - 3)
    s = pos - i1
    wm1 = -s * (s - 1) * (s - 2) / 6.0
    w0 = (s + 1) * (s - 1) * (s - 2) / 2.0
    w1 = -(s + 1) * s * (s - 2) / 2.0
    w2 = (s + 1) * s * (s - 1) / 6.0
    return i1, np.stack([wm1, w0, w1, w2], axis=0)


def _flux_quadrature(spec: CurrentSpec, backend: FastBackend, nodes_flat_sel,
                     tvals, grads, grid, refine: int, weight: float,
                     slice_dt: float, eval_tol: Optional[float],
                     time_interp: str = "cubic"):
    """Shared core: sum (J0 - J.grad) * weight over selected nodes.

    nodes_flat_sel indexes the (refined) full position cube; tvals and grads
    give the surface data at those nodes.
    """
    packet = spec.packet
    n_sel = len(nodes_flat_sel)
    if n_sel == 0:
        return 0.0, 0.0, {"slices": 0}
    tmin, tmax = float(np.min(tvals)), float(np.max(tvals))
    flat_nodes = np.asarray(nodes_flat_sel)

    def gather(x0):
        J = backend.slice_fields(packet, x0, refine=refine, tol=eval_tol)
        return J.reshape(4, -1)[:, flat_nodes]

    omega = float(backend.support.eps.max() - backend.support.eps.min())
    if tmax - tmin < 1e-12:
        Jn = gather(0.5 * (tmin + tmax))
        interp_rel = 0.0
        n_slices = 1
    else:
        times = _slice_times(tmin, tmax, slice_dt)
        rows = [gather(t) for t in times]
        stackJ = np.stack(rows, axis=0)  # (n_t, 4, n_sel)
        if time_interp == "cubic":
            i1, wmat = _cubic_rows(tvals, times, slice_dt)
            Jn = (wmat[0][None, :] * np.take_along_axis(stackJ, (i1 - 1)[None, None, :], axis=0)[0]
                  + wmat[1][None, :] * np.take_along_axis(stackJ, i1[None, None, :], axis=0)[0]
                  + wmat[2][None, :] * np.take_along_axis(stackJ, (i1 + 1)[None, None, :], axis=0)[0]
                  + wmat[3][None, :] * np.take_along_axis(stackJ, (i1 + 2)[None, None, :], axis=0)[0])
            interp_rel = (0.5 * omega * slice_dt) ** 4 / 24.0
        elif time_interp == "nearest":
            idx = np.clip(np.rint((tvals - times[0]) / slice_dt).astype(int), 0, len(times) - 1)
            Jn = np.take_along_axis(stackJ, idx[None, None, :], axis=0)[0]
            interp_rel = 0.5 * omega * slice_dt
        else:
            raise ValueError(f"unknown time_interp {time_interp!r}")
        n_slices = len(times)

    integrand = Jn[0] - np.sum(Jn[1:] * grads.T, axis=0)
    prob = float(np.sum(integrand) * weight)
    abs_flux = float(np.sum(np.abs(integrand)) * weight)
    err = abs_flux * (interp_rel + backend.spectral_tail)
    return prob, err, {"slices": n_slices, "interp_rel": interp_rel,
                       "min_integrand": float(integrand.min(initial=0.0)),
                       "max_j0": float(Jn[0].max(initial=0.0))}


def probability(spec: CurrentSpec, region: Region,
                backend: Optional[FastBackend] = None,
                window_half: Optional[int] = None, refine: int = 1,
                slice_dt: float = 0.2, eval_tol: Optional[float] = None,
                time_interp: str = "cubic",
                normalization: str = "raw") -> LocalizationResult:
    """Localization probability of spec.packet in the region.

    `normalization` is "raw" or, for stress-energy currents, "energy"
    (divide by the per-state n-energy expectation so that the full-surface
    flux is the squared norm); the raw value is always kept in meta.
    """
    backend = backend or build_fast(spec, tol=1e-6)
    grid = spec.packet.grid
    sel, nodes, dx, half = _window_nodes(grid, window_half, refine)
    inside = region.mask.contains(nodes)
    flat_all = np.flatnonzero(sel.reshape(-1))
    flat_sel = flat_all[inside]
    nodes_sel = nodes[inside]
    tvals = region.surface.tau(nodes_sel)
    grads = region.surface.gradient(nodes_sel)
    prob, err, meta = _flux_quadrature(
        spec, backend, flat_sel, tvals, grads, grid, refine, dx ** 3,
        slice_dt, eval_tol, time_interp)
    meta.update({"window_half_nodes": half, "refine": refine,
                 "window_extent": float(half * grid.position_spacing),
                 "raw_probability": prob,
                 "surface_offset_at_origin": float(region.surface.tau(np.zeros((1, 3)))[0])})
    prob, err = _apply_normalization(spec, prob, err, normalization, meta)
    return LocalizationResult(prob, err, region.surface.label(),
                              region.mask.label(), "fast", meta)


def _apply_normalization(spec, prob, err, normalization, meta):
    meta["normalization"] = normalization
    if normalization == "raw":
        return prob, err
    if normalization == "energy":
        if not spec.is_stress_energy:
            raise ValueError("energy normalization applies to stress-energy currents")
        scale = spec.packet.energy_expectation(spec.kernel.n)
        meta["energy_expectation"] = scale
        norm2 = spec.packet.norm_squared()
        return prob * norm2 / scale, err * norm2 / scale
    raise ValueError(f"unknown normalization {normalization!r}")


def probability_transformed(spec: CurrentSpec, transform: SurfaceTransformResult,
                            mask: Mask, backend: Optional[FastBackend] = None,
                            window_half: Optional[int] = None, refine: int = 1,
                            slice_dt: float = 0.2, eval_tol: Optional[float] = None,
                            time_interp: str = "cubic") -> LocalizationResult:
    """Probability over the Poincare image of a region.

    The image surface is evaluated through the graph-map machinery: mask
    membership of an image node y is decided by S^{-1}(y), tau and the
    gradient come from the transformed closed forms.
    """
    backend = backend or build_fast(spec, tol=1e-6)
    grid = spec.packet.grid
    sel, nodes, dx, half = _window_nodes(grid, window_half, refine)
    xs = transform.s_inverse(nodes)
    inside = mask.contains(xs)
    flat_all = np.flatnonzero(sel.reshape(-1))
    flat_sel = flat_all[inside]
    tvals = transform.tau_of_source(xs[inside])
    src_grad = transform.surface.gradient(xs[inside])
    from .surfaces import transform_gradient_data
    grads, _ = transform_gradient_data(transform.g.L, src_grad)
    prob, err, meta = _flux_quadrature(
        spec, backend, flat_sel, tvals, grads, grid, refine, dx ** 3,
        slice_dt, eval_tol, time_interp)
    meta.update({"window_half_nodes": half, "refine": refine, "transformed": True})
    return LocalizationResult(prob, err, f"image({transform.surface.label()})",
                              mask.label(), "fast", meta)


# ---------------------------------------------------------------------------
# named checks
# ---------------------------------------------------------------------------


def flux_invariance_report(spec: CurrentSpec, surfaces: Sequence[AchronalSurface],
                           backend: Optional[FastBackend] = None,
                           tolerance_budget: float = 2e-2, **quad) -> dict:
    """Full-surface probabilities across maximal surfaces, with deviations.

    Warns (in the report) when the boundary-shell flux estimate suggests the
    window misses more than a tenth of the tolerance budget.
    """
    backend = backend or build_fast(spec, tol=1e-6)
    results = [probability(spec, Region(s, FullMask()), backend=backend, **quad)
               for s in surfaces]
    probs = np.array([r.probability for r in results])
    scale = probs.mean()
    dev = 0.0
    if len(probs) > 1:
        dev = float(np.abs(probs[:, None] - probs[None, :]).max() / scale)
    warnings = []
    tail = _window_tail_fraction(spec, backend, **quad)
    if tail > 0.1 * tolerance_budget:
        warnings.append(
            f"boundary flux fraction {tail:.2e} exceeds a tenth of the "
            f"tolerance budget {tolerance_budget:.2e}")
    return {"results": results, "probabilities": probs.tolist(),
            "max_pairwise_relative_deviation": dev,
            "boundary_flux_fraction": tail, "warnings": warnings}


def _window_tail_fraction(spec, backend, window_half=None, refine=1, **_):
    """Fraction of the t = 0 slice's J0 mass on the window's boundary shell."""
    grid = spec.packet.grid
    half = grid.n // 3 if window_half is None else int(window_half)
    J = backend.slice_fields(spec.packet, 0.0, refine=1)
    sel = position_window_mask(grid, half, 1)
    inner = position_window_mask(grid, half - 1, 1)
    shell = sel & ~inner
    total = float(J[0][sel].sum())
    if total <= 0:
        return 0.0
    return float(J[0][shell].sum()) / total


def covariance_check(spec: CurrentSpec, g: PoincareElement, region: Region,
                     backend_tol: float = 1e-6, resample_method: str = "tricubic",
                     **quad):
    """Both sides of the flux covariance: the W(g)^{-1}-moved state on the
    original region versus the original state on the g-image region."""
    from .wavepacket import apply_poincare
    moved = apply_poincare(g.inverse(), spec.packet, method=resample_method)
    lhs_spec = spec.with_packet(moved)
    lhs = probability(lhs_spec, region, backend=build_fast(lhs_spec, tol=backend_tol), **quad)
    transform = transform_surface(g, region.surface)
    rhs = probability_transformed(spec, transform, region.mask,
                                  backend=build_fast(spec, tol=backend_tol), **quad)
    return lhs, rhs


def additivity_check(spec: CurrentSpec, surface: AchronalSurface,
                     masks: Sequence[Mask], backend: Optional[FastBackend] = None,
                     window_half: Optional[int] = None, **quad) -> dict:
    """|sum of partition probabilities - norm^2| / norm^2.

    The masks must partition the window nodes exactly: overlapping nodes
    raise, uncovered nodes count toward the reported gap.
    """
    backend = backend or build_fast(spec, tol=1e-6)
    grid = spec.packet.grid
    sel, nodes, dx, half = _window_nodes(grid, window_half, 1)
    counts = np.zeros(len(nodes), dtype=int)
    for m in masks:
        counts += m.contains(nodes).astype(int)
    if np.any(counts > 1):
        raise MaskOverlapError(f"{int((counts > 1).sum())} nodes in multiple masks")
    results = [probability(spec, Region(surface, m), backend=backend,
                           window_half=half, **quad) for m in masks]
    total = float(sum(r.probability for r in results))
    norm2 = spec.packet.norm_squared()
    return {"results": results, "sum": total, "norm_squared": norm2,
            "residual": abs(total - norm2) / norm2,
            "uncovered_nodes": int((counts == 0).sum())}


def matrix_element(spec: CurrentSpec, psi: WavePacket, region: Region,
                   backend: Optional[FastBackend] = None,
                   backend_tol: float = 1e-6, **quad) -> complex:
    """Polarization of the localization form: (1/4) sum_zeta zeta q(zeta phi + psi).

    Hermitian sesquilinear in (phi, psi), conjugate-linear in phi; the
    diagonal psi = phi reproduces the probability computed with the same
    backend.  A backend is reused when its node set covers both supports,
    otherwise one is built on the support union.
    """
    from .currents import BackendMismatchError, SupportData
    phi = spec.packet
    if backend is not None:
        try:
            backend.support.values_of(psi)
            backend.support.values_of(phi)
        except BackendMismatchError:
            backend = None
    if backend is None:
        support = SupportData.from_packets([phi, psi])
        backend = build_fast(spec, tol=backend_tol, support=support)
    out = 0j
    for zeta in (1.0, -1.0, 1j, -1j):
        chi = combine(phi, psi, zeta)
        res = probability(spec.with_packet(chi), region, backend=backend, **quad)
        out += zeta * res.probability
    return out / 4.0


def causal_shadow_on_surface(mask: BallMask, t0: float,
                             target: AchronalSurface):
    """Pointwise membership of the influence region of a flat ball on a
    graph target: |y - c| <= r + |tau(y) - t0|."""
    if not isinstance(mask, BallMask):
        raise UnsupportedGeometryError(
            f"no closed-form causal shadow for mask {mask.label()}")

    center = np.asarray(mask.center, dtype=float)

    class _Shadow(Mask):
        def contains(self, pts):
            pts = np.asarray(pts, dtype=float)
            t = target.tau(pts)
            return np.linalg.norm(pts - center, axis=-1) <= mask.radius + np.abs(t - t0)

        def descriptor(self):
            return {"type": "causal_shadow", "of": mask.descriptor(), "t0": t0,
                    "target": target.descriptor()}

    return _Shadow()


def causal_monotonicity_check(spec: CurrentSpec, ball: BallMask, t0: float,
                              target: AchronalSurface,
                              backend: Optional[FastBackend] = None, **quad):
    """p(ball at t0) versus p(influence region on the target surface)."""
    backend = backend or build_fast(spec, tol=1e-6)
    p_src = probability(spec, Region(FlatSurface(t0), ball), backend=backend, **quad)
    shadow = causal_shadow_on_surface(ball, t0, target)
    p_dst = probability(spec, Region(target, shadow), backend=backend, **quad)
    return p_src, p_dst
