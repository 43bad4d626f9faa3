"""The causal logic of Minkowski spacetime as testable predicates.

Achronal separateness is the relation

    x _|_ y  iff  x != y and (x - y) . (x - y) <= 0   (Minkowski square),

so lightlike-separated points count as separated.  The causal complement of
a region M collects the points separated from every point of M, the causal
completion is the double complement, and the determinacy set of M collects
the points all of whose timelike lines meet M.  For an achronal Borel set
the determinacy set equals the causal completion; both have closed forms
for balls in constant-time planes (the causal diamond) and for diamonds.

Regions are predicates, never voxelized.  Where no closed form exists,
membership is decided by certified searches: direction-sampled line
intersection for determinacy (Fibonacci sphere over slowness shells) and a
constructive witness family for completion membership, with every reported
counterexample re-verified against the exact predicates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .localization import BallMask, Mask, Region
from .minkowski import PoincareElement, minkowski_square
from .surfaces import AchronalSurface


class InconclusiveError(RuntimeError):
    """Search resolution too coarse to certify membership."""


class DeterminacyMismatchError(ValueError):
    """Patches expected to share a determinacy set do not."""


def achronally_separated(x, y) -> bool:
    """x _|_ y: distinct and not timelike separated."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        return False
    return bool(minkowski_square(x - y) <= 0.0)


def separation_margin(x, y):
    """|dx| - |dt|, nonnegative on achronally separated pairs; broadcasts."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.linalg.norm(d[..., 1:], axis=-1) - np.abs(d[..., 0])


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


class SpacetimeRegion:
    def contains(self, x):
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def complement_member(self, x):
        """Closed-form membership in the causal complement, if available."""
        raise NotImplementedError

    def complement_witness(self, x):
        """A point of the causal complement timelike-or-equal to x, or None.

        Existence of such a witness certifies x outside the causal
        completion; the constructive families below are complete away from
        the completion boundary.
        """
        raise NotImplementedError


@dataclass(frozen=True)
class BallInPlane(SpacetimeRegion):
    """Closed ball of radius r in the plane t = t0."""

    t0: float
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        on_plane = x[..., 0] == self.t0
        d = np.linalg.norm(x[..., 1:] - np.asarray(self.center), axis=-1)
        return on_plane & (d <= self.radius)

    def complement_member(self, x):
        """x _|_ every ball point: |x - c| > r and |x - c| - r >= |t - t0|."""
        x = np.asarray(x, dtype=float)
        d = np.linalg.norm(x[..., 1:] - np.asarray(self.center), axis=-1)
        dt = np.abs(x[..., 0] - self.t0)
        return (d > self.radius) & (d - self.radius >= dt)

    def determinacy_member(self, x):
        """Closed form: the causal diamond |t - t0| + |x - c| <= r."""
        x = np.asarray(x, dtype=float)
        d = np.linalg.norm(x[..., 1:] - np.asarray(self.center), axis=-1)
        return np.abs(x[..., 0] - self.t0) + d <= self.radius

    def complement_witness(self, x):
        """Radial witness construction; exists iff x is outside the diamond."""
        x = np.asarray(x, dtype=float)
        u0 = float(x[0] - self.t0)
        u = x[1:] - np.asarray(self.center)
        ru = float(np.linalg.norm(u))
        margin = abs(u0) + ru - self.radius
        if margin <= 0:
            return None
        uhat = u / ru if ru > 1e-300 else np.array([1.0, 0.0, 0.0])
        d = 0.5 * margin
        s = max(self.radius - ru, 0.0) + abs(u0) + self.radius + 1.0
        sign = 1.0 if u0 >= 0 else -1.0
        z0 = u0 - sign * (s + d)
        z = np.concatenate([[self.t0 + z0], np.asarray(self.center) + u + s * uhat])
        if self.complement_member(z) and not achronally_separated(z, x):
            return z
        return _scan_witness(self, x)

    def transformed(self, g: PoincareElement) -> "BallInPlane":
        L = g.L
        if np.abs(L[0] - [1, 0, 0, 0]).max() > 1e-12 or np.abs(L[1:, 0]).max() > 1e-12:
            raise ValueError("ball-in-plane closed under rotations and translations only")
        c4 = g.act(np.array([self.t0, *self.center]))
        return BallInPlane(float(c4[0]), tuple(c4[1:]), self.radius)

    def descriptor(self):
        return {"type": "ball_in_plane", "t0": self.t0,
                "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Diamond(SpacetimeRegion):
    """Causal diamond J+(bottom) intersect J-(top), vertices timelike."""

    bottom: tuple
    top: tuple

    def __post_init__(self):
        b = np.asarray(self.bottom, dtype=float).reshape(4)
        t = np.asarray(self.top, dtype=float).reshape(4)
        d = t - b
        if not (d[0] > 0 and minkowski_square(d) > 0):
            raise ValueError("vertices must be timelike, future-ordered")
        object.__setattr__(self, "bottom", tuple(b))
        object.__setattr__(self, "top", tuple(t))

    @classmethod
    def from_ball(cls, t0: float, center, radius: float) -> "Diamond":
        c = np.asarray(center, dtype=float)
        return cls((t0 - radius, *c), (t0 + radius, *c))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        b, t = np.asarray(self.bottom), np.asarray(self.top)
        up = x[..., 0] - b[0] >= np.linalg.norm(x[..., 1:] - b[1:], axis=-1)
        dn = t[0] - x[..., 0] >= np.linalg.norm(x[..., 1:] - t[1:], axis=-1)
        return up & dn

    def complement_member(self, x):
        """Outside the open cones of both vertices and outside the diamond."""
        x = np.asarray(x, dtype=float)
        b, t = np.asarray(self.bottom), np.asarray(self.top)
        no_future = x[..., 0] - b[0] <= np.linalg.norm(x[..., 1:] - b[1:], axis=-1)
        no_past = t[0] - x[..., 0] <= np.linalg.norm(x[..., 1:] - t[1:], axis=-1)
        return no_future & no_past & ~self.contains(x)

    def complement_witness(self, x):
        return _scan_witness(self, x)

    def transformed(self, g: PoincareElement) -> "Diamond":
        return Diamond(tuple(g.act(np.asarray(self.bottom))),
                       tuple(g.act(np.asarray(self.top))))

    def descriptor(self):
        return {"type": "diamond", "bottom": list(self.bottom), "top": list(self.top)}


@dataclass(frozen=True)
class GraphPatch(SpacetimeRegion):
    """Graph of a surface's tau restricted to a spatial ball mask."""

    surface: AchronalSurface
    mask: BallMask

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        sp = x[..., 1:]
        inside = self.mask.contains(sp)
        t = self.surface.tau(sp)
        return inside & (np.abs(x[..., 0] - t) <= 1e-12)

    def region(self) -> Region:
        return Region(self.surface, self.mask)

    def descriptor(self):
        return {"type": "graph_patch", "surface": self.surface.descriptor(),
                "mask": self.mask.descriptor()}


def _scan_witness(region: SpacetimeRegion, x):
    """Deterministic witness family: radial directions, geometric scales,
    both time branches; every candidate verified against the exact
    complement predicate and the timelike condition."""
    x = np.asarray(x, dtype=float)
    d = region.descriptor()
    if d["type"] == "ball_in_plane":
        anchor = np.array([d["t0"], *d["center"]])
        scale = d["radius"]
    else:
        b, t = np.asarray(d["bottom"]), np.asarray(d["top"])
        anchor = 0.5 * (b + t)
        scale = 0.5 * (t[0] - b[0])
    rel = x[1:] - anchor[1:]
    base_dirs = [rel / np.linalg.norm(rel)] if np.linalg.norm(rel) > 1e-12 else []
    if d["type"] == "diamond":
        for v in (np.asarray(d["top"]), np.asarray(d["bottom"])):
            w = x[1:] - v[1:]
            if np.linalg.norm(w) > 1e-12:
                base_dirs.append(w / np.linalg.norm(w))
    base_dirs += [e for e in np.concatenate([np.eye(3), -np.eye(3)])]
    reach = scale + np.abs(x - anchor).max()
    for s in reach * np.geomspace(0.25, 16.0, 14):
        for uhat in base_dirs:
            zs = x[1:] + s * uhat
            for delta in (1e-3 * scale, 0.1 * scale, 0.5 * scale):
                for z0 in (x[0] - s - delta, x[0] + s + delta):
                    z = np.concatenate([[z0], zs])
                    if region.complement_member(z) and not achronally_separated(z, x):
                        return z
    return None


# ---------------------------------------------------------------------------
# membership operations
# ---------------------------------------------------------------------------


def causal_complement_member(M: SpacetimeRegion, x, sampler=None,
                             n_samples: int = 2048, rng=None,
                             margin_resolution: float = 1e-9) -> bool:
    """Is x achronally separated from every point of M?

    Closed form when the region provides one; otherwise Monte-Carlo
    certification against `sampler(rng, n)` draws from M, raising
    InconclusiveError when the observed margin is below resolution.
    """
    x = np.asarray(x, dtype=float)
    try:
        return bool(M.complement_member(x))
    except NotImplementedError:
        pass
    if sampler is None:
        raise ValueError("region has no closed form and no sampler was given")
    rng = rng or np.random.default_rng(0)
    pts = sampler(rng, n_samples)
    margins = separation_margin(x[None, :], pts)
    worst = float(margins.min())
    if abs(worst) < margin_resolution:
        raise InconclusiveError(
            f"separation margin {worst:.2e} below resolution on {n_samples} samples")
    return worst > 0


def completion_member(M: SpacetimeRegion, x) -> bool:
    """Is x in the causal completion (M-perp)-perp?

    Decided by witness search: a verified point of M-perp timelike-related
    to x proves x outside; no witness from the complete constructive family
    means inside.  x itself lying in M-perp also proves x outside (a point
    is never separated from itself).
    """
    x = np.asarray(x, dtype=float)
    if bool(M.complement_member(x)):
        return False
    return M.complement_witness(x) is None


_GOLDEN = np.pi * (3.0 - np.sqrt(5.0))


def fibonacci_directions(n: int) -> np.ndarray:
    k = np.arange(n)
    z = 1.0 - (2.0 * k + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    th = _GOLDEN * k
    return np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)


def determinacy_member(delta, x, n_directions: int = 96,
                       shells=(0.5, 0.9, 0.99), escalate: bool = True,
                       granularity: float = 1e-9):
    """Does every timelike line through x meet the patch delta?

    BallInPlane uses the exact diamond formula.  Graph patches over ball
    masks intersect each sampled line with the mask chord and test the
    monotone crossing of t - tau along it; direction sampling escalates
    near the boundary and raises InconclusiveError below `granularity`.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(delta, BallInPlane):
        return bool(delta.determinacy_member(x))
    if not isinstance(delta, GraphPatch) or not isinstance(delta.mask, BallMask):
        raise ValueError("determinacy needs a BallInPlane or a ball-mask GraphPatch")
    ok, margin = _determinacy_sampled(delta, x, n_directions, shells)
    if escalate and margin < 1e-3:
        ok, margin = _determinacy_sampled(delta, x, 8 * n_directions,
                                          tuple(shells) + (0.999,))
        if margin < granularity:
            raise InconclusiveError(
                f"determinacy margin {margin:.2e} below granularity")
    return ok


def _determinacy_sampled(delta: GraphPatch, x, n_dir, shells):
    """All-lines check; returns (verdict, worst margin over sampled lines)."""
    c = np.asarray(delta.mask.center, dtype=float)
    r = delta.mask.radius
    x0, xs = x[0], x[1:]
    # the vertical line e = 0 first
    if np.linalg.norm(xs - c) > r:
        return False, float(np.linalg.norm(xs - c) - r)
    worst = np.inf
    for speed in shells:
        dirs = speed * fibonacci_directions(n_dir)
        # spatial chord |xs + s e - c| <= r: quadratic in s
        b = dirs @ (xs - c)
        a = np.sum(dirs * dirs, axis=1)
        disc = b * b - a * (np.sum((xs - c) ** 2) - r * r)
        if np.any(disc < 0):
            i = int(np.argmin(disc))
            return False, float(np.sqrt(-min(disc[i], 0.0)))
        sq = np.sqrt(np.maximum(disc, 0.0))
        s_in = (-b - sq) / a
        s_out = (-b + sq) / a
        ends_in = x0 + s_in - delta.surface.tau(xs + s_in[:, None] * dirs)
        ends_out = x0 + s_out - delta.surface.tau(xs + s_out[:, None] * dirs)
        # t - tau increases along the line; a crossing needs a sign change
        hit = (ends_in <= 0) & (ends_out >= 0)
        margin = np.minimum(-ends_in, ends_out)
        if np.any(~hit):
            return False, float(-margin[~hit].max())
        worst = min(worst, float(margin.min()))
    return True, worst


@dataclass(frozen=True)
class LogicReport:
    samples: int
    agreement_ratio: float
    counterexamples: list
    shell_skipped: int
    meta: dict = field(default_factory=dict, compare=False)


def completion_equals_determinacy_check(delta: BallInPlane, n_samples: int = 10000,
                                        seed: int = 0, box_pad: float = 1.5,
                                        eps_shell: float = 1e-3) -> LogicReport:
    """Sampled agreement of the determinacy set with the double complement.

    Points within eps_shell * radius of the diamond boundary are skipped
    (both predicates are discontinuous there); counterexamples outside the
    shell are re-verified before reporting.
    """
    rng = np.random.default_rng(seed)
    r = delta.radius
    c = np.asarray(delta.center)
    lo = np.array([delta.t0 - box_pad * r, *(c - box_pad * r)])
    hi = np.array([delta.t0 + box_pad * r, *(c + box_pad * r)])
    pts = rng.uniform(lo, hi, size=(n_samples, 4))
    d = np.abs(pts[:, 0] - delta.t0) + np.linalg.norm(pts[:, 1:] - c, axis=1)
    shell = np.abs(d - r) < eps_shell * r
    agree = 0
    bad = []
    for p in pts[~shell]:
        det = bool(delta.determinacy_member(p))
        comp = completion_member(delta, p)
        if det == comp:
            agree += 1
            continue
        # re-verify before reporting: a witness must itself pass the exact
        # complement predicate and be timelike-related to the point
        w = delta.complement_witness(p)
        confirmed = (w is None) == comp or w is not None and (
            bool(delta.complement_member(w)) and not achronally_separated(w, p))
        bad.append({"point": p.tolist(), "determinacy": det, "completion": comp,
                    "witness_confirmed": bool(confirmed)})
    n_eff = int((~shell).sum())
    return LogicReport(n_eff, agree / n_eff if n_eff else 1.0, bad, int(shell.sum()),
                       {"radius": r, "eps_shell": eps_shell})


def rcl_well_defined_check(spec, delta1: GraphPatch, delta2: GraphPatch,
                           backend=None, n_check: int = 400, seed: int = 0,
                           **quad):
    """Probabilities of two patches sharing a determinacy set.

    The shared-determinacy precondition is verified on sampled points
    (DeterminacyMismatchError on failure); the flux probabilities are then
    computed for both and returned for the caller's tolerance check.
    """
    rng = np.random.default_rng(seed)
    c = np.asarray(delta1.mask.center)
    r = delta1.mask.radius
    lo = np.array([-1.4 * r + float(delta1.surface.tau(c[None, :])[0]), *(c - 1.4 * r)])
    hi = lo + 2.8 * r
    pts = rng.uniform(lo, hi, size=(n_check, 4))
    mism = 0
    for p in pts:
        try:
            m1 = determinacy_member(delta1, p)
            m2 = determinacy_member(delta2, p)
        except InconclusiveError:
            continue
        if m1 != m2:
            mism += 1
    if mism > 0:
        raise DeterminacyMismatchError(
            f"{mism}/{n_check} sampled points distinguish the patches")
    from .localization import probability
    p1 = probability(spec, delta1.region(), backend=backend, **quad)
    p2 = probability(spec, delta2.region(), backend=backend, **quad)
    return p1, p2
