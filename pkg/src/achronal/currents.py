"""Conserved covariant currents of the massive scalar boson.

The current of a state phi at a spacetime point x is the double momentum sum

    J(phi, x) = (2 pi)^-3 sum_k sum_p w_k w_p K(k, p)
                exp(i ((eps(k) - eps(p)) x0 - (k - p).x)) conj(phi(k)) phi(p)

over the packet's support nodes, with K either the causal kernel or a
stress-energy kernel.  Two evaluation routes are kept deliberately
independent:

* the direct route materializes the kernel in row blocks and contracts the
  literal double sum (the oracle; arbitrary spacetime points);
* the fast route factorizes the scalar profile g(eps(k) eps(p) - k.p) over
  the support nodes as sum_r mu_r psi_r(k) psi_r(p) (landmark seed, then
  block power + Rayleigh-Ritz against the full support matrix), after which
  every current component becomes a rank sum of products of momentum sums
  that evaluate either pointwise (dot products) or on whole position-grid
  slices (FFTs).  Stress-energy kernels are exactly separable and need no
  factorization: four auxiliary fields with weights p_mu/sqrt(eps) plus one
  with 1/sqrt(eps) rebuild the current algebraically.

Both routes share the phase convention above: the single-field transform is
u(x) = sum_p h(p) exp(-i (eps(p) x0 - p.x)), so the conjugated k-side factor
reproduces the current's phase exactly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .grids import MomentumGrid, momentum_to_position
from .kernels import CausalKernel, TensorKernel
from .minkowski import ETA, PoincareElement, apply_lorentz
from .wavepacket import WavePacket, apply_poincare

TWO_PI_CUBED = (2.0 * np.pi) ** 3

_CHUNK = 2048


class FactorizationError(RuntimeError):
    """The sampled g-kernel spectrum does not reach the requested truncation."""


class BackendMismatchError(ValueError):
    """Packet support or grid is inconsistent with the stored factorization."""


@dataclass(frozen=True)
class CurrentSpec:
    """A current family (kernel) applied to a state (packet)."""

    kernel: Union[CausalKernel, TensorKernel]
    packet: WavePacket

    def __post_init__(self):
        if self.kernel.mass != self.packet.mass:
            raise ValueError("kernel and packet masses differ")

    @property
    def is_stress_energy(self) -> bool:
        return isinstance(self.kernel, TensorKernel)

    def with_packet(self, packet: WavePacket) -> "CurrentSpec":
        return CurrentSpec(self.kernel, packet)


@dataclass(frozen=True)
class CurrentSample:
    point: np.ndarray
    value: np.ndarray
    backend: str
    error_estimate: float

    @property
    def j0(self) -> float:
        return float(self.value[0])

    @property
    def jvec(self) -> np.ndarray:
        return self.value[1:]


@dataclass(frozen=True)
class SupportData:
    """Support-node arrays shared by both evaluation routes."""

    grid: MomentumGrid
    mass: float
    flat_idx: np.ndarray
    points: np.ndarray
    eps: np.ndarray

    @classmethod
    def from_mask(cls, grid: MomentumGrid, mass: float, mask: np.ndarray) -> "SupportData":
        flat = np.flatnonzero(mask.reshape(-1))
        coords = grid.node_coordinates()[flat]
        eps = np.sqrt(mass * mass + np.sum(coords * coords, axis=1))
        return cls(grid, mass, flat, coords, eps)

    @classmethod
    def from_packets(cls, packets) -> "SupportData":
        grid, mass = packets[0].grid, packets[0].mass
        mask = np.zeros((grid.n,) * 3, dtype=bool)
        for p in packets:
            if not p.grid.same_geometry(grid) or p.mass != mass:
                raise BackendMismatchError("packets disagree on grid or mass")
            mask |= p.support_mask()
        return cls.from_mask(grid, mass, mask)

    def values_of(self, packet: WavePacket) -> np.ndarray:
        if not packet.grid.same_geometry(self.grid) or packet.mass != self.mass:
            raise BackendMismatchError("packet grid or mass differs from backend")
        flat_amp = packet.amplitudes.reshape(-1)
        inside = np.zeros(flat_amp.shape[0], dtype=bool)
        inside[self.flat_idx] = True
        if np.any(flat_amp[~inside] != 0):
            raise BackendMismatchError("packet support exceeds the factorized node set")
        return flat_amp[self.flat_idx]

    def embed(self, node_values: np.ndarray) -> np.ndarray:
        """Scatter per-node values (..., n_sup) into the full grid cube."""
        n = self.grid.n
        out = np.zeros(node_values.shape[:-1] + (n ** 3,), dtype=complex)
        out[..., self.flat_idx] = node_values
        return out.reshape(node_values.shape[:-1] + (n, n, n))

    def checksum(self, kernel) -> str:
        hasher = hashlib.sha256()
        hasher.update(f"{self.grid.n}:{self.grid.p_max}:{self.mass}".encode())
        hasher.update(kernel.label.encode())
        hasher.update(self.flat_idx.astype(np.int64).tobytes())
        return hasher.hexdigest()[:16]


def _phases(support: SupportData, x: np.ndarray) -> np.ndarray:
    """exp(-i (eps x0 - p.x)) for points x of shape (m, 4): (n_sup, m)."""
    return np.exp(-1j * (np.outer(support.eps, x[:, 0]) - support.points @ x[:, 1:].T))


def _gmatrix_block(kern: CausalKernel, support: SupportData, rows: slice) -> np.ndarray:
    eps, pts = support.eps, support.points
    t = np.outer(eps[rows], eps) - pts[rows] @ pts.T
    return kern.scalar(t)


# ---------------------------------------------------------------------------
# direct route
# ---------------------------------------------------------------------------


def eval_direct(spec: CurrentSpec, x, chunk: int = _CHUNK):
    """Literal double-sum evaluation at spacetime points x of shape (..., 4).

    Returns a CurrentSample for a single point, a list for a batch.  The
    value is the Hermitian-symmetrized sum, real up to roundoff; the largest
    imaginary residue enters the error estimate.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x.reshape(-1, 4)
    support = SupportData.from_packets([spec.packet])
    values = support.values_of(spec.packet) * spec.packet.grid.weight
    if spec.is_stress_energy:
        J = _direct_tensor(spec.kernel, support, values, X, chunk)
    else:
        J = _direct_causal(spec.kernel, support, values, X, chunk)
    J /= TWO_PI_CUBED
    samples = []
    for i in range(len(X)):
        imag = float(np.abs(J[i].imag).max())
        samples.append(CurrentSample(X[i], J[i].real.copy(), "direct", imag))
    return samples[0] if single else samples


def _direct_causal(kern, support, values, X, chunk):
    n = len(support.eps)
    Z = _phases(support, X)
    base = values[:, None] * Z
    sq = np.sqrt(support.eps)
    stack = np.concatenate([
        base / sq[:, None],
        base * sq[:, None],
        base * (support.points[:, 0] / sq)[:, None],
        base * (support.points[:, 1] / sq)[:, None],
        base * (support.points[:, 2] / sq)[:, None],
    ], axis=1)
    out = np.zeros_like(stack)
    for i0 in range(0, n, chunk):
        rows = slice(i0, min(i0 + chunk, n))
        out[rows] = _gmatrix_block(kern, support, rows) @ stack
    m = X.shape[0]
    Wv, Wu, W1, W2, W3 = (out[:, i * m:(i + 1) * m] for i in range(5))
    Vv, Vu, V1, V2, V3 = (stack[:, i * m:(i + 1) * m] for i in range(5))
    def sym(Va, Wa, Vb, Wb):
        # 0.5 (diag(Va^H G Vb) + diag(Vb^H G Va)); real up to roundoff since
        # the two diagonals are exact conjugates for symmetric G
        return 0.5 * (np.sum(np.conj(Va) * Wb, axis=0)
                      + np.sum(np.conj(Vb) * Wa, axis=0))
    J = np.empty((m, 4), dtype=complex)
    J[:, 0] = sym(Vu, Wu, Vv, Wv)
    J[:, 1] = sym(V1, W1, Vv, Wv)
    J[:, 2] = sym(V2, W2, Vv, Wv)
    J[:, 3] = sym(V3, W3, Vv, Wv)
    return J


def _direct_tensor(kern, support, values, X, chunk):
    """Literal sum_k sum_p conj(a_k) K_n(k, p) a_p with K_n built entrywise."""
    from .kernels import kernel_Kn
    n = len(support.eps)
    Z = _phases(support, X)
    a = values[:, None] * Z
    J = np.zeros((X.shape[0], 4), dtype=complex)
    block = max(1, min(chunk, (1 << 26) // max(n, 1)))
    for i0 in range(0, n, block):
        rows = slice(i0, min(i0 + block, n))
        K4 = kernel_Kn(support.points[rows][:, None, :],
                       support.points[None, :, :], kern)
        ak = np.conj(a[rows])
        for mu in range(4):
            J[:, mu] += np.sum(ak * (K4[:, :, mu] @ a), axis=0)
    return J


# ---------------------------------------------------------------------------
# fast route
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FastBackend:
    """Stored factorization enabling pointwise and whole-slice evaluation."""

    support: SupportData
    kernel: Union[CausalKernel, TensorKernel]
    eigvals: Optional[np.ndarray]
    eigvecs: Optional[np.ndarray]
    truncation: float
    spectral_tail: float
    entry_residual_rms: float
    entry_residual_max: float
    checksum: str
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def rank(self) -> int:
        return 0 if self.eigvals is None else len(self.eigvals)

    @property
    def separable(self) -> bool:
        return self.eigvals is None

    def rank_for(self, tol: Optional[float]) -> Optional[int]:
        if self.separable or tol is None:
            return self.rank
        rel = np.abs(self.eigvals) / np.abs(self.eigvals[0])
        return max(1, int(np.searchsorted(-rel, -tol)))

    # -- pointwise -------------------------------------------------------

    def eval_points(self, packet: WavePacket, x, tol: Optional[float] = None):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        X = x.reshape(-1, 4)
        values = self.support.values_of(packet) * packet.grid.weight
        Z = _phases(self.support, X)
        base = values[:, None] * Z
        if self.separable:
            J = _tensor_from_fields(self.kernel, *_tensor_point_fields(self.support, base))
        else:
            J = _causal_from_point_fields(self, base, self.rank_for(tol))
        J /= TWO_PI_CUBED
        out = []
        for i in range(len(X)):
            val = J[i].real.copy()
            # the rank sum symmetrizes exactly, so truncation dominates the error
            est = float(self.spectral_tail * np.abs(val).max())
            out.append(CurrentSample(X[i], val, "fast", est))
        return out[0] if single else out

    # -- whole slices ------------------------------------------------------

    def slice_fields(self, packet: WavePacket, x0: float, refine: int = 1,
                     tol: Optional[float] = None, rank_batch: int = 24) -> np.ndarray:
        """Current components on the conjugate position grid at time x0.

        Returns a real array of shape (4, M, M, M) with M = refine * n.
        """
        sup = self.support
        values = sup.values_of(packet) * packet.grid.weight
        load = values * np.exp(-1j * sup.eps * x0)
        sq = np.sqrt(sup.eps)
        weights = [1.0 / sq, sq, sup.points[:, 0] / sq,
                   sup.points[:, 1] / sq, sup.points[:, 2] / sq]
        M = sup.grid.n * refine
        if self.separable:
            F = [momentum_to_position(sup.embed(w * load), sup.grid, refine)
                 for w in weights]
            J = _tensor_from_fields(self.kernel, F[1], F[2], F[3], F[4], F[0])
            return np.moveaxis(J, -1, 0).real / TWO_PI_CUBED
        R = self.rank_for(tol)
        mu = self.eigvals[:R]
        J = np.zeros((4, M, M, M))
        for r0 in range(0, R, rank_batch):
            rs = slice(r0, min(r0 + rank_batch, R))
            V = self.eigvecs[:, rs].T
            fields = [momentum_to_position(sup.embed(V * (w * load)[None, :]),
                                           sup.grid, refine)
                      for w in weights]
            B, A, C1, C2, C3 = fields
            mub = mu[rs][:, None, None, None]
            J[0] += np.sum(mub * (np.conj(A) * B).real, axis=0)
            J[1] += np.sum(mub * (np.conj(C1) * B).real, axis=0)
            J[2] += np.sum(mub * (np.conj(C2) * B).real, axis=0)
            J[3] += np.sum(mub * (np.conj(C3) * B).real, axis=0)
        return J / TWO_PI_CUBED


def _causal_from_point_fields(backend: FastBackend, base, R):
    sup = backend.support
    sq = np.sqrt(sup.eps)
    V = backend.eigvecs[:, :R]
    mu = backend.eigvals[:R]
    B = (V / sq[:, None]).T @ base
    A = (V * sq[:, None]).T @ base
    C = [(V * (sup.points[:, i] / sq)[:, None]).T @ base for i in range(3)]
    J = np.empty((base.shape[1], 4), dtype=complex)
    J[:, 0] = (mu[:, None] * np.conj(A) * B).sum(axis=0)
    for i in range(3):
        J[:, i + 1] = (mu[:, None] * np.conj(C[i]) * B).sum(axis=0)
    return J


def _tensor_point_fields(support: SupportData, base):
    sq = np.sqrt(support.eps)
    F0 = (sq[:, None] * base).sum(axis=0)
    F1 = ((support.points[:, 0] / sq)[:, None] * base).sum(axis=0)
    F2 = ((support.points[:, 1] / sq)[:, None] * base).sum(axis=0)
    F3 = ((support.points[:, 2] / sq)[:, None] * base).sum(axis=0)
    Fv = (base / sq[:, None]).sum(axis=0)
    return F0, F1, F2, F3, Fv


def _tensor_from_fields(kern: TensorKernel, F0, F1, F2, F3, Fv):
    """Assemble the stress-energy current from the five auxiliary fields."""
    n = kern.n
    m2 = kern.mass ** 2
    nU = n[0] * F0 - n[1] * F1 - n[2] * F2 - n[3] * F3
    quad = np.abs(F0) ** 2 - np.abs(F1) ** 2 - np.abs(F2) ** 2 - np.abs(F3) ** 2
    if kern.variant == "stress_energy_standard":
        scalar = 0.5 * (m2 * np.abs(Fv) ** 2 - quad)
    else:
        scalar = -0.5 * (m2 * np.abs(Fv) ** 2 + quad)
    comps = [np.conj(nU) * F + n_mu * scalar
             for F, n_mu in zip((F0, F1, F2, F3), n)]
    # Re[conj(nU) F_mu] keeps the cross term Hermitian; scalar parts are real
    out = np.stack([c.real + 0j for c in comps], axis=-1)
    return out


def build_fast(spec: CurrentSpec, tol: float = 1e-8, n_landmarks: int = 3000,
               seed: int = 0, support: Optional[SupportData] = None,
               rank: Optional[int] = None, chunk: int = _CHUNK) -> FastBackend:
    """Factorize the current for fast evaluation.

    Stress-energy currents are exactly separable and return immediately.
    Causal-kernel currents get the scalar profile's support-node matrix
    eigendecomposed: a landmark seed fixes the subspace, one block power
    step against the full matrix sharpens it, and Rayleigh-Ritz yields
    eigenpairs whose exact residuals certify the truncation.  Raises
    FactorizationError when the spectrum does not reach `tol` (relative),
    as happens for oscillatory profiles.
    """
    support = support or SupportData.from_packets([spec.packet])
    if spec.is_stress_energy:
        return FastBackend(support, spec.kernel, None, None, 0.0, 0.0, 0.0, 0.0,
                           support.checksum(spec.kernel), {"separable": True})
    kern = spec.kernel
    n = len(support.eps)
    if n == 0:
        return FastBackend(support, kern, np.array([1.0]), np.zeros((0, 1)),
                           tol, 0.0, 0.0, 0.0, support.checksum(kern),
                           {"empty_support": True})
    rng = np.random.default_rng(seed)
    n_lm = min(n_landmarks, n)
    lm = np.sort(rng.choice(n, size=n_lm, replace=False))
    sub = SupportData(support.grid, support.mass, support.flat_idx[lm],
                      support.points[lm], support.eps[lm])
    W = _gmatrix_block(kern, sub, slice(0, n_lm))
    lam, U = np.linalg.eigh(W)
    order = np.argsort(-np.abs(lam))
    lam, U = lam[order], U[:, order]
    rel = np.abs(lam) / np.abs(lam[0])
    if rank is not None:
        R0 = min(rank, n_lm)
    else:
        R0 = max(1, int(np.searchsorted(-rel, -tol)))
        if R0 >= int(0.9 * n_lm) and n_lm < n:
            raise FactorizationError(
                f"g-kernel spectrum has not decayed to {tol:g} within "
                f"{n_lm} landmarks (needs rank >= {R0}); profile "
                f"{kern.label!r} does not admit this truncation"
            )
        R0 = min(n_lm, int(R0 * 1.15) + 8)

    keep = np.abs(lam[:R0]) > 1e-13 * np.abs(lam[0])
    lam0, U0 = lam[:R0][keep], U[:, :R0][:, keep]
    if n_lm == n:
        mu, V = lam0, U0
        eig_res = np.zeros(len(mu))
    else:
        Psi = np.empty((n, len(lam0)))
        for i0 in range(0, n, chunk):
            rows = slice(i0, min(i0 + chunk, n))
            t = np.outer(support.eps[rows], sub.eps) - support.points[rows] @ sub.points.T
            Psi[rows] = kern.scalar(t) @ (U0 / lam0)
        Q, _ = np.linalg.qr(Psi)
        Y = _apply_gmatrix(kern, support, Q, chunk)
        Q, _ = np.linalg.qr(Y)
        Y = _apply_gmatrix(kern, support, Q, chunk)
        Msmall = Q.T @ Y
        Msmall = 0.5 * (Msmall + Msmall.T)
        mu, S = np.linalg.eigh(Msmall)
        order = np.argsort(-np.abs(mu))
        mu, S = mu[order], S[:, order]
        V = Q @ S
        GV = Y @ S
        eig_res = np.linalg.norm(GV - V * mu, axis=0) / np.abs(mu[0])

    relmu = np.abs(mu) / np.abs(mu[0])
    if rank is not None:
        R = min(rank, len(mu))
    else:
        R = max(1, int(np.searchsorted(-relmu, -tol)))
        if R >= len(mu) and relmu[-1] > tol:
            raise FactorizationError(
                f"refined spectrum tail {relmu[-1]:.2e} exceeds {tol:g}")
    tail = float(relmu[R]) if R < len(mu) else float(relmu[-1])
    eig_res = eig_res[:R]
    mu, V = mu[:R], np.ascontiguousarray(V[:, :R])

    ii = rng.integers(0, n, size=min(4000, n * 4))
    jj = rng.integers(0, n, size=ii.size)
    t = support.eps[ii] * support.eps[jj] - np.sum(support.points[ii] * support.points[jj], axis=1)
    exact = kern.scalar(t)
    approx = np.sum(V[ii] * (mu * V[jj]), axis=1)
    err = np.abs(approx - exact)
    return FastBackend(
        support, kern, mu, V, tol, tail,
        float(np.sqrt(np.mean(err ** 2))), float(err.max()),
        support.checksum(kern),
        {"n_landmarks": n_lm, "eig_residual_max": float(eig_res.max(initial=0.0))},
    )


def _apply_gmatrix(kern, support, B, chunk):
    n = len(support.eps)
    out = np.empty((n, B.shape[1]))
    for i0 in range(0, n, chunk):
        rows = slice(i0, min(i0 + chunk, n))
        out[rows] = _gmatrix_block(kern, support, rows) @ B
    return out


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def evaluate(spec: CurrentSpec, x, backend: Optional[FastBackend] = None,
             tol: Optional[float] = None):
    """Route point evaluation through the chosen backend."""
    if backend is None:
        return eval_direct(spec, x)
    return backend.eval_points(spec.packet, x, tol=tol)


def check_continuity(spec: CurrentSpec, x, step: float,
                     backend: Optional[FastBackend] = None) -> dict:
    """Fourth-order central-difference divergence residual at a point.

    Returns the raw |div J| and the residual normalized by the largest
    single |dJ_mu/dx_mu| contribution.
    """
    x = np.asarray(x, dtype=float)
    offsets = []
    for mu in range(4):
        e = np.zeros(4)
        e[mu] = step
        offsets += [x + e, x - e, x + 2 * e, x - 2 * e]
    samples = evaluate(spec, np.array(offsets), backend=backend)
    derivs = np.empty(4)
    for mu in range(4):
        f1, f_1, f2, f_2 = (samples[4 * mu + i].value[mu] for i in range(4))
        derivs[mu] = (8.0 * (f1 - f_1) - (f2 - f_2)) / (12.0 * step)
    div = float(derivs.sum())
    scale = float(np.abs(derivs).max())
    return {"divergence": div, "scale": scale,
            "residual": abs(div) / scale if scale > 0 else 0.0}


def check_causal_pointwise(sample: CurrentSample) -> float:
    """Margin J0 - |J|; nonnegative for causal currents."""
    return float(sample.value[0] - np.linalg.norm(sample.value[1:]))


def decay_scan(spec: CurrentSpec, x0: float, radii,
               directions: Optional[np.ndarray] = None,
               backend: Optional[FastBackend] = None) -> dict:
    """Fit J0 ~ (1 + |x|)^(-N) along rays in the region |x| >= |x0|.

    Returns the fitted exponent N_hat, the fit residual, and the sampled
    (radius, mean J0) table.
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(radii < abs(x0)):
        raise ValueError("radii must satisfy |x| >= |x0|")
    if directions is None:
        directions = np.concatenate([np.eye(3), -np.eye(3)])
    pts = np.array([[x0, *(r * d)] for r in radii for d in directions])
    samples = evaluate(spec, pts, backend=backend)
    j0 = np.array([s.value[0] for s in samples]).reshape(len(radii), len(directions))
    mean = j0.mean(axis=1)
    if np.any(mean <= 0) or np.any(mean < 1e-280):
        raise ValueError("J0 underflowed along the scan; fit degenerate")
    lx = np.log1p(radii)
    ly = np.log(mean)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    fitted = A @ coef
    return {"exponent": float(-coef[0]),
            "fit_residual": float(np.sqrt(np.mean((fitted - ly) ** 2))),
            "radii": radii, "mean_j0": mean}


def covariance_pair(spec: CurrentSpec, g: PoincareElement, x,
                    resample_method: str = "tricubic"):
    """Both sides of J(W(g) phi, x) = Lambda . J(phi, g^{-1} x).

    For stress-energy currents the right side carries the transformed index
    Lambda^{-1} n.  Returns (lhs, rhs) as (..., 4) arrays from the direct
    route.
    """
    x = np.asarray(x, dtype=float)
    X = x.reshape(-1, 4)
    moved = apply_poincare(g, spec.packet, method=resample_method)
    lhs_samples = eval_direct(spec.with_packet(moved), X)
    lhs = np.array([s.value for s in lhs_samples])
    ginv = g.inverse()
    back = np.array([ginv.act(p) for p in X])
    if spec.is_stress_energy:
        n_back = apply_lorentz(ETA @ g.L.T @ ETA, spec.kernel.n)
        kern = TensorKernel(n_back, spec.kernel.mass, spec.kernel.variant)
        rhs_spec = CurrentSpec(kern, spec.packet)
    else:
        rhs_spec = spec
    rhs_samples = eval_direct(rhs_spec, back)
    rhs = np.array([apply_lorentz(g.L, s.value) for s in rhs_samples])
    if x.ndim == 1:
        return lhs[0], rhs[0]
    return lhs, rhs
