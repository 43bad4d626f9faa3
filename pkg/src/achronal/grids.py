"""Momentum-space grids and their conjugate position grids.

Both grids are cell-centered: momentum nodes sit at (n + 1/2 - N/2) h for
h = 2 P / N, position nodes at (m + 1/2 - M/2) dx for dx = 2 pi / (M h).
No node lies at the origin or on a coordinate plane, so axis rotations by
multiples of pi/2 permute nodes exactly and strict half-space predicates
partition quadrature nodes cleanly.

The core transform realizes F(x) = sum_p f(p) exp(i p.x) on the conjugate
grid via a phase-dressed FFT; `refine` evaluates the same trigonometric sum
on a grid `refine` times finer by zero-padded embedding (exact, since the
embedded nodes carry zero amplitude).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft


@dataclass(frozen=True)
class MomentumGrid:
    """Uniform cubic momentum grid over [-p_max, p_max]^3 with n nodes per axis."""

    n: int
    p_max: float

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        if not (self.p_max > 0 and np.isfinite(self.p_max)):
            raise ValueError(f"p_max must be positive finite, got {self.p_max}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.p_max / self.n

    @property
    def position_spacing(self) -> float:
        return np.pi / self.p_max

    @property
    def weight(self) -> float:
        """Quadrature weight h^3 of the uniform momentum sum."""
        return self.spacing ** 3

    def axis(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5 - self.n / 2) * self.spacing

    def position_axis(self, refine: int = 1) -> np.ndarray:
        m = self.n * refine
        dx = 2.0 * np.pi / (m * self.spacing)
        return (np.arange(m) + 0.5 - m / 2) * dx

    def meshgrid(self):
        ax = self.axis()
        return np.meshgrid(ax, ax, ax, indexing="ij")

    def node_coordinates(self) -> np.ndarray:
        """All momentum nodes as an (n^3, 3) array, x1 slowest."""
        X, Y, Z = self.meshgrid()
        return np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def interior_extent(self, margin: int) -> float:
        """Largest |p_i| allowed when the outermost `margin` nodes must vanish."""
        return self.p_max - margin * self.spacing

    def margin_mask(self, margin: int) -> np.ndarray:
        """Boolean n^3 cube, True on the outermost `margin` band per side."""
        idx = np.arange(self.n)
        band = (idx < margin) | (idx >= self.n - margin)
        X, Y, Z = np.meshgrid(band, band, band, indexing="ij")
        return X | Y | Z

    def same_geometry(self, other: "MomentumGrid") -> bool:
        return self.n == other.n and self.p_max == other.p_max


def _axis_phases(n: int, m: int):
    """Pre/post phase vectors turning an ifft into the cell-centered transform."""
    c = (1 - m) / 2.0
    j = np.arange(m)
    pre = np.exp(2j * np.pi * c * j / m)
    post = np.exp(2j * np.pi * c * (j + c) / m)
    return pre, post


def momentum_to_position(values: np.ndarray, grid: MomentumGrid, refine: int = 1) -> np.ndarray:
    """Evaluate F(x) = sum_p f(p) exp(i p.x) on the conjugate position grid.

    `values` has shape (..., n, n, n); the result has shape
    (..., refine*n, refine*n, refine*n).  No quadrature weight or (2 pi)
    factor is applied.
    """
    n = grid.n
    m = n * refine
    values = np.asarray(values, dtype=complex)
    if values.shape[-3:] != (n, n, n):
        raise ValueError(f"values shape {values.shape} does not end in ({n},{n},{n})")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    if refine > 1:
        off = (m - n) // 2
        padded = np.zeros(values.shape[:-3] + (m, m, m), dtype=complex)
        padded[..., off:off + n, off:off + n, off:off + n] = values
        values = padded
    pre, post = _axis_phases(n, m)
    work = values * pre[:, None, None] * pre[None, :, None] * pre[None, None, :]
    out = scipy.fft.ifftn(work, axes=(-3, -2, -1), workers=-1)
    out *= m ** 3
    out *= post[:, None, None] * post[None, :, None] * post[None, None, :]
    return out


def momentum_to_position_direct(node_values: np.ndarray, nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Reference mode sum F(x) = sum_p f(p) exp(i p.x) at arbitrary points.

    nodes: (k, 3) momentum nodes, node_values: (..., k), points: (j, 3).
    Slow; used as the oracle for the FFT path and for off-grid evaluation.
    """
    phases = np.exp(1j * (points @ nodes.T))
    return node_values @ phases.T


def position_window_mask(grid: MomentumGrid, half_nodes: int, refine: int = 1) -> np.ndarray:
    """Boolean cube selecting the centered window of 2*half_nodes*refine nodes per axis."""
    m = grid.n * refine
    k = half_nodes * refine
    if 2 * k > m:
        raise ValueError(f"window of {2 * k} nodes exceeds grid period {m}")
    idx = np.arange(m)
    inside = (idx >= m // 2 - k) & (idx < m // 2 + k)
    X, Y, Z = np.meshgrid(inside, inside, inside, indexing="ij")
    return X & Y & Z
