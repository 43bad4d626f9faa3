import numpy as np
import pytest

from achronal.currents import (BackendMismatchError, CurrentSpec,
                               FactorizationError, build_fast,
                               check_causal_pointwise, check_continuity,
                               covariance_pair, decay_scan, eval_direct)
from achronal.grids import MomentumGrid
from achronal.kernels import CausalKernel, GFunction, TensorKernel, kernel_K
from achronal.minkowski import PoincareElement, boost_z, fourvector, rotation
from achronal.wavepacket import WavePacket, energy, make_packet

M = 1.0


def brute_current(packet, kern, x):
    """Row-by-row literal sum with the standalone kernel function."""
    pts = packet.support_points()
    vals = packet.support_values() * packet.grid.weight
    eps = energy(pts, packet.mass)
    a = vals * np.exp(-1j * (eps * x[0] - pts @ x[1:]))
    J = np.zeros(4, dtype=complex)
    for i in range(len(pts)):
        K = kernel_K(pts[i][None, :], pts, kern)
        J += np.conj(a[i]) * (a[:, None] * K).sum(0)
    return (J / (2 * np.pi) ** 3).real


def test_zero_packet_zero_current(grid16, kern_basic):
    pkt = WavePacket(grid16, np.zeros((16,) * 3, dtype=complex), M, 2)
    s = eval_direct(CurrentSpec(kern_basic, pkt), fourvector(0.2, 0.1, 0, 0))
    assert np.abs(s.value).max() == 0.0


def test_direct_matches_bruteforce(spec16):
    x = np.array([0.3, 0.4, -0.2, 0.7])
    ref = brute_current(spec16.packet, spec16.kernel, x)
    got = eval_direct(spec16, x)
    assert np.abs(got.value - ref).max() < 1e-13
    assert got.error_estimate < 1e-12  # imaginary residue at roundoff


def test_direct_reality(spec16):
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-1, 1, 5), rng.uniform(-2, 2, (5, 3))])
    for s in eval_direct(spec16, pts):
        assert s.error_estimate <= 1e-10 * max(np.abs(s.value).max(), 1e-30)


def test_spatial_symmetry_of_symmetric_packet(spec16):
    # real rotationally symmetric packet at x0 = 0: J0 even, J odd under x -> -x
    x = np.array([0.0, 0.7, -0.3, 0.4])
    plus = eval_direct(spec16, x)
    minus = eval_direct(spec16, np.concatenate([[0.0], -x[1:]]))
    assert plus.value[0] == pytest.approx(minus.value[0], rel=1e-12)
    assert np.abs(plus.value[1:] + minus.value[1:]).max() < 1e-14


def test_normalization_sum_over_slice(spec16, fast16):
    grid = spec16.packet.grid
    J = fast16.slice_fields(spec16.packet, 0.0)
    dx = grid.position_spacing
    total = J[0].sum() * dx ** 3
    norm2 = spec16.packet.norm_squared()
    assert abs(total - norm2) / norm2 < 1e-2


def test_fast_matches_direct_causal(spec16, fast16):
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(-1, 1, 20), rng.uniform(-2, 2, (20, 3))])
    direct = np.array([s.value for s in eval_direct(spec16, pts)])
    fast = np.array([s.value for s in fast16.eval_points(spec16.packet, pts)])
    scale = np.abs(direct).max()
    assert np.abs(fast - direct).max() / scale < 1e-6


def test_fast_full_rank_equals_direct(grid16, kern_basic):
    pkt = make_packet(grid16, M, sigma=0.6, core_radius=0.5, support_radius=1.0)
    spec = CurrentSpec(kern_basic, pkt)
    n_sup = int(pkt.support_mask().sum())
    fb = build_fast(spec, rank=n_sup, n_landmarks=n_sup)
    x = np.array([0.4, 0.3, -0.1, 0.2])
    d = eval_direct(spec, x)
    f = fb.eval_points(pkt, x)
    assert np.abs(f.value - d.value).max() / np.abs(d.value).max() < 1e-12


def test_fast_matches_direct_tensor(tspec16, tfast16):
    rng = np.random.default_rng(2)
    pts = np.column_stack([rng.uniform(-1, 1, 20), rng.uniform(-2, 2, (20, 3))])
    direct = np.array([s.value for s in eval_direct(tspec16, pts)])
    fast = np.array([s.value for s in tfast16.eval_points(tspec16.packet, pts)])
    assert np.abs(fast - direct).max() / np.abs(direct).max() < 1e-6


def test_slice_fields_match_points(spec16, fast16):
    grid = spec16.packet.grid
    J = fast16.slice_fields(spec16.packet, 0.35)
    ax = grid.position_axis()
    pt = np.array([0.35, ax[4], ax[9], ax[11]])
    s = fast16.eval_points(spec16.packet, pt)
    assert np.abs(J[:, 4, 9, 11] - s.value).max() < 1e-12 * np.abs(s.value).max() + 1e-15


def test_slice_refine_matches_direct(spec16, fast16):
    grid = spec16.packet.grid
    J = fast16.slice_fields(spec16.packet, 0.1, refine=2)
    ax = grid.position_axis(refine=2)
    pt = np.array([0.1, ax[10], ax[17], ax[21]])
    d = eval_direct(spec16, pt)
    assert np.abs(J[:, 10, 17, 21] - d.value).max() / np.abs(d.value).max() < 1e-6


def test_factorization_error_for_oscillatory(grid16, packet16):
    kern = CausalKernel(GFunction.oscillatory(50.0, M), M)
    with pytest.raises(FactorizationError):
        build_fast(CurrentSpec(kern, packet16), tol=1e-8, n_landmarks=400)


def test_backend_rejects_foreign_packet(fast16, grid16):
    # support reaches outside the factorized node ball
    other = make_packet(grid16, M, sigma=0.5, center=(0, 0, 1.4),
                        core_radius=0.4, support_radius=0.8, margin=1)
    with pytest.raises(BackendMismatchError):
        fast16.eval_points(other, fourvector(0, 0, 0, 0))


def test_continuity_fourth_order(spec16):
    rng = np.random.default_rng(3)
    ratios = []
    for _ in range(4):
        x = np.concatenate([rng.uniform(-0.3, 0.3, 1), rng.uniform(-1.0, 1.0, 3)])
        r1 = check_continuity(spec16, x, 0.2)
        r2 = check_continuity(spec16, x, 0.1)
        ratios.append(r1["residual"] / r2["residual"])
    ratios = np.array(ratios)
    assert np.all((ratios > 16 / 1.3) & (ratios < 16 * 1.3))


def test_continuity_tensor_and_printed_variant(tspec16, packet16):
    x = np.array([0.1, 0.2, 0.1, -0.1])
    r1 = check_continuity(tspec16, x, 0.2)
    r2 = check_continuity(tspec16, x, 0.1)
    assert 16 / 1.3 < r1["residual"] / r2["residual"] < 16 * 1.3
    printed = CurrentSpec(TensorKernel([1, 0, 0, 0], M, "as_printed"), packet16)
    bad = check_continuity(printed, x, 0.2)
    assert bad["residual"] > 0.1  # conservation genuinely fails


def test_zero_current_continuity(grid16, kern_basic):
    pkt = WavePacket(grid16, np.zeros((16,) * 3, dtype=complex), M, 2)
    r = check_continuity(CurrentSpec(kern_basic, pkt), np.zeros(4), 0.2)
    assert r["residual"] == 0.0


def test_causal_margin_on_slices(spec16, fast16):
    grid = spec16.packet.grid
    for x0 in (0.0, 1.0):
        J = fast16.slice_fields(spec16.packet, x0)
        margin = J[0] - np.linalg.norm(J[1:], axis=0)
        assert margin.min() >= -1e-9 * J[0].max()


def test_causal_margin_zero_current():
    from achronal.currents import CurrentSample
    s = CurrentSample(np.zeros(4), np.zeros(4), "direct", 0.0)
    assert check_causal_pointwise(s) == 0.0


def test_noncausal_profile_violates_margin(grid16):
    # eigenvector construction: a state built from the most negative Gram
    # direction makes J0(0, 0) negative
    kern = CausalKernel(GFunction.oscillatory(50.0, M), M)
    base = make_packet(grid16, M, sigma=1.0, core_radius=0.9, support_radius=1.8)
    from achronal.kernels import gram_matrix
    pts = base.support_points()
    G = gram_matrix(pts, kern)
    w, V = np.linalg.eigh(G)
    assert w[0] < -0.1
    amp = np.zeros((16,) * 3, dtype=complex)
    amp[base.support_mask()] = V[:, 0]
    pkt = WavePacket(grid16, amp, M, base.margin, {"kind": "gram_eigvec"})
    s = eval_direct(CurrentSpec(kern, pkt), np.zeros(4))
    assert check_causal_pointwise(s) < 0.0
    assert s.value[0] < 0.0


def test_decay_scan_exponent(spec16):
    radii = np.array([2.0, 3.0, 4.0, 5.0, 6.0])
    out = decay_scan(spec16, 0.0, radii)
    assert out["exponent"] >= 3.0
    # scaling the packet shifts log J0 but not the fitted slope
    scaled = spec16.with_packet(
        spec16.packet.with_amplitudes(2.0 * spec16.packet.amplitudes))
    out2 = decay_scan(scaled, 0.0, radii)
    assert out2["exponent"] == pytest.approx(out["exponent"], rel=1e-10)


def test_decay_scan_mass_stability(grid16):
    kern2 = CausalKernel(GFunction.basic(1.5, 2.0), 2.0)
    pkt2 = make_packet(grid16, 2.0, sigma=1.0, core_radius=0.9, support_radius=1.8)
    out = decay_scan(CurrentSpec(kern2, pkt2), 0.0, np.array([2.0, 3.0, 4.0, 5.0]))
    assert out["exponent"] >= 3.0


def test_decay_scan_validates_radii(spec16):
    with pytest.raises(ValueError):
        decay_scan(spec16, 2.0, np.array([1.0, 3.0]))


def test_current_covariance_translation(spec16):
    g = PoincareElement.translation(fourvector(0.4, 0.2, -0.1, 0.3))
    rng = np.random.default_rng(4)
    pts = np.column_stack([rng.uniform(-0.5, 0.5, 4), rng.uniform(-1, 1, (4, 3))])
    lhs, rhs = covariance_pair(spec16, g, pts)
    assert np.abs(lhs - rhs).max() / np.abs(rhs).max() < 1e-12


def test_current_covariance_boost(spec16):
    g = PoincareElement.from_lorentz(boost_z(0.25))
    rng = np.random.default_rng(5)
    pts = np.column_stack([rng.uniform(-0.5, 0.5, 4), rng.uniform(-1, 1, (4, 3))])
    lhs, rhs = covariance_pair(spec16, g, pts)
    assert np.abs(lhs - rhs).max() / np.abs(rhs).max() < 3e-2


def test_tensor_covariance_with_index_transform(tspec16):
    g = PoincareElement.from_lorentz(boost_z(0.25) @ rotation([0, 1, 0], 0.4))
    rng = np.random.default_rng(6)
    pts = np.column_stack([rng.uniform(-0.5, 0.5, 3), rng.uniform(-1, 1, (3, 3))])
    lhs, rhs = covariance_pair(tspec16, g, pts)
    assert np.abs(lhs - rhs).max() / np.abs(rhs).max() < 3e-2


def test_tensor_covariance_rotation_exact(tspec16):
    g = PoincareElement.from_lorentz(rotation([0, 0, 1], np.pi / 2))
    rng = np.random.default_rng(7)
    pts = np.column_stack([rng.uniform(-0.5, 0.5, 3), rng.uniform(-1, 1, (3, 3))])
    lhs, rhs = covariance_pair(tspec16, g, pts)
    assert np.abs(lhs - rhs).max() / np.abs(rhs).max() < 1e-12
