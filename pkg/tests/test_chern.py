"""Chern numbers: transfer-matrix winding, Berry flux, transition-function
contour, real-space marker, and the cross-method agreements between them."""

from __future__ import annotations

import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdgtools.chern import (
    ChernResult,
    MuScanEntry,
    PauliVector,
    TransferData,
    UMatrix,
    berry_flux_chern,
    chern_mu_scan,
    chern_transfer,
    contracting_subspace,
    eigenphase_table,
    fermi_projector,
    pauli_decompose,
    real_space_chern,
    scan_csv,
    transfer_matrix,
    transition_winding,
    u_matrix,
    winding_number,
)
from bdgtools.disorder import (
    build_random_hamiltonian,
    default_spec,
    sample_realization,
)
from bdgtools.lattice import (
    FiberShape,
    assemble_bloch,
    assemble_finite_volume,
    tight_binding,
)
from bdgtools.models import build_model, reduce_su2

PIP = build_model("pip+", delta=0.3, mu=-0.5)
DID_PLUS, DID_MINUS = reduce_su2(build_model("did+", delta=1.0, mu=2.0))


def _bloch_map(model):
    return lambda k: assemble_bloch(model, k)


def _pauli_map(model):
    return lambda k: pauli_decompose(assemble_bloch(model, k))


# ---------------------------------------------------------------------------
# transfer data

def test_transfer_blocks_match_half_fourier_transform():
    for k1 in (0.0, 0.7, -2.1):
        data = transfer_matrix(PIP, k1)
        # b is the on-site block of the chain operator, hence Hermitian,
        # with band diagonal (cos k1 - mu/2, -cos k1 + mu/2)
        np.testing.assert_allclose(data.b, data.b.conj().T, atol=1e-15)
        np.testing.assert_allclose(
            np.diag(data.b).real,
            [math.cos(k1) + 0.25, -math.cos(k1) - 0.25],
            atol=1e-15,
        )
        expect_a = sum(
            np.exp(1j * k1 * j[0]) * np.asarray(blk)
            for j, blk in PIP.terms.items()
            if j[1] == -1
        )
        np.testing.assert_allclose(data.a, expect_a, atol=1e-15)


def test_transfer_conserves_symplectic_form():
    form = np.block(
        [[np.zeros((2, 2)), -np.eye(2)], [np.eye(2), np.zeros((2, 2))]]
    )
    rng = np.random.default_rng(11)
    for k1 in rng.uniform(-np.pi, np.pi, 40):
        T = transfer_matrix(PIP, float(k1)).T
        defect = np.linalg.norm(T.conj().T @ form @ T - form, 2)
        assert defect < 1e-12 * np.linalg.norm(T, 2) ** 2


def test_transfer_eigenvalues_pair_across_unit_circle():
    eigs = np.linalg.eigvals(transfer_matrix(PIP, 0.7).T)
    mirrored = 1.0 / np.conj(eigs)
    for t in eigs:
        assert np.abs(mirrored - t).min() < 1e-10 * max(1.0, abs(t))


def test_transfer_data_rejects_nonconserving_matrix():
    rng = np.random.default_rng(3)
    bad = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    with pytest.raises(ValueError, match="conserve"):
        TransferData(k1=0.0, a=np.eye(2), b=np.eye(2), T=bad, cond_a=1.0)


def test_transfer_rejects_long_range_across_direction_2():
    m = tight_binding(
        FiberShape(1), {(0, 2): [[0.5]], (0, -2): [[0.5]]}
    )
    with pytest.raises(ValueError, match="direction 2"):
        transfer_matrix(m, 0.3)


def test_transfer_singular_hopping_reports_retry_hint():
    chain = tight_binding(FiberShape(1), {(1, 0): [[1.0]], (-1, 0): [[1.0]]})
    with pytest.raises(ValueError, match="singular"):
        transfer_matrix(chain, 0.3)


def test_contracting_subspace_is_half_dimensional_lagrangian_plane():
    form = np.block(
        [[np.zeros((2, 2)), -np.eye(2)], [np.eye(2), np.zeros((2, 2))]]
    )
    for k1 in (-2.5, 0.0, 1.3):
        phi = contracting_subspace(transfer_matrix(PIP, k1))
        assert phi.shape == (4, 2)
        np.testing.assert_allclose(phi.conj().T @ phi, np.eye(2), atol=1e-12)
        assert np.linalg.norm(phi.conj().T @ form @ phi, 2) < 1e-8


def test_contracting_subspace_detects_closed_gap():
    closed = build_model("pip+", delta=0.3, mu=0.0)  # bands touch at (pi, 0)
    with pytest.raises(ValueError, match="unit circle"):
        contracting_subspace(transfer_matrix(closed, math.pi))


def test_u_matrix_does_not_depend_on_the_plane_basis():
    phi = contracting_subspace(transfer_matrix(PIP, 0.7))
    rng = np.random.default_rng(7)
    mix = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    u1 = u_matrix(phi, 0.7).U
    u2 = u_matrix(phi @ mix, 0.7).U
    assert np.abs(u1 - u2).max() < 1e-10


def test_u_matrix_rejects_wrong_shape():
    with pytest.raises(ValueError, match="2d x d"):
        u_matrix(np.ones((3, 2)))


def test_u_matrix_constructor_rejects_nonunitary():
    with pytest.raises(ValueError, match="unitary"):
        UMatrix(k1=0.0, U=np.array([[1.0, 1.0], [0.0, 1.0]]))


# ---------------------------------------------------------------------------
# winding of det U

def test_winding_of_constant_u_is_zero():
    ks = -math.pi + 2 * math.pi * np.arange(8) / 8
    samples = [UMatrix(float(k), np.eye(2)) for k in ks]
    res = winding_number(samples)
    assert res.value == 0 and res.residual < 1e-12


def test_winding_of_single_phase_loop_is_one():
    ks = -math.pi + 2 * math.pi * np.arange(16) / 16
    samples = [
        UMatrix(float(k), np.diag([np.exp(1j * k), 1.0])) for k in ks
    ]
    res = winding_number(samples)
    assert res.value == 1 and res.residual < 1e-12


def test_winding_refuses_aliased_sampling_without_refinement():
    ks = -math.pi + 2 * math.pi * np.arange(8) / 8
    fast = lambda k: UMatrix(float(k), np.array([[np.exp(5j * k)]]))
    with pytest.raises(ValueError, match="alias"):
        winding_number([fast(k) for k in ks])
    res = winding_number([fast(k) for k in ks], refine=fast)
    assert res.value == 5 and res.residual < 1e-12
    assert "refined" in res.grid


def test_winding_needs_at_least_two_samples():
    with pytest.raises(ValueError, match="two samples"):
        winding_number([UMatrix(0.0, np.eye(2))])


def test_chern_transfer_chiral_p_across_the_transition():
    for mu, expect in ((-0.5, -1), (-0.01, -1), (0.01, 1)):
        res = chern_transfer(build_model("pip+", delta=0.3, mu=mu))
        assert res.value == expect, (mu, res)
        assert res.residual < 1e-8
        assert res.method == "transfer"


def test_chern_transfer_opposite_chirality_flips_the_sign():
    plus = chern_transfer(build_model("pip+", delta=0.3, mu=-0.5))
    minus = chern_transfer(build_model("pip-", delta=0.3, mu=-0.5))
    assert (plus.value, minus.value) == (-1, 1)


def test_chern_transfer_full_chiral_d_counts_both_spin_sectors():
    # the 4x4 operator splits into two unitarily equivalent sectors, each
    # carrying -2
    res = chern_transfer(build_model("did+", delta=1.0, mu=2.0))
    assert res.value == -4 and res.residual < 1e-8


def test_chern_transfer_rejects_tiny_grid():
    with pytest.raises(ValueError, match="n_k"):
        chern_transfer(PIP, n_k=4)


def test_eigenphase_table_layout():
    table = eigenphase_table(PIP, n_k=31)
    assert table.shape == (31, 3)
    np.testing.assert_allclose(table[0, 0], -math.pi, atol=1e-12)
    np.testing.assert_allclose(table[-1, 0], math.pi, atol=1e-12)
    phases = table[:, 1:]
    assert (np.diff(phases, axis=1) >= 0).all()
    assert (np.abs(phases) <= math.pi + 1e-12).all()


# ---------------------------------------------------------------------------
# Pauli decomposition

def test_pauli_decompose_chiral_d_sector_points():
    at = _pauli_map(DID_PLUS)
    for k, expect in (
        ((0.0, 0.0), (0.0, 0.0, 1.0)),
        ((math.pi, 0.0), (-2.0, 0.0, -1.0)),
        ((math.pi / 2, math.pi / 2), (0.0, 1.0, -1.0)),
    ):
        p = at(k)
        np.testing.assert_allclose((p.p1, p.p2, p.p3), expect, atol=1e-14)
    # the conjugate sector flips p2
    q = _pauli_map(DID_MINUS)((math.pi / 2, math.pi / 2))
    np.testing.assert_allclose((q.p1, q.p2, q.p3), (0.0, -1.0, -1.0), atol=1e-14)


def test_pauli_decompose_chiral_p_points():
    for name, sign in (("pip+", 1.0), ("pip-", -1.0)):
        at = _pauli_map(build_model(name, delta=0.3, mu=0.0))
        p = at((math.pi / 2, 0.0))  # branch-independent point
        np.testing.assert_allclose((p.p1, p.p2, p.p3), (0.0, -0.3, 1.0), atol=1e-14)
        q = at((0.0, math.pi / 2))  # branch-revealing point
        np.testing.assert_allclose(
            (q.p1, q.p2, q.p3), (sign * 0.3, 0.0, 1.0), atol=1e-14
        )


def test_pauli_decompose_rejects_traceful_matrix():
    with pytest.raises(ValueError, match="trace"):
        pauli_decompose(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_pauli_decompose_rejects_non_hermitian():
    with pytest.raises(ValueError, match="Hermitian"):
        pauli_decompose(np.array([[0.0, 1.0], [0.0, 0.0]]))


@settings(max_examples=50, deadline=None)
@given(
    p1=st.floats(-5, 5, allow_subnormal=False),
    p2=st.floats(-5, 5, allow_subnormal=False),
    p3=st.floats(-5, 5, allow_subnormal=False),
)
def test_pauli_decompose_inverts_reconstruction(p1, p2, p3):
    p = pauli_decompose(PauliVector(p1, p2, p3).matrix())
    assert (p.p1, p.p2, p.p3) == (p1, p2, p3)


# ---------------------------------------------------------------------------
# Berry flux

def test_berry_flux_of_flat_trivial_band_is_zero():
    flat = lambda k: np.diag([1.0, -1.0])
    res = berry_flux_chern(flat, grid_n=24)
    assert res.value == 0 and res.residual < 1e-12


def test_berry_flux_chiral_d_sectors_are_opposite():
    plus = berry_flux_chern(_bloch_map(DID_PLUS), grid_n=48)
    minus = berry_flux_chern(_bloch_map(DID_MINUS), grid_n=48)
    assert (plus.value, minus.value) == (-2, 2)
    assert plus.residual < 1e-10 and minus.residual < 1e-10


def test_berry_flux_trivial_outside_the_band():
    for mu in (5.0, -5.0):
        sector = reduce_su2(build_model("did+", delta=1.0, mu=mu))[0]
        res = berry_flux_chern(_bloch_map(sector), grid_n=24)
        assert res.value == 0 and res.residual < 1e-10


def test_berry_flux_is_stable_under_grid_doubling():
    coarse = berry_flux_chern(_bloch_map(PIP), grid_n=24)
    fine = berry_flux_chern(_bloch_map(PIP), grid_n=48)
    assert coarse.value == fine.value == -1


def test_berry_flux_reports_gap_closure():
    closed = build_model("pip+", delta=0.3, mu=0.0)
    with pytest.raises(ValueError, match="gap closes"):
        berry_flux_chern(_bloch_map(closed), grid_n=24)


def test_berry_flux_rejects_coarse_grid():
    with pytest.raises(ValueError, match="grid_n"):
        berry_flux_chern(_bloch_map(PIP), grid_n=12)


def test_berry_flux_agrees_with_transfer_winding():
    for delta, mu in ((0.3, -0.5), (0.5, 1.0)):
        model = build_model("pip+", delta=delta, mu=mu)
        assert (
            berry_flux_chern(_bloch_map(model), grid_n=24).value
            == chern_transfer(model).value
        )


# ---------------------------------------------------------------------------
# transition-function contour

def test_transition_winding_chiral_d_sectors():
    plus = transition_winding(_pauli_map(DID_PLUS), mu=2.0)
    minus = transition_winding(_pauli_map(DID_MINUS), mu=2.0)
    assert (plus.value, minus.value) == (-2, 2)
    assert plus.residual < 1e-6 and minus.residual < 1e-6
    assert plus.method == "contour"


def test_transition_winding_needs_mu_inside_the_band():
    for mu in (0.0, 4.5, -4.0):
        with pytest.raises(ValueError, match="mu"):
            transition_winding(_pauli_map(DID_PLUS), mu=mu)


def test_transition_winding_refuses_unexpected_zero_set():
    # sin k1, sin k2 vanish jointly at all four half-period points
    family = lambda k: PauliVector(math.sin(k[0]), math.sin(k[1]), 0.5)
    with pytest.raises(ValueError, match="zero set"):
        transition_winding(family, mu=2.0)


# ---------------------------------------------------------------------------
# real-space marker

def test_marker_clean_chiral_p():
    P = fermi_projector(assemble_finite_volume(PIP, (20, 20)))
    res = real_space_chern(P, (20, 20))
    assert res.value == -1
    assert abs(res.raw + 1.0) < 0.15
    assert res.sobolev is not None and 0.0 < res.sobolev < 5.0


def test_marker_trivial_without_pairing():
    empty = build_model("pip+", delta=0.0, mu=-5.0)  # Fermi level below the band
    P = fermi_projector(assemble_finite_volume(empty, (12, 12)))
    res = real_space_chern(P, (12, 12))
    assert res.value == 0 and abs(res.raw) < 0.05


def test_marker_withholds_verdict_too_close_to_the_transition():
    # at L = 8 the marker of a mu = -0.05 chiral p-wave has not converged
    near = build_model("pip+", delta=0.3, mu=-0.05)
    P = fermi_projector(assemble_finite_volume(near, (8, 8)))
    res = real_space_chern(P, (8, 8))
    assert res.value is None
    assert res.residual > 0.3


def test_marker_rejects_inconsistent_shapes():
    with pytest.raises(ValueError, match="torus"):
        real_space_chern(np.eye(10), (3, 3))
    with pytest.raises(ValueError, match="torus"):
        real_space_chern(np.eye(7), (4, 4))


def test_marker_survives_weak_disorder():
    spec = default_spec(r=1)
    values = []
    for seed in range(8):
        realization = sample_realization(spec, (12, 12), seed=seed)
        H = build_random_hamiltonian(PIP, spec, 0.05, realization)
        values.append(real_space_chern(fermi_projector(H), (12, 12)).value)
    assert sum(v == -1 for v in values) > 4


# ---------------------------------------------------------------------------
# chemical-potential scans

def test_mu_scan_chiral_p_transition():
    family = lambda mu: build_model("pip+", delta=0.3, mu=mu)
    entries = chern_mu_scan(family, [-0.5, -0.01, 0.01])
    assert [e.error for e in entries] == [None, None, None]
    assert [e.result.value for e in entries] == [-1, -1, 1]


def test_mu_scan_records_gap_closure_and_continues():
    family = lambda mu: build_model("pip+", delta=0.3, mu=mu)
    entries = chern_mu_scan(family, [-0.5, 0.0, 0.5])
    assert entries[0].result.value == -1
    assert entries[1].result is None and "gap-closed" in entries[1].error
    assert entries[2].result.value == 1


def test_mu_scan_berry_chiral_d_plateau_and_trivial_side():
    family = lambda mu: reduce_su2(build_model("did+", delta=1.0, mu=mu))[0]
    entries = chern_mu_scan(family, [2.0, 5.0], method="berry")
    assert [e.result.value for e in entries] == [-2, 0]


def test_mu_scan_contour_route():
    family = lambda mu: reduce_su2(build_model("did+", delta=1.0, mu=mu))[0]
    (entry,) = chern_mu_scan(family, [2.0], method="contour")
    assert entry.result.value == -2


def test_mu_scan_rejects_unknown_method():
    with pytest.raises(ValueError, match="method"):
        chern_mu_scan(lambda mu: PIP, [0.5], method="spin")


def test_mu_scan_entry_requires_exactly_one_of_result_and_error():
    res = ChernResult(value=1, method="berry", raw=1.0, grid="", residual=0.0)
    with pytest.raises(ValueError, match="exactly one"):
        MuScanEntry(mu=0.5, method="berry", result=res, error="boom")
    with pytest.raises(ValueError, match="exactly one"):
        MuScanEntry(mu=0.5, method="berry", result=None, error=None)


def test_scan_csv_layout_keeps_error_rows():
    family = lambda mu: build_model("pip+", delta=0.3, mu=mu)
    text = scan_csv(chern_mu_scan(family, [-0.5, 0.0]))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["mu", "method", "raw", "value", "residual", "grid"]
    ok, bad = rows[1], rows[2]
    assert ok[0] == "-0.5" and ok[1] == "transfer" and ok[3] == "-1"
    assert float(ok[2]) == pytest.approx(-1.0, abs=1e-8)
    assert bad[0] == "0" and bad[3] == "" and bad[5].startswith("error: ")
