"""Resolvent solver, Combes-Thomas probe, fractional-moment scan, T-matrix
update, Fermi projection decay, and the localization phase diagram."""

from __future__ import annotations

import numpy as np
import pytest

from bdgtools.disorder import (
    DisorderRealization,
    DisorderSpec,
    DisorderTerm,
    Distribution,
    build_random_hamiltonian,
    default_spec,
    sample_realization,
    standard_W,
)
from bdgtools.greens import (
    LOCALIZED,
    NO_VERDICT,
    OUTSIDE,
    ResolventSolver,
    bloch_band_grid,
    combes_thomas_probe,
    fermi_projection_decay,
    fractional_moment_scan,
    green_matrix,
    localization_phase_diagram,
    spectral_distance,
    tmatrix_update,
)
from bdgtools.lattice import FiberShape, assemble_finite_volume, tight_binding
from bdgtools.models import ModelParams, build_model, central_gap

PIP = build_model("pip+", delta=0.3, mu=-0.5)
GAP = central_gap("pip+", ModelParams(0.3, -0.5))
SPEC = default_spec(r=1)


def _zero_model(dim: int = 2):
    return tight_binding(FiberShape(dim), {(0, 0): np.zeros((dim, dim))})


# ---------------------------------------------------------------------------
# resolvent solver

def test_resolvent_of_zero_operator_is_diagonal():
    H = assemble_finite_volume(_zero_model(), (4, 4))
    blk = green_matrix(H, 1j, (1, 2), (1, 2))
    assert np.abs(blk - (-1j) * np.eye(2)).max() < 1e-14
    off = green_matrix(H, 1j, (0, 0), (1, 2))
    assert np.abs(off).max() < 1e-14


def test_resolvent_matches_dense_inverse():
    H = assemble_finite_volume(PIP, (6, 6))
    z = 0.3 + 0.2j
    dense = np.linalg.inv(z * np.eye(H.dim) - H.dense())
    solver = ResolventSolver(H, z)
    for n, m in [((0, 0), (0, 0)), ((2, 3), (5, 1)), ((4, 4), (1, 5))]:
        got = solver.block(n, m)
        ref = dense[H.site_slice(n), H.site_slice(m)]
        assert np.abs(got - ref).max() < 1e-12


def test_resolvent_conjugation_symmetry():
    H = assemble_finite_volume(PIP, (8, 8))
    z = 0.05 + 0.02j
    a = green_matrix(H, z, (2, 3), (5, 1))
    b = green_matrix(H, np.conj(z), (5, 1), (2, 3))
    assert np.abs(a - b.conj().T).max() < 1e-13


def test_resolvent_rejects_z_on_the_spectrum():
    H = assemble_finite_volume(PIP, (4, 4))
    e = float(H.eigenvalues()[3])
    with pytest.raises((ValueError, ArithmeticError)):
        solver = ResolventSolver(H, e)
        solver.columns((0, 0))


def test_adjoint_solve_matches_conjugate_factorization():
    H = assemble_finite_volume(PIP, (5, 5))
    z = 0.4 + 0.3j
    rng = np.random.default_rng(5)
    b = rng.normal(size=(H.dim, 3)) + 1j * rng.normal(size=(H.dim, 3))
    x1 = ResolventSolver(H, z).solve_adjoint(b)
    x2 = ResolventSolver(H, np.conj(z)).solve(b)
    assert np.abs(x1 - x2).max() < 1e-11


def test_interior_blocks_agree_across_boundary_conditions():
    # deep in the gap the resolvent is short-ranged, so boundary effects on
    # a center block die off before they reach it
    z = 0.0 + 0.05j
    per = ResolventSolver(assemble_finite_volume(PIP, (16, 16)), z)
    opn = ResolventSolver(assemble_finite_volume(PIP, (16, 16), bc="open"), z)
    worst = 0.0
    for n, m in [((8, 8), (8, 8)), ((8, 8), (9, 8)), ((7, 8), (8, 9))]:
        worst = max(worst, float(np.abs(per.block(n, m) - opn.block(n, m)).max()))
    assert worst < 0.05


# ---------------------------------------------------------------------------
# Bloch bands and spectral distance

def test_bloch_band_grid_shape_and_symmetry():
    bands = bloch_band_grid(PIP, 32)
    assert bands.shape == (32 * 32, 2)
    flat = np.sort(bands.ravel())
    assert np.abs(flat + flat[::-1]).max() < 1e-12


def test_spectral_distance_matches_half_gap():
    assert abs(spectral_distance(PIP, 0.0) - GAP / 2) < 2e-3


# ---------------------------------------------------------------------------
# Combes-Thomas probe

def test_combes_thomas_rates_increase_with_distance():
    pts = combes_thomas_probe(PIP, [0.0, 0.05, 0.09, 0.13, 0.16], L=20)
    pairs = sorted((p.distance, p.rate) for p in pts)
    rates = [r for _, r in pairs]
    assert all(b > a for a, b in zip(rates, rates[1:]))


def test_combes_thomas_onsite_norm_bounded_by_inverse_distance():
    pts = combes_thomas_probe(PIP, [0.0, 0.1, 0.16, 4.5, 6.0], L=20)
    for p in pts:
        assert p.onsite_norm <= 1.0 / p.distance


def test_combes_thomas_rejects_in_spectrum_energy():
    with pytest.raises(ValueError, match="spectrum"):
        combes_thomas_probe(PIP, [1.0], L=20)


# ---------------------------------------------------------------------------
# fractional-moment scan

def test_clean_scan_matches_deterministic_profile():
    z = 0.0 + 1e-4j
    est = fractional_moment_scan(PIP, None, 0.0, z, L=16)
    assert est.n_realizations == 1
    assert np.all(est.tau_stderr == 0.0)
    H = assemble_finite_volume(PIP, (16, 16))
    cols = ResolventSolver(H, np.conj(z)).columns((8, 8))
    ref = np.array(
        [
            np.linalg.norm(cols[H.site_slice((8 + d, 8)), :]) ** 0.3
            for d in est.distances
        ]
    )
    assert np.abs(est.tau - ref).max() < 1e-13


def test_scan_decays_in_the_gap_with_disorder():
    est = fractional_moment_scan(
        PIP, SPEC, 0.05, 1e-4j, L=24, n_realizations=32, seed=3, threads=2
    )
    assert est.significant()
    assert est.r_squared > 0.8
    assert est.rate > 0.1


def test_scan_rate_nonincreasing_in_coupling():
    rates = []
    for lam in [0.0, 0.05, 0.1, 0.2]:
        est = fractional_moment_scan(
            PIP,
            SPEC if lam else None,
            lam,
            1e-4j,
            L=24,
            n_realizations=32 if lam else 1,
            seed=3,
            threads=2,
        )
        rates.append(est.rate)
    assert all(b <= a + 1e-3 for a, b in zip(rates, rates[1:]))


def test_scan_epsilon_independence_in_the_gap():
    kw = dict(L=20, n_realizations=16, seed=3, threads=2)
    a = fractional_moment_scan(PIP, SPEC, 0.05, 0.0 + 1e-3j, **kw)
    b = fractional_moment_scan(PIP, SPEC, 0.05, 0.0 + 1e-5j, **kw)
    bound = 2.0 * np.sqrt(a.tau_stderr**2 + b.tau_stderr**2)
    inside = bound > 0
    assert np.all(np.abs(a.tau - b.tau)[inside] <= bound[inside])


def test_scan_relabeling_covariance_is_exact_per_realization():
    # shifting the origin and translating the sampled field the same way
    # must reproduce tau(d) realization-by-realization, not just in law
    L, t = (10, 10), (3, 4)
    real_a = sample_realization(SPEC, L, seed=21)
    shifted = {
        (j, l): real_a.values[(j, ((l[0] + t[0]) % L[0], (l[1] + t[1]) % L[1]))]
        for (j, l) in real_a.values
    }
    real_b = DisorderRealization(L, shifted, seed=21)
    Ha = build_random_hamiltonian(PIP, SPEC, 0.3, real_a)
    Hb = build_random_hamiltonian(PIP, SPEC, 0.3, real_b)
    z = 0.0 + 1e-4j
    ca = ResolventSolver(Ha, np.conj(z)).columns((5 + t[0], 5 + t[1]))
    cb = ResolventSolver(Hb, np.conj(z)).columns((5, 5))
    for d in range(4):
        na = float(np.linalg.norm(ca[Ha.site_slice((5 + t[0] + d, 5 + t[1])), :]))
        nb = float(np.linalg.norm(cb[Hb.site_slice((5 + d, 5)), :]))
        assert abs(na - nb) < 1e-11 * max(na, 1e-30)


def test_scan_rejects_bad_parameters():
    with pytest.raises(ValueError, match="max_dist"):
        fractional_moment_scan(PIP, SPEC, 0.1, 1e-4j, L=16, max_dist=9)
    with pytest.raises(ValueError, match="n_realizations"):
        fractional_moment_scan(PIP, SPEC, 0.1, 1e-4j, L=16, n_realizations=7)
    with pytest.raises(ValueError, match="fractional power"):
        fractional_moment_scan(PIP, SPEC, 0.1, 1e-4j, L=16, s=1.2)


# ---------------------------------------------------------------------------
# T-matrix update

def _disordered_fixture(seed: int = 11, lam: float = 0.2, L=(5, 5)):
    spec = DisorderSpec(
        (
            DisorderTerm((0, 0), standard_W("W00", 1), Distribution(), "W00"),
            DisorderTerm((1, 0), standard_W("W10", 1), Distribution(), "W10"),
        )
    )
    real = sample_realization(spec, L, seed=seed)
    return build_random_hamiltonian(PIP, spec, lam, real)


def _dense_updated_resolvent(H, lam, v, W, l, j, z):
    A = np.zeros((H.dim, H.dim), dtype=complex)
    sl_l = H.site_slice(l)
    if j == (0, 0):
        A[sl_l, sl_l] = W
    else:
        lp = ((l[0] + j[0]) % H.L[0], (l[1] + j[1]) % H.L[1])
        A[H.site_slice(lp), sl_l] = W
        A[sl_l, H.site_slice(lp)] = np.asarray(W).conj().T
    return np.linalg.inv(z * np.eye(H.dim) - (H.dense() + lam * v * A))


@pytest.mark.parametrize(
    "l,j,wname,v",
    [
        ((1, 2), (0, 0), "W00", 0.7),
        ((1, 2), (1, 0), "W10", -0.4),
        ((3, 0), (0, 1), "W01", 0.9),
    ],
)
def test_tmatrix_update_matches_dense_inversion(l, j, wname, v):
    H = _disordered_fixture()
    z = 0.3 + 0.1j
    W = standard_W(wname, 1)
    upd = tmatrix_update(H, 0.2, v, W, l, j, z)
    dense = _dense_updated_resolvent(H, 0.2, v, W, l, j, z)
    for n in [(0, 0), l, (2, 2), (4, 3)]:
        for m in [(1, 2), (3, 0), (2, 4)]:
            ref = dense[H.site_slice(n), H.site_slice(m)]
            err = np.abs(upd.block(n, m) - ref).max()
            assert err <= 1e-10 * max(np.abs(ref).max(), 1.0)


def test_tmatrix_vanishing_value_returns_unperturbed_resolvent():
    H = _disordered_fixture()
    z = 0.3 + 0.1j
    upd = tmatrix_update(H, 0.2, 0.0, standard_W("W10", 1), (1, 2), (1, 0), z)
    base = ResolventSolver(H, z)
    assert upd.tmatrix is None
    for n, m in [((2, 3), (0, 1)), ((1, 2), (1, 2))]:
        assert np.abs(upd.block(n, m) - base.block(n, m)).max() == 0.0


def test_tmatrix_correction_rank_is_bounded_by_support():
    H = _disordered_fixture()
    z = 0.3 + 0.1j
    for l, j, wname, k in [((1, 2), (0, 0), "W00", 2), ((1, 2), (1, 0), "W10", 4)]:
        W = standard_W(wname, 1)
        dense = _dense_updated_resolvent(H, 0.2, 0.6, W, l, j, z)
        base = np.linalg.inv(z * np.eye(H.dim) - H.dense())
        svals = np.linalg.svd(dense - base, compute_uv=False)
        assert int(np.sum(svals > 1e-10)) <= k
        upd = tmatrix_update(H, 0.2, 0.6, W, l, j, z)
        assert upd.tmatrix.shape == (k, k)


def test_tmatrix_rejects_singular_perturbation():
    H = _disordered_fixture()
    with pytest.raises(ValueError, match="singular"):
        tmatrix_update(H, 0.2, 0.5, np.zeros((2, 2)), (1, 1), (1, 0), 0.3 + 0.1j)
    with pytest.raises(ValueError, match="self-adjoint"):
        tmatrix_update(H, 0.2, 0.5, np.array([[0.0, 1.0], [0.0, 0.0]]), (1, 1), (0, 0), 0.3 + 0.1j)


# ---------------------------------------------------------------------------
# Fermi projection decay

def test_projection_is_idempotent_and_decays_exponentially_when_clean():
    deep = build_model("pip+", delta=0.6, mu=-1.0)
    dec = fermi_projection_decay(deep, None, 0.0, 0.0, L=16)
    assert dec.idempotency_defect <= 1e-10
    assert not dec.shifted
    # fit the asymptotic tail; d = 1 is near-field and a factor ~20 above it
    d, w = dec.distances[2:], dec.norms[2:]
    design = np.vstack([np.ones(len(d)), d]).T
    coef, *_ = np.linalg.lstsq(design, np.log(w), rcond=None)
    resid = np.log(w) - design @ coef
    r2 = 1.0 - float(resid @ resid) / float(np.sum((np.log(w) - np.log(w).mean()) ** 2))
    assert -coef[1] > 0.5  # exponential, clearly faster than any power here
    assert r2 > 0.9


def test_disordered_projection_beats_quartic_power_law():
    deep = build_model("pip+", delta=0.6, mu=-1.0)
    dec = fermi_projection_decay(
        deep, SPEC, 0.2, 0.0, L=20, n_realizations=8, seed=5, threads=2
    )
    assert dec.idempotency_defect <= 1e-10
    d, w = dec.distances, dec.norms
    assert w[9] / w[4] < (d[9] / d[4]) ** -4.0
    tail = slice(4, 10)
    slope = np.polyfit(np.log(d[tail]), np.log(w[tail]), 1)[0]
    assert slope < -4.0


def test_projection_shifts_off_eigenvalues_and_reports():
    w = assemble_finite_volume(PIP, (12, 12)).eigenvalues()
    target = float(w[len(w) // 3])
    dec = fermi_projection_decay(PIP, None, 0.0, target, L=12)
    assert dec.shifted
    assert dec.requested_energy == target
    assert np.abs(w - dec.energy).min() > 1e-8


# ---------------------------------------------------------------------------
# phase diagram

def test_phase_diagram_small_grid_verdicts_and_csv():
    pd = localization_phase_diagram(
        PIP, SPEC, [0.0, 0.3], [-5.0, 0.0, 1.0], L=16, n_realizations=8, seed=2, threads=2
    )
    # clean column: no localized verdicts anywhere (nothing to average)
    assert LOCALIZED not in pd.verdicts[0]
    # E = -5 is below the spectrum for every coupling here
    assert pd.verdicts[0][0] == OUTSIDE
    assert pd.verdicts[1][0] == OUTSIDE
    # E = 0 sits in a gap that survives this far below the closure coupling
    assert pd.verdicts[1][1] == OUTSIDE
    # in-band cell stays honest: no certified decay at this scale
    assert pd.verdicts[0][2] == NO_VERDICT
    csv = pd.to_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "lambda,E,verdict,rate,rate_err,r2,n_realizations"
    assert len(lines) == 1 + 2 * 3
    man = pd.manifest()
    assert man["L"] == [16, 16]
    assert len(man["edges"]) == 2


def test_phase_diagram_gap_cells_below_closure_are_safe():
    pd = localization_phase_diagram(
        PIP, SPEC, [0.2, 0.4], [0.0], L=16, n_realizations=8, seed=2, threads=2
    )
    for row in pd.verdicts:
        assert row[0] in (LOCALIZED, OUTSIDE)


def test_phase_diagram_outer_edges_grow_with_coupling():
    pd = localization_phase_diagram(
        PIP, SPEC, [0.0, 0.4, 0.8], [-5.0], L=16, n_realizations=16, seed=2, threads=2
    )
    his = [e.hi for e in pd.edges]
    los = [e.lo for e in pd.edges]
    assert his[0] < his[1] < his[2]
    assert los[0] > los[1] > los[2]
