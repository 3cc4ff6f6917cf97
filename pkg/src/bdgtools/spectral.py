"""Integrated density of states and DOS histograms on finite volumes.

The IDS is normalized so that N(0) = 0: for E >= 0 it counts eigenvalues per
site in (0, E], for E < 0 it is minus the count in (E, 0].  With that
convention the particle-hole symmetry of the spectrum reads

    N(E) = -N(-E)           and           N(E) = N2(E^2) / 2   (E >= 0)

where N2 is the IDS of the squared operator.  Both identities are exact in
the infinite-volume limit and hold within Monte-Carlo error at finite L.

Eigenvalues within 1e-12 of an interval or bin edge are assigned to the
lower interval; this fixed tie-break keeps every count reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .disorder import DisorderSpec, build_random_hamiltonian, sample_realization
from .lattice import TightBindingOperator, assemble_finite_volume

__all__ = [
    "EDGE_TOL",
    "IdsCurve",
    "DosHistogram",
    "ids_estimate",
    "ids_squared_estimate",
    "dos_histogram",
]

#: Eigenvalues this close to an interval edge count for the lower interval.
EDGE_TOL = 1e-12


@dataclass(frozen=True)
class IdsCurve:
    """IDS samples N(E) with per-point Monte-Carlo standard errors."""

    energies: tuple
    values: tuple
    stderr: tuple
    normalization: str = "N0"

    def to_csv(self) -> str:
        lines = ["E,N,stderr"]
        for e, v, s in zip(self.energies, self.values, self.stderr):
            lines.append("%.17g,%.17g,%.17g" % (e, v, s))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DosHistogram:
    """Histogram estimate of the DOS (states per site per energy)."""

    bin_edges: tuple
    density: tuple
    total_weight: float
    stderr: tuple = ()

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,rho"]
        for i, rho in enumerate(self.density):
            lines.append(
                "%.17g,%.17g,%.17g" % (self.bin_edges[i], self.bin_edges[i + 1], rho)
            )
        return "\n".join(lines) + "\n"


def _signed_count(eigs: np.ndarray, E: float) -> int:
    """#eigenvalues in (0, E] (negative count in (E, 0] for E < 0).

    The shared shift by EDGE_TOL implements the lower-interval tie-break at
    both edges and makes the count odd under E -> -E up to zero modes.
    """
    hi = int(np.searchsorted(eigs, E + EDGE_TOL, side="right"))
    lo = int(np.searchsorted(eigs, EDGE_TOL, side="right"))
    return hi - lo


def _realization_spectra(model, disorder, L, n_realizations, seed, threads):
    """Sorted eigenvalue arrays, one per realization (a single one if clean)."""
    if not isinstance(model, TightBindingOperator):
        raise TypeError("model must be a TightBindingOperator")
    clean = disorder is None or disorder.lam == 0.0 or not disorder.terms
    if clean:
        fv = assemble_finite_volume(model, L)
        return [fv.eigenvalues()], fv.L
    if n_realizations < 1:
        raise ValueError("disordered estimates need n_realizations >= 1")

    def one(i: int) -> np.ndarray:
        rz = sample_realization(disorder, L, seed + i)
        return build_random_hamiltonian(model, disorder, disorder.lam, rz).eigenvalues()

    spectra = parallel_map(one, range(n_realizations), threads)
    Lt = (int(L), int(L)) if np.isscalar(L) else (int(L[0]), int(L[1]))
    return spectra, Lt


def _curve_from_counts(energies, per_realization_counts, nsites) -> IdsCurve:
    counts = np.asarray(per_realization_counts, dtype=float) / nsites
    mean = counts.mean(axis=0)
    if counts.shape[0] > 1:
        err = counts.std(axis=0, ddof=1) / np.sqrt(counts.shape[0])
    else:
        err = np.zeros_like(mean)
    return IdsCurve(
        tuple(float(e) for e in energies),
        tuple(mean.tolist()),
        tuple(err.tolist()),
    )


def ids_estimate(
    model: TightBindingOperator,
    disorder: DisorderSpec | None = None,
    L=16,
    n_realizations: int = 32,
    energies=(),
    seed: int = 0,
    threads: int = 1,
) -> IdsCurve:
    """Monte-Carlo IDS with the N(0) = 0 normalization.

    The estimator diagonalizes the full torus operator per realization and
    counts eigenvalues per site; for covariant models this equals the
    trace-per-site definition on average.  Realization i uses seed + i, so
    curves at different energies share the same disorder.
    """
    energies = [float(e) for e in energies]
    if not all(np.isfinite(energies)):
        raise ValueError("energies must be finite")
    spectra, Lt = _realization_spectra(model, disorder, L, n_realizations, seed, threads)
    counts = [[_signed_count(eigs, e) for e in energies] for eigs in spectra]
    return _curve_from_counts(energies, counts, Lt[0] * Lt[1])


def ids_squared_estimate(
    model: TightBindingOperator,
    disorder: DisorderSpec | None = None,
    L=16,
    n_realizations: int = 32,
    energies=(),
    seed: int = 0,
    threads: int = 1,
) -> IdsCurve:
    """IDS of the squared operator H^2, from the squared spectrum of H.

    No second diagonalization: the eigenvalues of H^2 are the squares of
    those of H, so each realization is diagonalized once.  N2(0) = 0 with
    the same lower-interval tie-break (zero modes within EDGE_TOL of 0 do
    not count).
    """
    energies = [float(e) for e in energies]
    if not all(np.isfinite(energies)):
        raise ValueError("energies must be finite")
    spectra, Lt = _realization_spectra(model, disorder, L, n_realizations, seed, threads)
    counts = [
        [_signed_count(np.sort(eigs * eigs), e) for e in energies] for eigs in spectra
    ]
    return _curve_from_counts(energies, counts, Lt[0] * Lt[1])


def _bin_counts(eigs: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin occupation with the lower-interval tie-break at every edge."""
    idx = np.searchsorted(edges, eigs - EDGE_TOL, side="left") - 1
    idx = idx[(idx >= 0) & (idx < len(edges) - 1)]
    return np.bincount(idx, minlength=len(edges) - 1).astype(float)


def dos_histogram(
    model: TightBindingOperator,
    disorder: DisorderSpec | None = None,
    L=16,
    n_realizations: int = 32,
    bins=64,
    seed: int = 0,
    energy_range=None,
    squared: bool = False,
    threads: int = 1,
) -> DosHistogram:
    """Eigenvalue histogram normalized to states per site per energy.

    ``bins`` is either a bin count (>= 16) on ``energy_range`` (default: the
    full sampled spectrum) or an explicit increasing edge array.  With
    ``squared`` the histogram is over the spectrum of H^2, which makes the
    density comparison rho(E) = |E| rho2(E^2) a bin-exact statement when the
    squared edges are the squares of the direct ones.
    """
    spectra, Lt = _realization_spectra(model, disorder, L, n_realizations, seed, threads)
    if squared:
        spectra = [np.sort(e * e) for e in spectra]
    if np.isscalar(bins):
        if bins < 16:
            raise ValueError("need at least 16 bins")
        if energy_range is None:
            lo = min(float(e[0]) for e in spectra)
            hi = max(float(e[-1]) for e in spectra)
            pad = 1e-9 * max(hi - lo, 1.0)
            energy_range = (lo - pad, hi + pad)
        edges = np.linspace(energy_range[0], energy_range[1], int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("explicit bins must be an increasing edge array")
    widths = np.diff(edges)
    nsites = Lt[0] * Lt[1]
    per = np.array([_bin_counts(e, edges) for e in spectra]) / (nsites * widths)
    density = per.mean(axis=0)
    if per.shape[0] > 1:
        err = per.std(axis=0, ddof=1) / np.sqrt(per.shape[0])
    else:
        err = np.zeros_like(density)
    return DosHistogram(
        tuple(edges.tolist()),
        tuple(density.tolist()),
        float(np.sum(density * widths)),
        tuple(err.tolist()),
    )
