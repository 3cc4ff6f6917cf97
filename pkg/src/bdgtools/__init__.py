"""Tight-binding Bogoliubov-de Gennes models on the square lattice.

Building blocks for a family of numerical experiments on mean-field
superconductor Hamiltonians: lattice operator algebra and symmetry checks,
a catalog of pairing potentials with closed-form bands, density-of-states
estimators, random matrix-valued disorder, Green-matrix localization
diagnostics, and Chern numbers computed by four independent routes
(transfer-matrix winding, Berry flux, transition-function contour, and a
real-space marker).
"""

__version__ = "0.1.0"

from .lattice import (
    BlochMatrix,
    FiberShape,
    FiniteVolumeOperator,
    HoppingTerm,
    SymmetryReport,
    TightBindingOperator,
    assemble_bloch,
    assemble_finite_volume,
    check_bdg_equation,
    check_phs,
    model_from_json,
    model_to_json,
    spectrum_symmetry_check,
    tight_binding,
)
from .models import (
    MODEL_NAMES,
    BandPoint,
    ModelParams,
    PairingKind,
    build_bdg,
    build_model,
    build_one_electron,
    build_pairing,
    central_gap,
    example_bands,
    pairing_kind,
    reduce_su2,
)
from .disorder import (
    DisorderRealization,
    DisorderSpec,
    DisorderTerm,
    Distribution,
    build_random_hamiltonian,
    default_spec,
    gap_closure_threshold,
    sample_realization,
    spec_from_json,
    spec_to_json,
    standard_W,
)
from .spectral import (
    DosHistogram,
    IdsCurve,
    dos_histogram,
    ids_estimate,
    ids_squared_estimate,
)
from .greens import (
    CombesThomasPoint,
    DecayEstimate,
    PhaseDiagram,
    ProjectionDecay,
    ResolventSolver,
    ResolventUpdate,
    SpectralEdges,
    combes_thomas_probe,
    fermi_projection_decay,
    fractional_moment_scan,
    green_matrix,
    localization_phase_diagram,
    spectral_distance,
    tmatrix_update,
)

from .chern import (
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

__all__ = [
    "__version__",
    "BlochMatrix",
    "FiberShape",
    "FiniteVolumeOperator",
    "HoppingTerm",
    "SymmetryReport",
    "TightBindingOperator",
    "assemble_bloch",
    "assemble_finite_volume",
    "check_bdg_equation",
    "check_phs",
    "model_from_json",
    "model_to_json",
    "spectrum_symmetry_check",
    "tight_binding",
    "MODEL_NAMES",
    "BandPoint",
    "ModelParams",
    "PairingKind",
    "build_bdg",
    "build_model",
    "build_one_electron",
    "build_pairing",
    "central_gap",
    "example_bands",
    "pairing_kind",
    "reduce_su2",
    "DisorderRealization",
    "DisorderSpec",
    "DisorderTerm",
    "Distribution",
    "build_random_hamiltonian",
    "default_spec",
    "gap_closure_threshold",
    "sample_realization",
    "spec_from_json",
    "spec_to_json",
    "standard_W",
    "DosHistogram",
    "IdsCurve",
    "dos_histogram",
    "ids_estimate",
    "ids_squared_estimate",
    "CombesThomasPoint",
    "DecayEstimate",
    "PhaseDiagram",
    "ProjectionDecay",
    "ResolventSolver",
    "ResolventUpdate",
    "SpectralEdges",
    "combes_thomas_probe",
    "fermi_projection_decay",
    "fractional_moment_scan",
    "green_matrix",
    "localization_phase_diagram",
    "spectral_distance",
    "tmatrix_update",
    "ChernResult",
    "MuScanEntry",
    "PauliVector",
    "TransferData",
    "UMatrix",
    "berry_flux_chern",
    "chern_mu_scan",
    "chern_transfer",
    "contracting_subspace",
    "eigenphase_table",
    "fermi_projector",
    "pauli_decompose",
    "real_space_chern",
    "scan_csv",
    "transfer_matrix",
    "transition_winding",
    "u_matrix",
    "winding_number",
]
