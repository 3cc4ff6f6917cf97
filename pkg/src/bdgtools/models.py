"""Concrete lattice superconductor models.

The catalog covers the standard translation-invariant pairing potentials on
the square lattice (s, extended s, p, chiral p, spinful p, triplet p, d and
chiral d waves), the nearest-neighbour one-electron Hamiltonian, and the
particle-hole doubled Bogoliubov-de Gennes (BdG) form

    H_mu = 1/2 [[h - mu, Delta], [-conj(Delta), -(conj(h) - mu)]] .

Spin-1/2 matrices are s^a = sigma^a / 2; constant factors from this choice
are absorbed into the pairing amplitudes.  For the chiral d-wave the two
amplitudes are normalized so that the reduced 2x2 Bloch blocks carry exactly
delta*(cos k1 - cos k2) and delta*sin k1*sin k2, which fixes the relative
lattice weights of the x^2-y^2 and xy parts to 2:1.

Two families have closed-form bands:

* chiral p-wave (r=1):  E_+(k)^2 = (cos k1 + cos k2 - mu/2)^2
                                   + delta^2 (sin^2 k1 + sin^2 k2)
* chiral d-wave (r=2):  E_+(k)^2 = (cos k1 + cos k2 - mu/2)^2
                                   + delta^2 (cos k1 cos k2 - 1)^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .lattice import (
    FiberShape,
    TightBindingOperator,
    _bloch_sum,
    _require_closure,
    check_bdg_equation,
    tight_binding,
)

__all__ = [
    "PairingKind",
    "ModelParams",
    "BandPoint",
    "MODEL_NAMES",
    "pairing_kind",
    "build_pairing",
    "build_one_electron",
    "build_bdg",
    "build_model",
    "reduce_su2",
    "example_bands",
    "central_gap",
]

SIGMA = {
    1: np.array([[0, 1], [1, 0]], dtype=complex),
    2: np.array([[0, -1j], [1j, 0]], dtype=complex),
    3: np.array([[1, 0], [0, -1]], dtype=complex),
}

def spin_matrix(a: int) -> np.ndarray:
    """Spin-1/2 operator s^a = sigma^a / 2."""
    return SIGMA[a] / 2


# Scalar shift polynomials as displacement -> coefficient maps.
_SYM1 = {(1, 0): 1.0, (-1, 0): 1.0}          # S1 + S1*
_ASYM1 = {(1, 0): 1.0, (-1, 0): -1.0}        # S1 - S1*
_SYM2 = {(0, 1): 1.0, (0, -1): 1.0}          # S2 + S2*
_ASYM2 = {(0, 1): 1.0, (0, -1): -1.0}        # S2 - S2*
# (S1 - S1*)(S2 - S2*)
_ASYM12 = {(1, 1): 1.0, (1, -1): -1.0, (-1, 1): -1.0, (-1, -1): 1.0}


def _poly(*weighted) -> dict:
    """Combine scalar polynomials: _poly((c1, p1), (c2, p2), ...)."""
    out: dict = {}
    for c, p in weighted:
        for j, w in p.items():
            out[j] = out.get(j, 0.0) + c * w
    return out


def _tensor(poly: dict, mat: np.ndarray) -> dict:
    return {j: c * mat for j, c in poly.items()}


_SIGNED_TAGS = frozenset({"p_ip", "p_triplet", "d_id"})
_TAG_FIBER_R = {
    "s": 2,
    "s_star": 2,
    "p_x": 2,
    "p_ip": 1,
    "p_spinful": 2,
    "p_triplet": 2,
    "d_xy": 2,
    "d_x2y2": 2,
    "d_id": 2,
}


@dataclass(frozen=True)
class PairingKind:
    """Tag plus chirality sign selecting one pairing potential of the catalog."""

    tag: str
    sign: int = +1

    def __post_init__(self) -> None:
        if self.tag not in _TAG_FIBER_R:
            raise ValueError(f"unknown pairing tag {self.tag!r}")
        if self.tag in _SIGNED_TAGS:
            if self.sign not in (+1, -1):
                raise ValueError(f"sign must be +1 or -1 for {self.tag!r}")
        else:
            object.__setattr__(self, "sign", +1)

    @property
    def r(self) -> int:
        """Internal fiber dimension the pairing acts on (1 spinless, 2 spinful)."""
        return _TAG_FIBER_R[self.tag]


#: Command-line model names -> pairing kinds.
MODEL_NAMES: dict[str, PairingKind] = {
    "s": PairingKind("s"),
    "s-star": PairingKind("s_star"),
    "px": PairingKind("p_x"),
    "pip+": PairingKind("p_ip", +1),
    "pip-": PairingKind("p_ip", -1),
    "p-spinful": PairingKind("p_spinful"),
    "p-triplet+": PairingKind("p_triplet", +1),
    "p-triplet-": PairingKind("p_triplet", -1),
    "dxy": PairingKind("d_xy"),
    "dx2y2": PairingKind("d_x2y2"),
    "did+": PairingKind("d_id", +1),
    "did-": PairingKind("d_id", -1),
}


def pairing_kind(name: str) -> PairingKind:
    """Resolve a command-line model name to its :class:`PairingKind`."""
    try:
        return MODEL_NAMES[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}"
        ) from None


@dataclass(frozen=True)
class ModelParams:
    """Pairing amplitude, chemical potential and disorder coupling."""

    delta: float
    mu: float
    lam: float = 0.0

    def __post_init__(self) -> None:
        for name in ("delta", "mu", "lam"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.lam < 0:
            raise ValueError("disorder coupling lam must be >= 0")


@dataclass(frozen=True)
class BandPoint:
    """Closed-form band energies at one quasi-momentum."""

    k: tuple[float, float]
    E_plus: float
    E_minus: float

    def __post_init__(self) -> None:
        if self.E_plus < 0 or abs(self.E_minus + self.E_plus) > 1e-12:
            raise ValueError("bands must satisfy E_minus = -E_plus <= 0")


def build_pairing(
    kind: PairingKind | str,
    delta: float,
    *,
    delta_x2y2: float | None = None,
    delta_xy: float | None = None,
) -> TightBindingOperator:
    """Pairing potential Delta of the requested kind on its natural fiber.

    ``delta`` is the single amplitude of the kind; for the chiral d-wave the
    two parts may instead be weighted independently via ``delta_x2y2`` and
    ``delta_xy`` (amplitudes of cos k1 - cos k2 and sin k1 sin k2 in the
    reduced Bloch blocks).  Every output satisfies Delta* = -conj(Delta)
    exactly.
    """
    if isinstance(kind, str):
        kind = PairingKind(kind) if kind in _TAG_FIBER_R else pairing_kind(kind)
    d = float(delta)
    is2 = 1j * spin_matrix(2)
    if kind.tag == "s":
        terms = {(0, 0): d * is2}
    elif kind.tag == "s_star":
        terms = _tensor(_poly((d, _SYM1), (d, _SYM2)), is2)
    elif kind.tag == "p_x":
        terms = _tensor(_poly((d, _ASYM1)), spin_matrix(1))
    elif kind.tag == "p_ip":
        # "+" labels the branch whose pairing lobe is sin k1 - i sin k2, the
        # one carrying Chern number -1 at (delta, mu) = (0.3, -0.5).
        poly = _poly((d, _ASYM1), (-kind.sign * 1j * d, _ASYM2))
        terms = {j: np.array([[c]], dtype=complex) for j, c in poly.items()}
    elif kind.tag == "p_spinful":
        # chiral combination with the spin part s^1 on both lobes
        terms = _tensor(_poly((d, _ASYM1), (1j * d, _ASYM2)), spin_matrix(1))
    elif kind.tag == "p_triplet":
        terms = _poly(
            (1.0, _tensor(_poly((d, _ASYM1)), np.eye(2, dtype=complex))),
            (1.0, _tensor(_poly((kind.sign * 1j * d, _ASYM2)), spin_matrix(3))),
        )
    elif kind.tag == "d_xy":
        terms = _tensor(_poly((d, _ASYM12)), is2)
    elif kind.tag == "d_x2y2":
        terms = _tensor(_poly((d, _SYM1), (-d, _SYM2)), is2)
    elif kind.tag == "d_id":
        w1 = d if delta_x2y2 is None else float(delta_x2y2)
        w2 = d if delta_xy is None else float(delta_xy)
        # lattice weights 2*w1 and w2 give reduced Bloch coefficients w1, w2
        poly = _poly(
            (2 * w1, _SYM1),
            (-2 * w1, _SYM2),
            (kind.sign * 1j * w2, _ASYM12),
        )
        terms = _tensor(poly, is2)
    else:  # pragma: no cover - guarded by PairingKind
        raise ValueError(f"unhandled pairing tag {kind.tag!r}")
    return tight_binding(FiberShape(kind.r, ph=False), terms)


def build_one_electron(
    r: int = 1, lam: float = 0.0, potential: np.ndarray | None = None
) -> TightBindingOperator:
    """Nearest-neighbour one-electron Hamiltonian h = S1 + S1* + S2 + S2*.

    Tensored with the identity on the internal fiber C^r.  An optional
    constant on-site block ``lam * potential`` may be added; site-dependent
    random potentials are the job of the disorder layer, which perturbs the
    finite-volume realization directly.
    """
    one = np.eye(r, dtype=complex)
    terms = {j: c * one for j, c in _poly((1.0, _SYM1), (1.0, _SYM2)).items()}
    if potential is not None and lam != 0.0:
        v = np.asarray(potential, dtype=complex)
        if v.shape != (r, r):
            raise ValueError(f"potential block must be {r}x{r}, got {v.shape}")
        terms[(0, 0)] = lam * v
    return tight_binding(FiberShape(r, ph=False), terms)


def build_bdg(
    h: TightBindingOperator, delta: TightBindingOperator, mu: float
) -> TightBindingOperator:
    """Particle-hole double h and Delta into the BdG operator at chemical potential mu.

    The output acts on the fiber C^r (x) C^2 ordered particle-first and
    satisfies the even particle-hole symmetry exactly by construction.
    """
    if h.fiber.ph or delta.fiber.ph:
        raise ValueError("h and Delta must act on the undoubled fiber")
    if h.fiber.r != delta.fiber.r:
        raise ValueError(
            f"fiber mismatch: h has r={h.fiber.r}, Delta has r={delta.fiber.r}"
        )
    _require_closure(h, "build_bdg")
    defect = check_bdg_equation(delta)
    if defect > 1e-10:
        raise ValueError(
            f"Delta violates Delta* = -conj(Delta) (defect {defect:.3e})"
        )
    r = h.fiber.r
    mu = float(mu)
    zero = np.zeros((r, r), dtype=complex)
    one = np.eye(r, dtype=complex)
    terms: dict = {}
    for j in sorted(set(h.terms) | set(delta.terms)):
        hj = h.block(j)
        dj = delta.block(j)
        if j == (0, 0):
            hj = hj - mu * one
        terms[j] = 0.5 * np.block([[hj, dj], [-dj.conj(), -hj.conj()]])
    if (0, 0) not in terms and mu != 0.0:
        terms[(0, 0)] = 0.5 * np.block(
            [[-mu * one, zero], [zero, mu * one]]
        )
    return tight_binding(FiberShape(r, ph=True), terms)


def build_model(name: str, delta: float, mu: float) -> TightBindingOperator:
    """BdG operator for a catalog model name with clean nearest-neighbour h."""
    kind = pairing_kind(name)
    return build_bdg(
        build_one_electron(kind.r), build_pairing(kind, delta), mu
    )


# Fiber index layout of the spin-1/2 BdG operator: (p-up, p-down, h-up, h-down).
_SU2_BLOCK_A = (0, 3)   # particle-up / hole-down
_SU2_BLOCK_B = (1, 2)   # particle-down / hole-up


def reduce_su2(
    H: TightBindingOperator, tol: float = 1e-12
) -> tuple[TightBindingOperator, TightBindingOperator]:
    """Split an SU(2)-invariant spin-1/2 BdG operator into its two 2x2 sectors.

    The operator must be block-diagonal in the (p-up, h-down) / (p-down, h-up)
    split, and SU(2) invariance forces the second sector to equal
    sigma3 H+ sigma3 (verified).  Returned are (H+, H-) with H- = conj(H+),
    the representative of the second sector with the opposite chirality;
    the original operator is recovered as H+ (+) sigma3 conj(H-) sigma3
    under the fixed fiber permutation (p-up, h-down, p-down, h-up).  Both
    outputs satisfy the odd particle-hole symmetry.
    """
    if not (H.fiber.ph and H.fiber.r == 2):
        raise ValueError("reduce_su2 expects a spin-1/2 particle-hole operator")
    s3 = SIGMA[3]
    plus: dict = {}
    for j, b in H.terms.items():
        cross = max(
            float(np.abs(b[np.ix_(_SU2_BLOCK_A, _SU2_BLOCK_B)]).max()),
            float(np.abs(b[np.ix_(_SU2_BLOCK_B, _SU2_BLOCK_A)]).max()),
        )
        if cross > tol:
            raise ValueError(
                f"not SU(2)-decomposable: spin-mixing entries of size {cross:.3e} "
                f"at displacement {j}"
            )
        pj = b[np.ix_(_SU2_BLOCK_A, _SU2_BLOCK_A)]
        qj = b[np.ix_(_SU2_BLOCK_B, _SU2_BLOCK_B)]
        if float(np.abs(qj - s3 @ pj @ s3).max()) > tol:
            raise ValueError(
                f"not SU(2)-invariant: sectors at displacement {j} are not "
                "sigma3-conjugates"
            )
        plus[j] = pj
    fiber = FiberShape(1, ph=True)
    h_plus = tight_binding(fiber, plus)
    h_minus = tight_binding(fiber, {j: b.conj() for j, b in plus.items()})
    return h_plus, h_minus


_CLOSED_FORM_TAGS = ("p_ip", "d_id")


def _closed_form_eplus(tag: str, params: ModelParams) -> Callable[[float, float], float]:
    delta, mu = params.delta, params.mu
    if tag == "p_ip":
        def eplus(k1: float, k2: float) -> float:
            band = math.cos(k1) + math.cos(k2) - mu / 2
            return math.sqrt(
                band * band
                + delta * delta * (math.sin(k1) ** 2 + math.sin(k2) ** 2)
            )
    elif tag == "d_id":
        def eplus(k1: float, k2: float) -> float:
            band = math.cos(k1) + math.cos(k2) - mu / 2
            pair = math.cos(k1) * math.cos(k2) - 1.0
            return math.sqrt(band * band + delta * delta * pair * pair)
    else:
        raise ValueError(
            f"no closed-form bands for {tag!r}; use the generic Bloch route"
        )
    return eplus


def _resolve_band_tag(model) -> str:
    if isinstance(model, PairingKind):
        return model.tag
    if isinstance(model, str):
        kind = MODEL_NAMES.get(model)
        tag = kind.tag if kind is not None else model
        return tag
    raise TypeError(f"expected model name or PairingKind, got {type(model)}")


def example_bands(model, params: ModelParams, k) -> BandPoint:
    """Closed-form bands E_+- (chiral p- or d-wave) at quasi-momentum k."""
    tag = _resolve_band_tag(model)
    eplus = _closed_form_eplus(tag, params)
    e = eplus(float(k[0]), float(k[1]))
    return BandPoint((float(k[0]), float(k[1])), e, -e)


def central_gap(model, params: ModelParams, grid_n: int = 64) -> float:
    """Spectral gap around zero: g = 2 min_k E_+(k).

    A coarse ``grid_n`` x ``grid_n`` scan of the Brillouin zone seeds a
    Nelder-Mead refinement of E_+^2; the refinement is converged well below
    1e-8 absolute in g.  Models without closed-form bands are minimized
    through their Bloch matrices.
    """
    if grid_n < 64:
        raise ValueError("grid_n must be >= 64")
    if isinstance(model, TightBindingOperator):
        def esq(k):
            m = _bloch_sum(model, k)
            return float(np.min(np.abs(np.linalg.eigvalsh(m))) ** 2)
    else:
        eplus = _closed_form_eplus(_resolve_band_tag(model), params)
        def esq(k):
            return eplus(k[0], k[1]) ** 2
    ks = -np.pi + 2 * np.pi * np.arange(grid_n) / grid_n
    values = np.array([[esq((k1, k2)) for k2 in ks] for k1 in ks])
    order = np.argsort(values, axis=None)
    best = np.inf
    for flat in order[:3]:  # refine from the few best coarse cells
        i, j = np.unravel_index(flat, values.shape)
        res = minimize(
            esq,
            x0=(ks[i], ks[j]),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-22, "maxiter": 4000},
        )
        best = min(best, float(res.fun), values[i, j])
    return 2.0 * math.sqrt(max(best, 0.0))
