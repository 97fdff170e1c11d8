"""Upper/lower bracketing of the four relaxed-density cell formulas.

The cell formulas are infima over all special-bounded-variation competitors;
exact values are out of reach, so each estimator returns an explicit bracket:
an upper bound from the best member of structured competitor families
(staircases, elementary jumps, plane splittings, uniform-gradient laminates,
inclusion boxes) and, where the interfacial densities are coercive with
declared constants, a certified lower bound from the discrete Gauss-Green
closure (the total directed jump mass of any admissible competitor is pinned
by its boundary data, and coercivity converts mass into energy).

Competitors on oriented cubes are built in rotated coordinates (the jump
normal mapped to the last axis); densities receive the true normals and
derivative slots are un-rotated before bulk terms are evaluated.  The
parameter sweep is a deterministic grid search (nested as the budget grows)
followed by coordinate descent on the inclusion boxes; ties break toward the
lexicographically smallest parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .constructions import elementary_jump, staircase
from .densities import DensityTriple, InterfacialDensity, recession
from .fields import (
    AffineBoundary,
    PiecewiseAffineField,
    StepBoundary,
    frobenius,
    trace_boundary,
    unit_cube,
)
from .integrate import fsum

ADMISSIBILITY_TOL = 1e-10
DEFAULT_RESOLUTION = 4
DEFAULT_W2_RESOLUTION = 8


@dataclass
class CellProblem:
    """One cell-formula instance with its frozen material point."""

    variant: str                        # W1 | Gamma1 | W2 | Gamma2
    x: np.ndarray
    densities: DensityTriple
    A: np.ndarray | None = None         # W1 target gradient / frozen first-gradient slot
    lam: np.ndarray | None = None       # Gamma1 jump payload
    Lam: np.ndarray | None = None       # Gamma2 jump payload
    nu: np.ndarray | None = None        # oriented-cube normal
    L: np.ndarray | None = None         # W2 boundary tensor (bilinear layout)
    M: np.ndarray | None = None         # W2 average-gradient tensor (bilinear layout)
    resolution: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        for name in ("A", "lam", "Lam", "nu", "L", "M"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=float))
        if self.nu is not None and abs(np.linalg.norm(self.nu) - 1.0) > 1e-12:
            raise ValueError("nu must be a unit vector")


@dataclass
class EstimateResult:
    upper: float
    lower: float | None
    best_family: str
    best_params: tuple
    evaluations: int
    seed: int | None = None
    inexact_quadrature: bool = False
    admissibility_residual: float = 0.0
    rows: list = dataclass_field(default_factory=list)
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "upper": self.upper,
            "lower": self.lower,
            "best_family": self.best_family,
            "best_params": list(self.best_params),
            "evaluations": self.evaluations,
            "seed": self.seed,
            "inexact_quadrature": self.inexact_quadrature,
            "admissibility_residual": self.admissibility_residual,
            "notes": self.notes,
        }


class EstimationError(RuntimeError):
    """No admissible competitor was generated for a cell problem."""


def rotation_to_last_axis(nu: np.ndarray) -> np.ndarray:
    """Orthogonal map sending the last basis vector to nu (Householder)."""
    nu = np.asarray(nu, dtype=float)
    N = len(nu)
    eN = np.zeros(N)
    eN[-1] = 1.0
    w = eN - nu
    nw = np.linalg.norm(w)
    if nw < 1e-14:
        return np.eye(N)
    w = w / nw
    return np.eye(N) - 2.0 * np.outer(w, w)


# ---------------------------------------------------------------------------
# energy of a competitor
# ---------------------------------------------------------------------------


def _facet_energy(psi: InterfacialDensity, field: PiecewiseAffineField, x0: np.ndarray,
                  R: np.ndarray | None) -> tuple[float, int]:
    """Interfacial energy of all jump facets at the frozen point x0.

    Facets are summed at their centroids (the package's discrete interfacial
    measure); a facet with affine jump variation is upgraded to the density's
    exact facet integral when one is shipped, otherwise the centroid sample
    stands and the facet is counted as inexact.  Centroid sums stay compatible
    with the discrete Gauss-Green certificates: the affine pairing of jumps
    against normals is integrated exactly by centroids.
    """
    widths = field.domain.widths
    facets = field.jump_set()
    terms = []
    inexact = 0
    exact_idx = [i for i, f in enumerate(facets)
                 if psi.facet_integral is None or not np.any(f.jump_lin != 0.0)]
    hook_idx = [i for i, f in enumerate(facets)
                if psi.facet_integral is not None and np.any(f.jump_lin != 0.0)]
    if exact_idx:
        payload = np.stack([facets[i].jump for i in exact_idx])
        normals = np.stack([facets[i].normal for i in exact_idx])
        if R is not None:
            normals = normals @ R.T
        xs = np.broadcast_to(x0, (len(exact_idx), len(x0)))
        vals = np.asarray(psi(xs, payload, normals), dtype=float)
        terms.extend(float(v) * facets[i].area for v, i in zip(vals, exact_idx))
        inexact += sum(1 for i in exact_idx if np.any(facets[i].jump_lin != 0.0))
    for i in hook_idx:
        f = facets[i]
        normal = f.normal if R is None else R @ f.normal
        tangent_axes = [k for k in range(len(widths)) if k != f.axis]
        twidths = np.asarray([widths[k] for k in tangent_axes], dtype=float)
        terms.append(psi.facet_integral(x0, f.jump, f.jump_lin, normal, twidths, tangent_axes))
    return fsum(terms), inexact


def _bulk_energy_W(problem: CellProblem, field: PiecewiseAffineField) -> float:
    """Bulk term of the W2 formula: W(x0, A, grad v) summed over cells."""
    dom = field.domain
    lin = field.lin.reshape((-1,) + field.value_shape + (dom.ndim,))
    xs = np.broadcast_to(problem.x, (lin.shape[0], len(problem.x)))
    As = np.broadcast_to(problem.A, (lin.shape[0],) + problem.A.shape)
    vals = np.asarray(problem.densities.W(xs, As, lin), dtype=float)
    return fsum(vals * dom.cell_volume)


def _bulk_energy_recession(problem: CellProblem, field: PiecewiseAffineField,
                           R: np.ndarray | None) -> float:
    """Bulk term of the oriented-cube second formula: recession of W."""
    dom = field.domain
    lin = field.lin.reshape((-1,) + field.value_shape + (dom.ndim,))
    if R is not None:
        lin = np.einsum("...k,mk->...m", lin, R)
    cache: dict[bytes, float] = {}
    terms = []
    for cell_lin in lin:
        key = np.round(cell_lin, 14).tobytes()
        if key not in cache:
            cache[key] = recession(problem.densities.W, problem.x, problem.A, cell_lin).value
        terms.append(cache[key] * dom.cell_volume)
    return fsum(terms)


def competitor_energy(problem: CellProblem, field: PiecewiseAffineField,
                      R: np.ndarray | None = None) -> tuple[float, int]:
    if problem.variant in ("W1", "Gamma1"):
        return _facet_energy(problem.densities.psi1, field, problem.x, R)
    jump, inexact = _facet_energy(problem.densities.psi2, field, problem.x, R)
    if problem.variant == "W2":
        return _bulk_energy_W(problem, field) + jump, inexact
    return _bulk_energy_recession(problem, field, R) + jump, inexact


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------


def _prescription(problem: CellProblem):
    """The variant's boundary prescription as a function of boundary points."""
    N = len(problem.x)
    if problem.variant == "W1":
        return lambda pts: np.zeros((pts.shape[0],) + _payload_shape(problem))
    if problem.variant == "Gamma1":
        payload = problem.lam
    elif problem.variant == "Gamma2":
        payload = problem.Lam
    else:
        L_field = Bilinear_to_field(problem.L)
        return lambda pts: np.einsum("...k,mk->m...", L_field, pts)
    step = StepBoundary(payload, N - 1, 0.0)
    return lambda pts: step.value_and_lin(pts)[0]


def _payload_shape(problem: CellProblem) -> tuple:
    if problem.variant == "W1":
        return problem.A.shape[:1]
    if problem.variant == "Gamma1":
        return problem.lam.shape
    if problem.variant == "Gamma2":
        return problem.Lam.shape
    # W2 fields are matrix-valued: (value row, value column) of the boundary tensor
    return problem.L.shape[:1] + problem.L.shape[2:3]


def Bilinear_to_field(T: np.ndarray) -> np.ndarray:
    """Bilinear layout (i, y-slot, z-slot) -> field linear part (i, col, deriv)."""
    return np.asarray(T, dtype=float).transpose(0, 2, 1)


def check_admissibility(problem: CellProblem, field: PiecewiseAffineField) -> tuple[bool, float]:
    """Re-verify trace and gradient constraints before an energy may count."""
    dom = field.domain
    residual = 0.0
    lin = field.lin
    if problem.variant == "W1":
        residual = max(residual, float(np.max(np.abs(lin - problem.A))))
    elif problem.variant == "Gamma1":
        residual = max(residual, float(np.max(np.abs(lin))) if lin.size else 0.0)
    else:
        target = np.zeros(lin.shape[dom.ndim:]) if problem.variant == "Gamma2" \
            else Bilinear_to_field(problem.M)
        avg = np.sum(lin.reshape((-1,) + lin.shape[dom.ndim:]), axis=0) * dom.cell_volume
        residual = max(residual, frobenius(avg - target))
    prescription = _prescription(problem)
    for rec in trace_boundary(field):
        want = prescription(rec["centroid"][None])[0]
        residual = max(residual, float(np.max(np.abs(rec["effective"] - want))))
    return residual <= ADMISSIBILITY_TOL, residual


# ---------------------------------------------------------------------------
# competitor families
# ---------------------------------------------------------------------------


class StaircaseFamily:
    """Zero-trace prescribed-gradient staircases (the W1 default)."""

    name = "staircase"

    def candidates(self, problem: CellProblem, budget: int):
        base = max(2, problem.resolution)
        for level in range(budget):
            yield (base * 2**level,)

    def build(self, problem: CellProblem, params):
        (n,) = params
        field = staircase(problem.A, int(n), unit_cube(len(problem.x), 1))
        return field, None


class ElementaryJumpFamily:
    """The single-plane competitor for the oriented-cube formulas."""

    name = "elementary_jump"

    def candidates(self, problem: CellProblem, budget: int):
        yield ()

    def build(self, problem: CellProblem, params):
        payload = problem.lam if problem.variant == "Gamma1" else problem.Lam
        field = elementary_jump(payload, ndim=len(problem.x), resolution=problem.resolution)
        return field, rotation_to_last_axis(problem.nu)


class SplittingFamily:
    """Two parallel planes sharing the payload (probes subadditivity slack)."""

    name = "splitting"

    def candidates(self, problem: CellProblem, budget: int):
        fractions = (0.5,) if budget < 2 else (0.25, 0.5, 0.75)
        for alpha in fractions:
            yield (alpha, -1, 0.0)
        if budget >= 2 and problem.variant == "Gamma1":
            for alpha in fractions:
                for j in range(len(problem.lam)):
                    for beta in (-0.5, 0.5):
                        yield (alpha, j, beta)

    def build(self, problem: CellProblem, params):
        alpha, j, beta = params
        payload = problem.lam if problem.variant == "Gamma1" else problem.Lam
        part = alpha * payload
        if j >= 0:
            part = part.copy()
            part[int(j)] += beta
        N = len(problem.x)
        dom = unit_cube(N, max(4, problem.resolution))
        centers = dom.cell_centers()
        z = centers[..., N - 1]
        shape = z.shape + (1,) * payload.ndim
        low = np.zeros_like(payload)
        const = np.where(z.reshape(shape) <= -0.25, low,
                         np.where(z.reshape(shape) > 0.25, payload, part))
        field = PiecewiseAffineField(dom, const, boundary_data=StepBoundary(payload, N - 1, 0.0))
        return field, rotation_to_last_axis(problem.nu)


class AffineFamily:
    """The jump-free competitor v = L y (admissible only when M = L)."""

    name = "affine"

    def candidates(self, problem: CellProblem, budget: int):
        yield ()

    def build(self, problem: CellProblem, params):
        N = len(problem.x)
        L_field = Bilinear_to_field(problem.L)
        dom = unit_cube(N, problem.resolution)
        centers = dom.cell_centers()
        const = np.einsum("vwk,...k->...vw", L_field, centers)
        lin = np.broadcast_to(L_field, dom.cells_shape + L_field.shape).copy()
        field = PiecewiseAffineField(dom, const, lin, boundary_data=AffineBoundary.linear(L_field))
        return field, None


class LaminateFamily:
    """Uniform-gradient staircase: grad v = M everywhere, slab jumps pay the move."""

    name = "laminate"

    def candidates(self, problem: CellProblem, budget: int):
        yield ()

    def build(self, problem: CellProblem, params):
        N = len(problem.x)
        L_field = Bilinear_to_field(problem.L)
        M_field = Bilinear_to_field(problem.M)
        dom = unit_cube(N, problem.resolution)
        centers = dom.cell_centers()
        const = np.einsum("vwk,...k->...vw", L_field, centers)
        lin = np.broadcast_to(M_field, dom.cells_shape + M_field.shape).copy()
        field = PiecewiseAffineField(dom, const, lin, boundary_data=AffineBoundary.linear(L_field))
        return field, None


class InclusionFamily:
    """Affine inside a grid-aligned box, boundary datum outside (W2 only)."""

    name = "inclusion"

    def candidates(self, problem: CellProblem, budget: int):
        res = problem.resolution
        N = len(problem.x)
        max_half = res // 2 - 1
        if max_half < 1:
            return
        halves = range(1, max_half + 1)
        if N > 3:
            return
        for half_cells in np.ndindex(*([len(list(halves))] * N)):
            half = tuple(h + 1 for h in half_cells)
            if max(half) > max_half:
                continue
            yield half + (0,) * N
        if budget >= 2:
            for half in ((1,) * N, (2,) * N):
                if max(half) > max_half:
                    continue
                for axis in range(N):
                    for shift in (-1, 1):
                        center = [0] * N
                        center[axis] = shift
                        if max(half[k] + abs(center[k]) for k in range(N)) <= max_half:
                            yield half + tuple(center)

    def build(self, problem: CellProblem, params):
        N = len(problem.x)
        half = np.asarray(params[:N], dtype=int)
        center = np.asarray(params[N:], dtype=int)
        res = problem.resolution
        dom = unit_cube(N, res)
        w = dom.widths
        L_field = Bilinear_to_field(problem.L)
        M_field = Bilinear_to_field(problem.M)
        vol_R = float(np.prod(2 * half * w))
        P_field = (M_field - (1.0 - vol_R) * L_field) / vol_R
        centers = dom.cell_centers()
        mid = (res // 2 + center).astype(int)
        idx = np.indices(dom.cells_shape).transpose(*range(1, N + 1), 0)
        inside = np.all((idx >= mid - half) & (idx < mid + half), axis=-1)
        const_out = np.einsum("vwk,...k->...vw", L_field, centers)
        const_in = np.einsum("vwk,...k->...vw", P_field, centers)
        sel = inside.reshape(inside.shape + (1, 1))
        const = np.where(sel, const_in, const_out)
        lin = np.where(sel[..., None], P_field, L_field)
        field = PiecewiseAffineField(dom, const, lin, boundary_data=AffineBoundary.linear(L_field))
        return field, None

    def refine(self, problem: CellProblem, params, evaluate, budget: int):
        """Deterministic coordinate descent over half-sides and centers."""
        N = len(problem.x)
        best_params = tuple(int(p) for p in params)
        best_energy = evaluate(best_params)
        max_iter = 4 * budget
        for _ in range(max_iter):
            improved = False
            for slot in range(2 * N):
                for delta in (-1, 1):
                    cand = list(best_params)
                    cand[slot] += delta
                    cand = tuple(cand)
                    if cand[:N] and min(cand[:N]) < 1:
                        continue
                    if max(cand[k] + abs(cand[N + k]) for k in range(N)) > problem.resolution // 2 - 1:
                        continue
                    e = evaluate(cand)
                    if e is not None and e < best_energy - 1e-15:
                        best_params, best_energy = cand, e
                        improved = True
            if not improved:
                break
        return best_params, best_energy


class GradientZigzagFamily:
    """Zero-average gradient oscillation added to the elementary jump (Gamma2)."""

    name = "gradient_zigzag"

    def candidates(self, problem: CellProblem, budget: int):
        if budget < 2:
            return
        for alpha in (0.25, 0.5):
            yield (alpha,)

    def build(self, problem: CellProblem, params):
        (alpha,) = params
        N = len(problem.x)
        dom = unit_cube(N, max(4, problem.resolution))
        payload = problem.Lam
        base = elementary_jump(payload, domain=dom)
        D = alpha * payload
        centers = dom.cell_centers()
        z = centers[..., N - 1]
        sign = np.where(z > 0.0, 1.0, -1.0)
        tri = np.abs(z) - 0.25
        const = base.const + tri.reshape(tri.shape + (1,) * payload.ndim) * D
        lin = base.lin.copy()
        lin[..., N - 1] += sign.reshape(sign.shape + (1,) * payload.ndim) * D
        field = PiecewiseAffineField(dom, const, lin, boundary_data=base.boundary_data)
        return field, rotation_to_last_axis(problem.nu)


# ---------------------------------------------------------------------------
# the sweep
# ---------------------------------------------------------------------------


def _sweep(problem: CellProblem, families, budget: int) -> EstimateResult:
    rows = []
    best = None
    evaluations = 0
    any_inexact = False

    def consider(family_name, params, field, R):
        nonlocal best, evaluations, any_inexact
        ok, residual = check_admissibility(problem, field)
        if not ok:
            rows.append({"family": family_name, "params": tuple(params), "admissible": False,
                         "energy": None})
            return None
        energy, inexact = competitor_energy(problem, field, R)
        evaluations += 1
        if inexact:
            any_inexact = True
        rows.append({"family": family_name, "params": tuple(params), "admissible": True,
                     "energy": energy})
        key = (energy, family_name, tuple(params))
        if best is None or key < (best["energy"], best["family"], best["params"]):
            best = {"energy": energy, "family": family_name, "params": tuple(params),
                    "residual": residual}
        return energy

    for family in families:
        for params in family.candidates(problem, budget):
            field, R = family.build(problem, params)
            consider(family.name, params, field, R)
        if hasattr(family, "refine") and best is not None and best["family"] == family.name:
            cache: dict[tuple, float | None] = {}

            def evaluate(params):
                if params not in cache:
                    field, R = family.build(problem, params)
                    cache[params] = consider(family.name, params, field, R)
                return cache[params]

            family.refine(problem, best["params"], evaluate, budget)

    if best is None:
        payload = {name: getattr(problem, name).tolist()
                   for name in ("x", "A", "lam", "Lam", "nu", "L", "M")
                   if getattr(problem, name) is not None}
        raise EstimationError(
            f"no admissible competitor generated for {problem.variant}: {payload}")
    return EstimateResult(
        upper=best["energy"],
        lower=None,
        best_family=best["family"],
        best_params=best["params"],
        evaluations=evaluations,
        seed=None,
        inexact_quadrature=any_inexact,
        admissibility_residual=best["residual"],
        rows=rows,
    )


def _certified_lower_interfacial(psi: InterfacialDensity, magnitude: float) -> float | None:
    """Coercivity times the forced total jump mass, when a constant is declared."""
    if not psi.coercive:
        return None
    c = psi.constants.get("H5.lower")
    if c is None:
        return None
    return c * magnitude


def estimate_W1(x, A, densities: DensityTriple, budget: int = 1,
                resolution: int = DEFAULT_RESOLUTION, families=None) -> EstimateResult:
    """Zero-trace prescribed-gradient formula for the first interfacial density.

    The zero trace forces the total directed jump of any competitor to equal
    minus the prescribed gradient, so coercivity certifies c1 |A| from below.
    """
    problem = CellProblem("W1", x, densities, A=np.atleast_2d(np.asarray(A, dtype=float)),
                          resolution=resolution)
    if families is None:
        families = [StaircaseFamily()]
    result = _sweep(problem, families, budget)
    result.lower = _certified_lower_interfacial(densities.psi1, frobenius(problem.A))
    if result.lower is not None and result.lower > result.upper:
        result.notes = "certified lower exceeded best upper; check declared constants"
    return result


def estimate_gamma1(x, lam, nu, densities: DensityTriple, budget: int = 1,
                    resolution: int = DEFAULT_RESOLUTION, families=None) -> EstimateResult:
    """Elementary-jump boundary formula for the first interfacial density."""
    problem = CellProblem("Gamma1", x, densities, lam=np.asarray(lam, dtype=float),
                          nu=np.asarray(nu, dtype=float), resolution=resolution)
    if families is None:
        families = [ElementaryJumpFamily(), SplittingFamily()]
    result = _sweep(problem, families, budget)
    result.lower = _certified_lower_interfacial(densities.psi1, float(np.linalg.norm(problem.lam)))
    return result


def estimate_W2(x, A, L, M, densities: DensityTriple, budget: int = 1,
                resolution: int = DEFAULT_W2_RESOLUTION, families=None) -> EstimateResult:
    """Linear-boundary, prescribed-average-gradient formula (bulk + psi2).

    L and M are third-order tensors in the bilinear layout.  With a coercive
    second interfacial density the Gauss-Green closure certifies
    c2 |L - M| from below (the bulk term is nonnegative).
    """
    L = getattr(L, "entries", L)
    M = getattr(M, "entries", M)
    problem = CellProblem("W2", x, densities, A=np.asarray(A, dtype=float),
                          L=np.asarray(L, dtype=float), M=np.asarray(M, dtype=float),
                          resolution=resolution)
    if families is None:
        families = [AffineFamily(), LaminateFamily(), InclusionFamily()]
    result = _sweep(problem, families, budget)
    result.lower = _certified_lower_interfacial(densities.psi2, frobenius(problem.L - problem.M))
    return result


def estimate_gamma2(x, A, Lam, nu, densities: DensityTriple, budget: int = 1,
                    resolution: int = DEFAULT_RESOLUTION, families=None) -> EstimateResult:
    """Elementary-jump boundary formula for the second interfacial density,
    with the recession of W as the bulk integrand."""
    problem = CellProblem("Gamma2", x, densities, A=np.asarray(A, dtype=float),
                          Lam=np.asarray(Lam, dtype=float), nu=np.asarray(nu, dtype=float),
                          resolution=resolution)
    if families is None:
        families = [ElementaryJumpFamily(), SplittingFamily(), GradientZigzagFamily()]
    result = _sweep(problem, families, budget)
    result.lower = _certified_lower_interfacial(densities.psi2, frobenius(problem.Lam))
    return result


def _scale_estimate(result: EstimateResult, scale: float) -> EstimateResult:
    return EstimateResult(
        upper=scale * result.upper,
        lower=None if result.lower is None else scale * result.lower,
        best_family=result.best_family,
        best_params=result.best_params,
        evaluations=result.evaluations,
        seed=result.seed,
        inexact_quadrature=result.inexact_quadrature,
        admissibility_residual=result.admissibility_residual,
        rows=result.rows,
        notes=result.notes,
    )


def estimate_gamma1_extended(x, lam, theta, densities: DensityTriple, **kwargs) -> EstimateResult:
    """Degree-one homogeneous extension of the first boundary formula to
    non-unit directions: zero at theta = 0, else |theta| times the value at
    the normalized direction."""
    theta = np.asarray(theta, dtype=float)
    norm = float(np.linalg.norm(theta))
    if norm == 0.0:
        return EstimateResult(0.0, 0.0, "zero-direction", (), 0)
    return _scale_estimate(estimate_gamma1(x, lam, theta / norm, densities, **kwargs), norm)


def estimate_gamma2_extended(x, A, Lam, theta, densities: DensityTriple, **kwargs) -> EstimateResult:
    """Degree-one homogeneous extension of the second boundary formula."""
    theta = np.asarray(theta, dtype=float)
    norm = float(np.linalg.norm(theta))
    if norm == 0.0:
        return EstimateResult(0.0, 0.0, "zero-direction", (), 0)
    return _scale_estimate(estimate_gamma2(x, A, Lam, theta / norm, densities, **kwargs), norm)
