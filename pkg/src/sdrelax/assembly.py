"""Assembly of the relaxed-energy integral representation.

Per cell, the two bulk cell formulas are estimated at the frozen cell center
(first-gradient mismatch for the disarrangement part, boundary/average
tensors for the second-gradient part) and summed against cell volumes; per
jump facet of the macroscopic field and of its companion gradient field, the
corresponding oriented-cube formulas are estimated and summed against facet
areas.  Every term carries an upper/lower bracket; the report exposes the
split into a first-gradient part and a second-gradient part whose sum is the
total by construction.

Identical cell problems are solved once: estimates are cached under their
quantized arguments, which changes no reported digit at the default
quantization because the estimators are deterministic.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .cellformulas import (
    EstimateResult,
    EstimationError,
    estimate_W1,
    estimate_W2,
    estimate_gamma1,
    estimate_gamma2,
)
from .constructions import SD2Triple
from .densities import DensityTriple
from .fields import common_refinement
from .integrate import fsum
from .trace_formula import closed_form_W2


@dataclass
class AssembleConfig:
    budget: int = 1
    resolution: int = 4
    w2_resolution: int = 8
    quantize: float = 1e-6
    cache: bool = True
    w2_estimator: str = "families"          # families | trace-formula
    gamma2_representative: str = "average"  # average | plus | minus
    jobs: int = 1
    collect_cells: bool = False

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "resolution": self.resolution,
            "w2_resolution": self.w2_resolution,
            "quantize": self.quantize,
            "cache": self.cache,
            "w2_estimator": self.w2_estimator,
            "gamma2_representative": self.gamma2_representative,
            "jobs": self.jobs,
        }


@dataclass
class TermBracket:
    upper: float = 0.0
    lower: float = 0.0

    def to_dict(self) -> dict:
        return {"upper": self.upper, "lower": self.lower}


@dataclass
class RelaxedEnergyReport:
    bulk1: TermBracket
    bulk2: TermBracket
    surf1: TermBracket
    surf2: TermBracket
    I1: TermBracket
    I2: TermBracket
    total: TermBracket
    cells: int
    facets_g: int
    facets_G: int
    cache_hits: int
    cache_misses: int
    config: dict = dataclass_field(default_factory=dict)
    cell_rows: list = dataclass_field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "bulk1": self.bulk1.to_dict(),
            "bulk2": self.bulk2.to_dict(),
            "surf1": self.surf1.to_dict(),
            "surf2": self.surf2.to_dict(),
            "I1": self.I1.to_dict(),
            "I2": self.I2.to_dict(),
            "total": self.total.to_dict(),
            "cells": self.cells,
            "facets_g": self.facets_g,
            "facets_G": self.facets_G,
            "cache": {"hits": self.cache_hits, "misses": self.cache_misses},
            "config": self.config,
        }


class _EstimateCache:
    """Compute-once cache keyed by quantized arguments.

    Thread-safe with deterministic hit/miss counts: the first arrival at a
    key owns the solve, later arrivals wait, so misses always equal the
    number of distinct keys regardless of scheduling.
    """

    def __init__(self, quantize: float, enabled: bool):
        self.q = quantize
        self.enabled = enabled
        self.store: dict = {}
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def key(self, variant: str, *arrays) -> tuple:
        parts = [variant]
        for a in arrays:
            a = np.asarray(a, dtype=float)
            parts.append(np.round(a / self.q).astype(np.int64).tobytes())
        return tuple(parts)

    def get_or_compute(self, variant, arrays, compute):
        if not self.enabled:
            with self._lock:
                self.misses += 1
            return compute()
        k = self.key(variant, *arrays)
        with self._lock:
            entry = self.store.get(k)
            if entry is None:
                event = threading.Event()
                self.store[k] = ("pending", event)
                self.misses += 1
            else:
                self.hits += 1
        if entry is None:
            value = compute()
            with self._lock:
                self.store[k] = ("done", value)
            event.set()
            return value
        kind, payload = entry
        if kind == "pending":
            payload.wait()
            with self._lock:
                return self.store[k][1]
        return payload


def _trace_formula_estimate(x, L_bil, M_bil, a) -> EstimateResult:
    value = closed_form_W2(L_bil, M_bil, np.asarray(a, dtype=float))
    return EstimateResult(upper=value, lower=value, best_family="trace-formula",
                          best_params=(), evaluations=1,
                          notes="closed-form relaxed bulk density (exact for this density pair)")


def assemble_relaxed_energy(sd2: SD2Triple, densities: DensityTriple,
                            config: AssembleConfig | None = None) -> RelaxedEnergyReport:
    """Estimate all four relaxed densities over a structured deformation.

    Raises EstimationError (carrying the serialized offending sub-problem)
    when any cell or facet problem produces no admissible competitor.
    """
    if config is None:
        config = AssembleConfig()
    if config.w2_estimator not in ("families", "trace-formula"):
        raise ValueError(f"unknown w2 estimator {config.w2_estimator!r}")
    if config.w2_estimator == "trace-formula":
        if densities.psi2.name != "Psi2_proj" or densities.W.name != "W_zero":
            raise ValueError("trace-formula estimator requires the zero bulk density "
                             "and the directional-jump interfacial density")
    if config.gamma2_representative not in ("average", "plus", "minus"):
        raise ValueError(f"unknown trace representative {config.gamma2_representative!r}")

    g, G = common_refinement(sd2.g, sd2.G) if not np.array_equal(
        sd2.g.domain.resolution, sd2.G.domain.resolution) else (sd2.g, sd2.G)
    base = sd2.G.domain
    Gamma = sd2.Gamma
    if not np.array_equal(G.domain.resolution, base.resolution):
        factor = G.domain.resolution // base.resolution
        for ax, f in enumerate(factor):
            Gamma = np.repeat(Gamma, f, axis=ax)
    dom = G.domain
    N = dom.ndim
    cells = dom.num_cells
    vol = dom.cell_volume
    centers = dom.cell_centers().reshape(-1, N)
    A1 = (G.const - g.lin).reshape((-1,) + G.value_shape)
    A2 = G.const.reshape((-1,) + G.value_shape)
    L_field = G.lin.reshape((-1,) + G.value_shape + (N,))
    M_field = Gamma.reshape((-1,) + G.value_shape + (N,))
    cache = _EstimateCache(config.quantize, config.cache)
    # densities with declared zero position modulus let identical cell
    # problems at different points share one solve
    x_free_1 = densities.psi1.constants.get("H6") == 0.0
    x_free_2 = (densities.W.constants.get("H3") == 0.0
                and densities.psi2.constants.get("H6") == 0.0)
    zero_x = np.zeros(N)

    def solve_cell(i: int) -> tuple[EstimateResult, EstimateResult]:
        x = centers[i]
        L_bil = L_field[i].transpose(0, 2, 1)
        M_bil = M_field[i].transpose(0, 2, 1)
        try:
            r1 = cache.get_or_compute(
                "W1", (zero_x if x_free_1 else x, A1[i]),
                lambda: estimate_W1(x, A1[i], densities, budget=config.budget,
                                    resolution=config.resolution))
            if config.w2_estimator == "trace-formula":
                r2 = cache.get_or_compute(
                    "W2t", (zero_x if x_free_2 else x, L_bil, M_bil),
                    lambda: _trace_formula_estimate(x, L_bil, M_bil, densities.psi2.params["a"]))
            else:
                r2 = cache.get_or_compute(
                    "W2", (zero_x if x_free_2 else x, A2[i], L_bil, M_bil),
                    lambda: estimate_W2(x, A2[i], L_bil, M_bil, densities, budget=config.budget,
                                        resolution=config.w2_resolution))
            return r1, r2
        except EstimationError as err:
            raise EstimationError(
                f"cell {i} at x={x.tolist()}: {err}; "
                f"A1={A1[i].tolist()}, L={L_bil.tolist()}, M={M_bil.tolist()}") from err

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            cell_results = list(pool.map(solve_cell, range(cells)))
    else:
        cell_results = [solve_cell(i) for i in range(cells)]

    bulk1 = TermBracket(
        fsum([r1.upper * vol for r1, _ in cell_results]),
        fsum([max(0.0, r1.lower or 0.0) * vol for r1, _ in cell_results]),
    )
    bulk2 = TermBracket(
        fsum([r2.upper * vol for _, r2 in cell_results]),
        fsum([max(0.0, r2.lower or 0.0) * vol for _, r2 in cell_results]),
    )

    facets_g = g.jump_set()
    surf1_up, surf1_lo = [], []
    for f in facets_g:
        r = cache.get_or_compute(
            "G1", (zero_x if x_free_1 else f.centroid, f.jump, f.normal),
            lambda: estimate_gamma1(f.centroid, f.jump, f.normal, densities,
                                    budget=config.budget, resolution=config.resolution))
        surf1_up.append(r.upper * f.area)
        surf1_lo.append(max(0.0, r.lower or 0.0) * f.area)
    surf1 = TermBracket(fsum(surf1_up), fsum(surf1_lo))

    facets_G = G.jump_set()
    surf2_up, surf2_lo = [], []
    for f in facets_G:
        if config.gamma2_representative == "average":
            rep = f.trace_mean
        elif config.gamma2_representative == "plus":
            rep = f.trace_plus()
        else:
            rep = f.trace_minus()
        r = cache.get_or_compute(
            "G2", (zero_x if x_free_2 else f.centroid, rep, f.jump, f.normal),
            lambda: estimate_gamma2(f.centroid, rep, f.jump, f.normal, densities,
                                    budget=config.budget, resolution=config.resolution))
        surf2_up.append(r.upper * f.area)
        surf2_lo.append(max(0.0, r.lower or 0.0) * f.area)
    surf2 = TermBracket(fsum(surf2_up), fsum(surf2_lo))

    cell_rows = []
    if config.collect_cells:
        for i, (r1, r2) in enumerate(cell_results):
            cell_rows.append({
                "cell": i,
                "x": centers[i].tolist(),
                "w1_upper": r1.upper, "w1_lower": r1.lower,
                "w2_upper": r2.upper, "w2_lower": r2.lower,
            })

    I1 = TermBracket(bulk1.upper + surf1.upper, bulk1.lower + surf1.lower)
    I2 = TermBracket(bulk2.upper + surf2.upper, bulk2.lower + surf2.lower)
    total = TermBracket(I1.upper + I2.upper, I1.lower + I2.lower)
    return RelaxedEnergyReport(
        bulk1=bulk1, bulk2=bulk2, surf1=surf1, surf2=surf2,
        I1=I1, I2=I2, total=total,
        cells=cells, facets_g=len(facets_g), facets_G=len(facets_G),
        cache_hits=cache.hits, cache_misses=cache.misses,
        config=config.to_dict(), cell_rows=cell_rows,
    )
