"""Lazily computed, shared results for one configuration.

Several subcommands and checks need the same basis solve, the same edge
slopes or the same calibrated model; a session computes each once.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from functools import cached_property

from .bem import Resolution, build_mesh, cached_basis, solve_basis
from .config import WorkbenchConfig, load_config
from .saddle import SensitivityModel, find_rf_null, geometry_sensitivity

log = logging.getLogger(__name__)


class Session:
    def __init__(self, config: WorkbenchConfig | None = None, resolution: str | None = None,
                 use_cache: bool = True, cache_dir: str | None = None):
        self.config = config or load_config()
        self.resolution_name = resolution
        self.use_cache = use_cache
        self.cache_dir = cache_dir or self.config.value("solver", "cache_dir")
        self.cache_hit = None

    @cached_property
    def layout(self):
        return self.config.layout()

    @cached_property
    def ion(self):
        return self.config.ion()

    @cached_property
    def drive(self):
        return self.config.drive()

    @cached_property
    def reference_drive(self):
        return self.config.drive(reference=True)

    @cached_property
    def resolution(self) -> Resolution:
        return self.config.resolution(self.resolution_name)

    @cached_property
    def basis(self):
        if not self.use_cache:
            return solve_basis(self.layout, self.resolution)
        from pathlib import Path

        from .bem import basis_key

        path = Path(self.cache_dir) / f"basis-{basis_key(self.layout, self.resolution, 0.0)}.npz"
        self.cache_hit = path.exists()
        return cached_basis(self.layout, self.resolution, self.cache_dir)

    @cached_property
    def axisym_resolution(self) -> Resolution:
        return replace(self.resolution, max_mode=0)

    @cached_property
    def template(self):
        """Node fractions of the reference mesh, shared by all perturbed re-solves."""
        return build_mesh(self.layout, self.axisym_resolution).template

    @cached_property
    def saddle(self):
        return find_rf_null(self.basis, self.drive, self.ion)

    @cached_property
    def reference_saddle(self):
        return find_rf_null(self.basis, self.reference_drive, self.ion)

    def edge_slope(self, edge: str) -> float:
        cache = self.__dict__.setdefault("_edge_slopes", {})
        if edge not in cache:
            step = float(self.config.value("sensitivity", "edge_step_um"))
            cache[edge] = geometry_sensitivity(
                self.layout, self.reference_drive, edge, step, self.axisym_resolution, self.template
            )
            log.info("edge %s slope %.4f um/um", edge, cache[edge])
        return cache[edge]

    def edge_slopes(self, edges) -> dict:
        return {e: self.edge_slope(e) for e in edges}

    def calibrated_model(self, edges=()) -> SensitivityModel:
        """Linear model with null, voltage slopes and the given edge slopes from this solver."""
        base = SensitivityModel()
        slopes = dict(base.edge_slopes)
        slopes.update(self.edge_slopes(edges))
        step = float(self.config.value("sensitivity", "voltage_step_v"))
        return SensitivityModel.calibrate(self.basis, self.reference_drive, slopes, step)
