"""Run configuration shared by the command-line entry points."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .errors import DataFormatError, FuncovError


@dataclass
class RunConfig:
    """All tunable settings of the command-line workflows.

    Values can come from command-line flags or from a JSON config file;
    when both are given, the config file wins.
    """

    # basis
    order: int = 4
    n_interior_mean: int = 9
    n_interior_cov: int = 9
    # selection grids (None means the package defaults)
    tau_grid: list | None = None
    rho_grid: list | None = None
    w_grid: list | None = None
    # components
    pve: float = 0.99
    npc: int | None = None
    level: float = 0.95
    # data handling
    domain: tuple | None = None
    responses: list | None = None
    grid_size: int = 101
    # execution
    workers: int = 1
    seed: int = 0
    # simulation design
    n: int = 100
    n_values: list | None = None
    rho: float = 0.5
    snr: float = 2.0
    m_min: int = 3
    m_max: int = 7
    replicates: int = 1
    n_test: int = 200
    compare_zero_cross: bool = False

    def validate(self) -> "RunConfig":
        if self.order < 1:
            raise FuncovError("order must be >= 1")
        if self.n_interior_mean < 1 or self.n_interior_cov < 1:
            raise FuncovError("interior knot counts must be >= 1")
        if not 0.0 < self.pve <= 1.0:
            raise FuncovError("pve must lie in (0, 1]")
        if self.npc is not None and self.npc < 1:
            raise FuncovError("npc must be >= 1 when given")
        if not 0.0 < self.level < 1.0:
            raise FuncovError("level must lie in (0, 1)")
        if self.grid_size < 0:
            raise FuncovError("grid_size must be nonnegative")
        if self.workers < 1:
            raise FuncovError("workers must be >= 1")
        if self.replicates < 1:
            raise FuncovError("replicates must be >= 1")
        if self.domain is not None:
            a, b = self.domain
            if not b > a:
                raise FuncovError("domain must satisfy a < b")
        for name in ("tau_grid", "rho_grid", "w_grid"):
            grid = getattr(self, name)
            if grid is not None and len(grid) == 0:
                raise FuncovError(f"{name} must be nonempty when given")
        return self


def load_config_file(path) -> dict:
    """Read a JSON config file into a plain dict of known fields."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise DataFormatError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise DataFormatError(f"{path}: unknown config keys: {', '.join(unknown)}")
    return raw


def merge_config(flag_values: dict, config_path=None) -> RunConfig:
    """Combine flag values with an optional config file.

    ``flag_values`` holds only the flags the user actually set. Config
    file entries override flags.
    """
    merged = dict(flag_values)
    if config_path is not None:
        overrides = load_config_file(config_path)
        if "n" in overrides and "n_values" not in overrides:
            # a config n replaces the whole flag-derived training-size list
            merged.pop("n_values", None)
        merged.update(overrides)
    cfg = RunConfig(**merged)
    if cfg.domain is not None:
        cfg.domain = (float(cfg.domain[0]), float(cfg.domain[1]))
    return cfg.validate()
