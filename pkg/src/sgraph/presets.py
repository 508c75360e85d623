"""Bundled example systems with their sweep grids."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .model import SweepConfig, SystemModel, lambda_grid, load_system


@dataclass(frozen=True)
class Preset:
    name: str
    filename: str
    interior: tuple   # (start, step, count)
    exterior: tuple
    window: tuple     # raster window (xmin, xmax, ymin, ymax)

    def system(self) -> SystemModel:
        return load_system(self.path())

    def path(self):
        return resources.files("sgraph").joinpath("data", self.filename)

    def config(self, hard: bool = False, include_halfplanes=()) -> SweepConfig:
        return SweepConfig(lambda_grid(*self.interior), lambda_grid(*self.exterior), hard,
                           tuple(include_halfplanes))


PRESETS = {
    "paper-ex1": Preset("paper-ex1", "ex1.json", (-2.0, 0.05, 81), (-10.0, 0.25, 81),
                        (-0.5, 1.5, -1.0, 1.0)),
    "paper-ex2": Preset("paper-ex2", "ex2.json", (-1.0, 0.05, 81), (-1.0, 0.25, 81),
                        (-0.4, 1.1, -0.75, 0.75)),
    "paper-ex3": Preset("paper-ex3", "ex3.json", (-20.0, 0.1, 211), (-50.0, 0.35, 301),
                        (-1.5, 2.0, -1.75, 1.75)),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
