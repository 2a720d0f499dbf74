"""Run configuration: a JSON document with every default written out after load."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .game import DEFAULT_STEP_FACTOR, GameOptions
from .grid import GridSpec
from .io import jsonable, read_json, write_json
from .levelset import SolverOptions
from .oracles import AnalyticArrival, ImplicitSurface, surface_from_dict
from .regularity import AnalysisOptions

ALL_CRITERIA = list(range(1, 15))


def _strict(cls, data, section: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(extra)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r} section: {exc}") from exc


@dataclass
class GameSection:
    epsilons: list[float] = field(default_factory=lambda: [0.1, 0.05, 0.025])
    directions: int = 32
    tol: float | None = None
    max_iter: int = 100_000
    value_cap: float | None = None
    step_factor: float = DEFAULT_STEP_FACTOR
    tangent_lines: int | None = None
    guided_passes: int = 2
    probe: list[float] | None = None
    compare_radius: float = 0.8

    def __post_init__(self):
        if not self.epsilons:
            raise ConfigError("game.epsilons must not be empty")
        self.epsilons = [float(e) for e in self.epsilons]
        self.options(self.epsilons[0])

    def options(self, epsilon: float) -> GameOptions:
        return GameOptions(epsilon, self.directions, self.tol, self.max_iter, self.value_cap,
                           self.step_factor, self.tangent_lines, self.guided_passes)


@dataclass
class CompareSection:
    field_a: str | None = None
    field_b: str | None = None
    mask_center: list[float] | None = None
    mask_radius: float | None = None


@dataclass
class OutputSection:
    dir: str = "atl_out"
    formats: list[str] = field(default_factory=lambda: ["csv", "vtk"])
    figures: bool = True

    def __post_init__(self):
        bad = set(self.formats) - {"csv", "vtk"}
        if bad:
            raise ConfigError(f"unknown output formats {sorted(bad)}")


@dataclass
class AcceptSection:
    criteria: list[int] = field(default_factory=lambda: list(ALL_CRITERIA))

    def __post_init__(self):
        bad = [c for c in self.criteria if c not in ALL_CRITERIA]
        if bad:
            raise ConfigError(f"unknown acceptance criteria {bad}")
        self.criteria = sorted(set(int(c) for c in self.criteria))


def _grid_from(data) -> GridSpec | None:
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError("section 'grid' must be an object")
    try:
        if {"lower", "upper"} <= set(data):
            extra = set(data) - {"lower", "upper", "spacing"}
            if extra:
                raise ConfigError(f"unknown keys in 'grid': {sorted(extra)}")
            return GridSpec.from_bounds(data["lower"], data["upper"], data["spacing"])
        extra = set(data) - {"origin", "spacing", "counts"}
        if extra:
            raise ConfigError(f"unknown keys in 'grid': {sorted(extra)}")
        return GridSpec.from_dict(data)
    except KeyError as exc:
        raise ConfigError(f"grid is missing {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc


def _surface_dict(surface: ImplicitSurface) -> dict:
    out = surface.to_dict()
    out.setdefault("center", None)
    out.setdefault("rotation", None)
    return out


@dataclass
class RunConfig:
    seed: int = 0
    surface: ImplicitSurface | None = None
    oracle: AnalyticArrival | None = None
    grid: GridSpec | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    game: GameSection = field(default_factory=GameSection)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    u_field: str | None = None
    compare: CompareSection = field(default_factory=CompareSection)
    output: OutputSection = field(default_factory=OutputSection)
    accept: AcceptSection = field(default_factory=AcceptSection)

    def __post_init__(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an integer in [0, 2^64)")
        self.analysis.seed = self.seed

    @property
    def rng_seed(self) -> int:
        return self.seed

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError(f"config is missing required section(s): {', '.join(missing)}")

    def to_dict(self) -> dict:
        analysis = self.analysis.to_dict()
        analysis.pop("seed")
        return jsonable({
            "seed": self.seed,
            "surface": _surface_dict(self.surface) if self.surface is not None else None,
            "oracle": self.oracle.to_dict() if self.oracle is not None else None,
            "grid": self.grid.to_dict() if self.grid is not None else None,
            "solver": self.solver.to_dict(),
            "game": asdict(self.game),
            "analysis": analysis,
            "u_field": self.u_field,
            "compare": asdict(self.compare),
            "output": asdict(self.output),
            "accept": asdict(self.accept),
        })

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
        surface = data.get("surface")
        oracle = data.get("oracle")
        analysis = dict(data.get("analysis") or {})
        if "seed" in analysis:
            raise ConfigError("set the seed at the top level, not under 'analysis'")
        try:
            oracle_obj = AnalyticArrival.from_dict(oracle) if oracle is not None else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid oracle: {exc}") from exc
        try:
            solver = SolverOptions.from_dict(data["solver"]) if data.get("solver") is not None else SolverOptions()
        except TypeError as exc:
            raise ConfigError(f"invalid 'solver' section: {exc}") from exc
        return cls(
            seed=data.get("seed", 0),
            surface=surface_from_dict(surface) if surface is not None else None,
            oracle=oracle_obj,
            grid=_grid_from(data.get("grid")),
            solver=solver,
            game=_strict(GameSection, data.get("game"), "game"),
            analysis=_strict(AnalysisOptions, analysis, "analysis"),
            u_field=data.get("u_field"),
            compare=_strict(CompareSection, data.get("compare"), "compare"),
            output=_strict(OutputSection, data.get("output"), "output"),
            accept=_strict(AcceptSection, data.get("accept"), "accept"),
        )

    def save(self, path) -> Path:
        return write_json(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        return cls.from_dict(read_json(path))

    def probe_point(self) -> np.ndarray:
        if self.game.probe is not None:
            return np.asarray(self.game.probe, float)
        if self.surface is not None and self.surface.center is not None:
            return np.asarray(self.surface.center, float)
        d = self.surface.dimension if self.surface is not None else 2
        return np.zeros(d)
