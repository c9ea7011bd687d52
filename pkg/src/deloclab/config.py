"""Run configuration: dataclasses with an INI round trip and a content hash.

INI layout (one section per module)::

    [torus]       d, L, gammas
    [grid]        spacing
    [potential]   source = bernoulli | zero | constant | file | map, seed, p, value, path
    [solver]      mode = lowest | nearest | window, k, energy, tol
    [scales]      eta, c1, c2
    [diagnostics] dichotomy, loclength, varbound, dump_centers, sample_count
    [projector]   enabled, energy
    [sweep]       seeds, energies, Ls, energy_min, energy_max, n_energies
    [run]         output, threads

``output`` and ``threads`` do not enter the hash; nothing else may change a
numeric result.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

from .scales import ScaleError, check_eta

THREADS_ENV = "DELOCLAB_THREADS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TorusConfig:
    d: int = 1
    L: float = 16.0
    gammas: tuple[float, ...] = ()


@dataclass(frozen=True)
class GridConfig:
    spacing: float = 0.25


@dataclass(frozen=True)
class PotentialConfig:
    source: str = "bernoulli"
    seed: int = 0
    p: float = 0.5
    value: float = 0.0
    path: str = ""


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "lowest"
    k: int = 4
    energy: float = 0.0
    tol: float = 1e-8


@dataclass(frozen=True)
class ScalesConfig:
    eta: float = 0.25
    c1: float = 1.0
    c2: float = 1.0


@dataclass(frozen=True)
class DiagnosticsConfig:
    dichotomy: bool = True
    loclength: bool = True
    varbound: bool = True
    dump_centers: bool = False
    sample_count: int = 16


@dataclass(frozen=True)
class ProjectorConfig:
    enabled: bool = False
    energy: float = 0.0  # window anchor; 0 means lambda / 1.5 for each solved pair


@dataclass(frozen=True)
class SweepConfig:
    seeds: tuple[int, ...] = ()
    energies: tuple[float, ...] = ()
    Ls: tuple[float, ...] = ()
    energy_min: float = 0.02
    energy_max: float = 0.4
    n_energies: int = 8


@dataclass(frozen=True)
class RunConfig:
    torus: TorusConfig = TorusConfig()
    grid: GridConfig = GridConfig()
    potential: PotentialConfig = PotentialConfig()
    solver: SolverConfig = SolverConfig()
    scales: ScalesConfig = ScalesConfig()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    projector: ProjectorConfig = ProjectorConfig()
    sweep: SweepConfig = SweepConfig()
    output: str = "runs"
    threads: int = 1

    def validate(self) -> "RunConfig":
        t = self.torus
        if t.d not in (1, 2, 3):
            raise ConfigError(f"d must be 1, 2 or 3, got {t.d}")
        if not t.L > 0 or len(t.gammas) != t.d - 1 or any(g < 1 for g in t.gammas):
            raise ConfigError("invalid torus: need L > 0 and d-1 anisotropies >= 1")
        if not 0 < self.grid.spacing <= t.L / 4:
            raise ConfigError("grid spacing must lie in (0, L/4]")
        try:
            check_eta(self.scales.eta, t.d)
        except ScaleError as exc:
            raise ConfigError(str(exc)) from exc
        if self.scales.c1 <= 0 or self.scales.c2 <= 0:
            raise ConfigError("c1, c2 must be positive")
        if self.potential.source not in ("bernoulli", "zero", "constant", "file", "map"):
            raise ConfigError(f"unknown potential source {self.potential.source!r}")
        if self.potential.source == "constant" and self.potential.value < 0:
            raise ConfigError("constant potential must be nonnegative")
        if self.solver.mode not in ("lowest", "nearest", "window"):
            raise ConfigError(f"unknown solver mode {self.solver.mode!r}")
        if self.solver.k < 1 or self.solver.tol <= 0:
            raise ConfigError("solver needs k >= 1 and tol > 0")
        if self.solver.mode == "window" and not 0 < self.solver.energy < 1:
            raise ConfigError("window mode needs 0 < energy < 1")
        return self

    def payload(self) -> dict:
        """Everything that can influence numbers."""
        d = dataclasses.asdict(self)
        d.pop("output")
        d.pop("threads")
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **sections) -> "RunConfig":
        """``cfg.replace(potential={"seed": 3}, torus={"L": 32})``."""
        updates = {}
        for name, value in sections.items():
            current = getattr(self, name)
            if isinstance(value, dict):
                updates[name] = dataclasses.replace(current, **value)
            else:
                updates[name] = value
        return dataclasses.replace(self, **updates)

    @property
    def worker_count(self) -> int:
        env = os.environ.get(THREADS_ENV)
        return max(1, int(env)) if env else max(1, self.threads)


_SECTIONS = {
    "torus": TorusConfig, "grid": GridConfig, "potential": PotentialConfig,
    "solver": SolverConfig, "scales": ScalesConfig, "diagnostics": DiagnosticsConfig,
    "projector": ProjectorConfig, "sweep": SweepConfig,
}


def _parse(ftype, raw: str):
    raw = raw.strip()
    text = str(ftype)
    if "tuple" in text:
        elem = int if "int" in text else float
        return tuple(elem(x) for x in raw.replace(",", " ").split())
    if text in ("bool", "<class 'bool'>"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if text in ("int", "<class 'int'>"):
        return int(raw)
    if text in ("float", "<class 'float'>"):
        return float(raw)
    return raw


def config_from_ini(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keys are case sensitive (L vs l)
    cp.read_string(text)
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if not cp.has_section(name):
            continue
        fields = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in cp.items(name):
            if key not in fields:
                raise ConfigError(f"unknown key [{name}] {key}")
            try:
                values[key] = _parse(fields[key].type, raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for [{name}] {key}: {raw!r}") from exc
        kwargs[name] = cls(**values)
    if cp.has_section("run"):
        if cp.has_option("run", "output"):
            kwargs["output"] = cp.get("run", "output")
        if cp.has_option("run", "threads"):
            kwargs["threads"] = cp.getint("run", "threads")
    return RunConfig(**kwargs).validate()


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return config_from_ini(fh.read())


def config_to_ini(cfg: RunConfig) -> str:
    lines = []
    for name in _SECTIONS:
        lines.append(f"[{name}]")
        for f in dataclasses.fields(_SECTIONS[name]):
            v = getattr(getattr(cfg, name), f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        lines.append("")
    lines += ["[run]", f"output = {cfg.output}", f"threads = {cfg.threads}", ""]
    return "\n".join(lines)
