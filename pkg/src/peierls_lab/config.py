"""Run configuration: strict JSON parsing, validation and serialization.

Configs are plain JSON objects with nested sections.  Validation is strict:
unknown keys are fatal (silent typos corrupt sweeps), missing required keys
and value violations are collected and reported with their field paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

__all__ = ["RunConfig", "ConfigError", "parse_config", "serialize_config"]

EXPERIMENTS = ("bands", "geometry", "butterfly", "egorov", "flow", "propagate")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class LatticeSpec:
    dim: int = 1
    basis: list = None  # rows; identity when omitted


@dataclass
class PotentialSpec:
    preset: str = "mathieu"       # mathieu | cosine2d | free
    v: float = 1.0
    w: float = 0.0
    coefficients: list = None     # [{"n": [..], "re": .., "im": ..}]


@dataclass
class FieldSpec:
    b: float = 0.0
    lam: float = 0.0
    gauge: str = "symmetric"
    phi_preset: str = "zero"      # zero | cosine | sine_ramp
    phi_amplitude: float = 0.0
    phi_period: float = 1.0


@dataclass
class NumericsSpec:
    cutoff: int = 8
    kgrid: list = field(default_factory=lambda: [64])
    n_bands: int = 4
    band_index: int = 0
    eps_list: list = field(default_factory=lambda: [0.1, 0.05, 0.025])
    dt: float = 0.02
    t_final: float = 1.0
    theta_resolution: int = 64
    q_max: int = 12
    chern_labels: bool = False
    grid_points: int = 129
    macro_box: float = 4.0
    tolerances: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    experiment: str
    lattice: LatticeSpec
    potential: PotentialSpec
    fieldspec: FieldSpec
    numerics: NumericsSpec
    out_dir: str = "out"
    seed: int = 0


_SCHEMA = {
    "experiment": str,
    "lattice": {"dim": int, "basis": list},
    "potential": {"preset": str, "v": (int, float), "w": (int, float),
                  "coefficients": list},
    "field": {"b": (int, float), "lam": (int, float), "gauge": str,
              "phi": {"preset": str, "amplitude": (int, float),
                      "period": (int, float)}},
    "numerics": {"cutoff": int, "kgrid": list, "n_bands": int,
                 "band_index": int, "eps_list": list, "dt": (int, float),
                 "t_final": (int, float), "theta_resolution": int,
                 "q_max": int, "chern_labels": bool, "grid_points": int,
                 "macro_box": (int, float), "tolerances": dict},
    "output": {"dir": str},
    "seed": int,
}

_REQUIRED = ("experiment",)


def _walk(node, schema, path, problems):
    if not isinstance(node, dict):
        problems.append(f"{path or '<root>'}: expected an object")
        return
    for key, val in node.items():
        if key not in schema:
            problems.append(f"unknown key: {path}{key}")
            continue
        spec = schema[key]
        if isinstance(spec, dict):
            _walk(val, spec, f"{path}{key}.", problems)
        elif not isinstance(val, spec):
            problems.append(f"{path}{key}: expected {spec}, got {type(val).__name__}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config; raises ConfigError listing every
    violation with its field path."""
    problems = []
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"])
    _walk(raw, _SCHEMA, "", problems)
    for key in _REQUIRED:
        if key not in raw:
            problems.append(f"missing required key: {key}")
    exp = raw.get("experiment")
    if exp is not None and exp not in EXPERIMENTS:
        problems.append(f"experiment: must be one of {EXPERIMENTS}")
    num_raw = raw.get("numerics", {}) if isinstance(raw.get("numerics", {}), dict) else {}
    tols = num_raw.get("tolerances", {})
    if isinstance(tols, dict):
        for name, value in tols.items():
            if not isinstance(value, (int, float)) or value <= 0:
                problems.append(f"numerics.tolerances.{name}: must be positive")
    eps_list = num_raw.get("eps_list")
    if isinstance(eps_list, list) and exp in ("egorov", "propagate", "flow"):
        if any(not isinstance(e, (int, float)) or e <= 0 for e in eps_list):
            problems.append("numerics.eps_list: entries must be positive numbers")
        elif any(b >= a for a, b in zip(eps_list, eps_list[1:])):
            problems.append("numerics.eps_list: must be strictly decreasing")
    if problems:
        raise ConfigError(problems)

    lat = LatticeSpec(**raw.get("lattice", {}))
    pot = PotentialSpec(**raw.get("potential", {}))
    fr = dict(raw.get("field", {}))
    phi = fr.pop("phi", {})
    fs = FieldSpec(
        b=fr.get("b", 0.0), lam=fr.get("lam", 0.0),
        gauge=fr.get("gauge", "symmetric"),
        phi_preset=phi.get("preset", "zero"),
        phi_amplitude=phi.get("amplitude", 0.0),
        phi_period=phi.get("period", 1.0))
    num = NumericsSpec(**num_raw)
    out = raw.get("output", {}).get("dir", "out")
    return RunConfig(experiment=exp, lattice=lat, potential=pot, fieldspec=fs,
                     numerics=num, out_dir=out, seed=raw.get("seed", 0))


def serialize_config(cfg: RunConfig) -> str:
    obj = {
        "experiment": cfg.experiment,
        "lattice": {"dim": cfg.lattice.dim,
                    **({"basis": cfg.lattice.basis} if cfg.lattice.basis else {})},
        "potential": {"preset": cfg.potential.preset, "v": cfg.potential.v,
                      "w": cfg.potential.w,
                      **({"coefficients": cfg.potential.coefficients}
                         if cfg.potential.coefficients else {})},
        "field": {"b": cfg.fieldspec.b, "lam": cfg.fieldspec.lam,
                  "gauge": cfg.fieldspec.gauge,
                  "phi": {"preset": cfg.fieldspec.phi_preset,
                          "amplitude": cfg.fieldspec.phi_amplitude,
                          "period": cfg.fieldspec.phi_period}},
        "numerics": {"cutoff": cfg.numerics.cutoff, "kgrid": cfg.numerics.kgrid,
                     "n_bands": cfg.numerics.n_bands,
                     "band_index": cfg.numerics.band_index,
                     "eps_list": cfg.numerics.eps_list, "dt": cfg.numerics.dt,
                     "t_final": cfg.numerics.t_final,
                     "theta_resolution": cfg.numerics.theta_resolution,
                     "q_max": cfg.numerics.q_max,
                     "chern_labels": cfg.numerics.chern_labels,
                     "grid_points": cfg.numerics.grid_points,
                     "macro_box": cfg.numerics.macro_box,
                     "tolerances": cfg.numerics.tolerances},
        "output": {"dir": cfg.out_dir},
        "seed": cfg.seed,
    }
    return json.dumps(obj, indent=2, sort_keys=True)
