"""Experiment configuration: defaults, validation and echo."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import List, Optional

import numpy as np

from ..errors import ValidationError
from ..solver import GUARD

EXPERIMENTS = (
    "cell-convergence",
    "approx-rate",
    "doubling",
    "weiss",
    "turning",
    "two-point",
    "cover",
    "tube",
)
ALIASES = {"cell": "cell-convergence", "approx": "approx-rate", "twopoint": "two-point"}
PRESETS = ("identity", "layered", "checkerboard", "trig-tensor", "spectral-corpus")

# per-suite defaults layered under the global ones
SUITE_DEFAULTS = {
    "cell-convergence": {"preset": "layered", "cell_sizes": [32, 64, 128, 256]},
    "approx-rate": {"preset": "layered", "eps": [1 / 8, 1 / 16, 1 / 32, 1 / 64], "radius": 1.0},
    "doubling": {"preset": "identity", "boundary": ["linear", "product", "cubic"], "reference_resolution": 64,
                 "radius": 1.0, "radii": [1 / 8, 1 / 4, 1 / 2]},
    "weiss": {"preset": "spectral-corpus"},
    "turning": {"preset": "layered", "eps": [1 / 16, 1 / 32], "radius": 1.0},
    "two-point": {"preset": "identity", "radius": 1.0},
    "cover": {"preset": "layered", "eps": [1 / 16, 1 / 32], "reference_eps": [1 / 16, 1 / 32, 1 / 64],
              "radius": 2.0},
    "tube": {"preset": "layered", "eps": [1 / 16, 1 / 32], "radius": 2.0,
             "radii": [0.2, 0.1, 0.05]},
}

GLOBAL_DEFAULTS = {
    "preset_params": {},
    "cell_n": 64,
    "boundary": "product",
    "resolution": None,
    "reference_resolution": 32,
    "ell": 2,
    "delta0": 1 / 64,
    "eps0": 1 / 32,
    "eta": 0.1,
    "gamma": 0.1,
    "window": 1 / 32,
    "L_max": 8,
    "q": 16,
    "seed": 7,
    "samples": 400_000,
    "corpus_size": 200,
    "out": "results",
    "jobs": 1,
    "radius": 1.0,
}


class ConfigError(ValidationError):
    """Carries one ``(name, message)`` pair per violated guard."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"[{n}] {m}" for n, m in self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    preset: str
    preset_params: dict = field(default_factory=dict)
    cell_n: int = 64
    cell_sizes: Optional[List[int]] = None
    eps: Optional[List[float]] = None
    reference_eps: Optional[List[float]] = None
    boundary: object = "product"
    resolution: Optional[int] = None
    reference_resolution: int = 32
    radius: float = 1.0
    radii: Optional[List[float]] = None
    ell: int = 2
    delta0: float = 1 / 64
    eps0: float = 1 / 32
    eta: float = 0.1
    gamma: float = 0.1
    window: float = 1 / 32
    L_max: int = 8
    q: int = 16
    seed: int = 7
    samples: int = 400_000
    corpus_size: int = 200
    out: str = "results"
    jobs: int = 1

    def to_dict(self):
        return asdict(self)

    @property
    def oscillating(self):
        return self.preset not in ("identity", "spectral-corpus")

    def grid_n(self, eps=None, radius=None):
        """Intervals per diameter.

        Oscillating solves use ``resolution`` (default: the guard
        minimum for ``eps``); constant-coefficient reference solves use
        ``reference_resolution``.
        """
        R = self.radius if radius is None else radius
        if eps is None:
            n = int(round(2 * R * self.reference_resolution))
        elif self.resolution is not None:
            n = int(round(2 * R * self.resolution))
        else:
            n = int(np.ceil(2 * R * GUARD / eps - 1e-9))
        return n + (n % 2)


def _num(v):
    """Accept numbers and fraction strings such as ``"1/64"``."""
    if isinstance(v, str):
        return float(Fraction(v))
    return float(v)


def _fmt_frac(x):
    f = Fraction(x).limit_denominator(1 << 20)
    return f"{f.numerator}/{f.denominator}" if f.denominator != 1 else str(f.numerator)


def validate_config(raw: dict, echo=False) -> ExperimentConfig:
    """Fill defaults, check every guard, optionally echo into ``out``.

    Raises
    ------
    ConfigError
        Listing one named error per violated guard.
    """
    raw = dict(raw or {})
    errors = []
    exp = ALIASES.get(raw.get("experiment", ""), raw.get("experiment"))
    if exp not in EXPERIMENTS:
        raise ConfigError([("unknown-experiment",
                            f"experiment {raw.get('experiment')!r} not in {', '.join(EXPERIMENTS)}")])
    merged = dict(GLOBAL_DEFAULTS)
    merged.update(SUITE_DEFAULTS[exp])
    merged.update({k: v for k, v in raw.items() if v is not None or k == "resolution"})
    merged["experiment"] = exp
    known = set(ExperimentConfig.__dataclass_fields__)
    for k in sorted(set(merged) - known):
        errors.append(("unknown-field", f"unknown configuration field {k!r}"))
        merged.pop(k)
    try:
        for k in ("delta0", "eps0", "eta", "gamma", "window", "radius"):
            merged[k] = _num(merged[k])
        for k in ("eps", "reference_eps", "radii"):
            if merged.get(k) is not None:
                merged[k] = [_num(v) for v in merged[k]]
        for k in ("ell", "L_max", "q", "seed", "samples", "corpus_size", "jobs", "cell_n",
                  "reference_resolution"):
            merged[k] = int(merged[k])
    except (TypeError, ValueError) as exc:
        raise ConfigError(errors + [("bad-number", str(exc))]) from None
    if merged["preset"] not in PRESETS:
        errors.append(("unknown-preset", f"preset {merged['preset']!r} not in {', '.join(PRESETS)}"))
    if not 0 < merged["delta0"] <= 0.5:
        errors.append(("delta0-range", f"delta0={merged['delta0']:g} must lie in (0, 1/2]"))
    for k in ("eps0", "eta", "gamma", "window"):
        if not 0 < merged[k] <= 0.5:
            errors.append((f"{k}-range", f"{k}={merged[k]:g} must lie in (0, 1/2]"))
    if merged["ell"] < 1:
        errors.append(("ell-range", "ell must be a positive integer"))
    if merged["L_max"] < max(2, merged["ell"]):
        errors.append(("L_max-range", "L_max must be at least max(2, ell)"))
    if merged["q"] < merged["L_max"] + 1:
        errors.append(("quadrature-order", f"q={merged['q']} under-resolves L_max={merged['L_max']}; need q >= {merged['L_max'] + 1}"))
    if merged["reference_resolution"] < 4:
        errors.append(("resolution-range", "reference_resolution must be at least 4 intervals per unit"))
    if merged["jobs"] < 1:
        errors.append(("jobs-range", "jobs must be >= 1"))
    if merged["samples"] < 1000:
        errors.append(("samples-range", "at least 1000 Monte Carlo samples"))
    for k in ("eps", "reference_eps", "radii"):
        vals = merged.get(k)
        if vals is not None and any(not v > 0 for v in vals):
            errors.append((f"{k}-positive", f"all {k} values must be positive"))
    if not merged["radius"] > 0:
        errors.append(("radius-positive", "radius must be positive"))
    res = merged.get("resolution")
    if res is not None:
        res = int(res)
        merged["resolution"] = res
        if res < 4:
            errors.append(("resolution-range", "resolution must be at least 4 intervals per unit"))
    osc = merged["preset"] not in ("identity", "spectral-corpus")
    if osc and res is not None and merged.get("eps"):
        e = min(merged["eps"])
        need = int(round(GUARD / e))
        if 1.0 / res > e / GUARD * (1 + 1e-12):
            errors.append(("resolution-guard",
                           f"h = 1/{res} exceeds eps/{GUARD} = 1/{need} for eps = {_fmt_frac(e)}; "
                           f"need resolution >= {need} intervals per unit"))
    if errors:
        raise ConfigError(errors)
    cfg = ExperimentConfig(**merged)
    if echo:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "config.json"), "w", newline="\n", encoding="utf-8") as fh:
            json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return cfg


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
