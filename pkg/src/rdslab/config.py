"""Experiment configuration: TOML schema, validation, and construction of
the map family / driving system / numerics bundle.

The resolved configuration (file contents merged over defaults) is what
the manifest records, so a run is reproducible from its manifest alone.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cocycle import DrivingKind, DrivingSystem
from .errors import ConfigError
from .maps import FamilyKind, MapFamily, TrigPoly
from .spectral import SpectralVector, from_trigpoly

DEFAULTS: dict = {
    "family": {
        "kind": "composed",
        "degree": 2,
        "eps_max": 0.1,
        "base": [{"sin": [0.08]}, {"sin": [-0.06], "cos": [0.03]}],
        "perturbation": {"sin": [0.08, 0.0], "cos": [0.0, 0.016]},
    },
    "driving": {
        "kind": "bernoulli",
        "probs": [0.5, 0.5],
        "alpha": 0.6180339887498949,
        "seed": 20260809,
    },
    "numerics": {
        "modes": 64,
        "oversample": 8,
        "pullback_depth": 60,
        "pullback_tol": 1e-12,
        "n_terms": 0,  # 0 = adaptive from the fitted decay rate
        "n_corr": 30,
        "samples": 200,
        "workers": 1,
        "decay_samples": 8,
        "decay_steps": 30,
        "tail_target": 1e-10,
    },
    "experiment": {
        "eps": 0.0,
        "eps_list": [1e-1, 1e-2, 1e-3, 1e-4],
        "remainder_eps": [1e-1, 1e-2, 1e-3],
        "eps_fd": 1e-3,
        "eps_fd_variance": 1e-2,
        "orbit_length": 10000,
        "trials": 10000,
        "lyapunov_steps": 60,
        "lyapunov_eps": [0.0, 0.01, 0.05],
        "observable": [{"cos": [1.0]}],
        "out_dir": "out",
    },
    "limits": {
        "max_degree": 16,
        "max_coeff_l1": 1.5,
    },
}


# coefficient tables are replaced wholesale, never key-merged with defaults
ATOMIC_KEYS = (("family", "base"), ("family", "perturbation"), ("experiment", "observable"))


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _merge_config(defaults: dict, raw: dict) -> dict:
    out = _merge(defaults, raw)
    for section, key in ATOMIC_KEYS:
        if section in raw and key in raw[section]:
            out[section][key] = copy.deepcopy(raw[section][key])
    return out


def _trigpoly(spec: dict, limits: dict, what: str) -> TrigPoly:
    if not isinstance(spec, dict):
        raise ConfigError(f"{what}: expected a table with cos/sin/const entries")
    unknown = set(spec) - {"cos", "sin", "const", "label"}
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")
    poly = TrigPoly(
        const=float(spec.get("const", 0.0)),
        cos=tuple(float(c) for c in spec.get("cos", [])),
        sin=tuple(float(c) for c in spec.get("sin", [])),
    )
    if poly.degree > limits["max_degree"]:
        raise ConfigError(
            f"{what}: degree {poly.degree} exceeds cap {limits['max_degree']}"
        )
    budget = abs(poly.const) + sum(abs(c) for c in poly.cos) + sum(
        abs(c) for c in poly.sin
    )
    if budget > limits["max_coeff_l1"]:
        raise ConfigError(
            f"{what}: coefficient budget {budget:.3f} exceeds cap "
            f"{limits['max_coeff_l1']}"
        )
    return poly


@dataclass
class Config:
    family: MapFamily
    driving: DrivingSystem
    numerics: dict
    experiment: dict
    limits: dict
    resolved: dict  # full dict after defaults, for the manifest

    @property
    def out_dir(self) -> str:
        return self.experiment["out_dir"]

    def observables(self, order: int | None = None) -> list[SpectralVector]:
        order = order if order is not None else self.numerics["modes"]
        obs = self.experiment["observable"]
        if isinstance(obs, dict):
            obs = [obs]
        return [
            from_trigpoly(_trigpoly(o, self.limits, f"observable[{i}]"), order)
            for i, o in enumerate(obs)
        ]

    def observable_labels(self) -> list[str]:
        obs = self.experiment["observable"]
        if isinstance(obs, dict):
            obs = [obs]
        return [o.get("label", f"observable_{i}") for i, o in enumerate(obs)]


def build_config(raw: dict) -> Config:
    resolved = _merge_config(DEFAULTS, raw)
    limits = resolved["limits"]

    fam_cfg = resolved["family"]
    try:
        kind = FamilyKind(fam_cfg["kind"])
    except ValueError as exc:
        raise ConfigError(f"unknown family kind {fam_cfg['kind']!r}") from exc
    base_specs = fam_cfg["base"]
    if isinstance(base_specs, dict):
        base_specs = [base_specs]
    base = [
        _trigpoly(spec, limits, f"family.base[{i}]") for i, spec in enumerate(base_specs)
    ]
    pert_specs = fam_cfg["perturbation"]
    if isinstance(pert_specs, dict):
        pert_specs = [pert_specs]
    pert = [
        _trigpoly(spec, limits, f"family.perturbation[{i}]")
        for i, spec in enumerate(pert_specs)
    ]
    try:
        family = MapFamily(
            kind, int(fam_cfg["degree"]), base, pert, float(fam_cfg["eps_max"])
        )
    except (ValueError, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc

    drv_cfg = resolved["driving"]
    try:
        dkind = DrivingKind(drv_cfg["kind"])
    except ValueError as exc:
        raise ConfigError(f"unknown driving kind {drv_cfg['kind']!r}") from exc
    try:
        if dkind is DrivingKind.BERNOULLI:
            driving = DrivingSystem(
                dkind, int(drv_cfg["seed"]), probs=tuple(drv_cfg["probs"])
            )
            if len(driving.probs) != len(base):
                raise ConfigError(
                    f"{len(driving.probs)} probabilities for {len(base)} base maps"
                )
        else:
            driving = DrivingSystem(
                dkind, int(drv_cfg["seed"]), alpha=float(drv_cfg["alpha"])
            )
            if len(base) != 1:
                raise ConfigError("rotation driving requires exactly one base map")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    num = resolved["numerics"]
    if num["modes"] < 1 or num["oversample"] < 4:
        raise ConfigError("numerics: modes >= 1 and oversample >= 4 required")
    for eps in list(resolved["experiment"]["eps_list"]) + [resolved["experiment"]["eps"]]:
        if abs(float(eps)) > family.eps_max * (1 + 1e-12):
            raise ConfigError(f"experiment eps {eps} outside the family interval")

    return Config(family, driving, num, resolved["experiment"], limits, resolved)


def load_config(path: str | Path) -> Config:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    return build_config(raw)
