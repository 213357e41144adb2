"""Run configuration: JSON schema with explicit defaults, unknown keys rejected.

The resolved configuration is embedded verbatim in every output file so runs
can be reproduced byte for byte from their artifacts.
"""

import copy
import json

from .density import QuadratureSpec, gaussian_initial_data
from .dynamics import FlowConfig, PotentialSpec
from .errors import ConfigError
from .oracle import EnsembleConfig
from .operators import OperatorContext
from .solver import SeriesConfig, standard_probes

DEFAULTS = {
    "potential": {
        "kind": "harmonic-pair",
        "amplitude": 1.0,
        "range": 1.0,
    },
    "integrator": {
        "step": 1e-3,
        "max_steps": 1_000_000,
    },
    "initial_data": {
        "mass": 4.0,
        "sigma_v": 1.0,
        "sigma_r": 1.0,
        "bandwidth": 0.2,
        "components": 512,
        "seed": 101,
    },
    "series": {
        "order": 2,
        "renormalized": False,
        "times": [0.05, 0.1],
        "probes": "standard",
        "arity": 1,
        "time_crn": False,
    },
    "quadrature": {
        "samples": 20_000,
        "seed": 202,
        "error_mode": "fixed-budget",
    },
    "ensemble": {
        "intensity": 4.0,
        "replicates": 10_000,
        "cap": 24,
        "bandwidth": 0.2,
        "seed": 303,
    },
    "residual": {
        "dt": 0.02,
        "dr": 1e-3,
        "dv": 1e-3,
        "center_time": 0.05,
    },
    "identities": {
        "tolerance_overrides": {},
    },
    "output": {
        "directory": "out",
        "formats": ["csv", "json"],
    },
}


def _merge(defaults, user, path=""):
    if not isinstance(user, dict):
        raise ConfigError(f"config section {path or '<root>'} must be an object")
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict) and key != "tolerance_overrides":
            out[key] = _merge(defaults[key], val, path + key + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


class RunConfig:
    """Resolved run configuration with constructors for every module object."""

    def __init__(self, data=None):
        self.data = _merge(DEFAULTS, data or {})

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config parse error in {path}: {exc}") from exc
        return cls(data)

    def override_seed(self, seed: int):
        self.data["quadrature"]["seed"] = int(seed)
        self.data["ensemble"]["seed"] = int(seed) + 1
        self.data["initial_data"]["seed"] = int(seed) + 2

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True)

    # constructors -----------------------------------------------------

    def potential(self) -> PotentialSpec:
        p = self.data["potential"]
        return PotentialSpec(p["kind"], float(p["amplitude"]), float(p["range"]))

    def flow(self) -> FlowConfig:
        i = self.data["integrator"]
        return FlowConfig(step=float(i["step"]), max_steps=int(i["max_steps"]))

    def context(self) -> OperatorContext:
        return OperatorContext(self.potential(), self.flow())

    def initial_density(self):
        d = self.data["initial_data"]
        return gaussian_initial_data(
            mass=float(d["mass"]), sigma_v=float(d["sigma_v"]),
            sigma_r=float(d["sigma_r"]), bandwidth=float(d["bandwidth"]),
            components=int(d["components"]), seed=int(d["seed"]))

    def quadrature(self) -> QuadratureSpec:
        q = self.data["quadrature"]
        return QuadratureSpec(n_samples=int(q["samples"]), proposal=None,
                              seed=int(q["seed"]),
                              error_mode=str(q["error_mode"]))

    def series(self) -> SeriesConfig:
        s = self.data["series"]
        d = self.data["initial_data"]
        probes = s["probes"]
        if probes == "standard":
            probe_arr = standard_probes(int(s["arity"]), float(d["sigma_v"]),
                                        float(d["sigma_r"]))
        else:
            import numpy as np
            probe_arr = np.asarray(probes, dtype=float)
        return SeriesConfig(
            truncation_order=int(s["order"]),
            times=[float(t) for t in s["times"]],
            quadrature=self.quadrature(),
            renormalized=bool(s["renormalized"]),
            arity=int(s["arity"]),
            probes=probe_arr,
            time_crn=bool(s["time_crn"]))

    def ensemble(self) -> EnsembleConfig:
        e = self.data["ensemble"]
        d = self.data["initial_data"]
        if abs(float(e["bandwidth"]) - float(d["bandwidth"])) > 1e-12:
            raise ConfigError("ensemble bandwidth must match initial_data bandwidth")
        return EnsembleConfig(
            intensity=float(e["intensity"]), replicates=int(e["replicates"]),
            n_cap=int(e["cap"]), seed=int(e["seed"]),
            bandwidth=float(e["bandwidth"]))
