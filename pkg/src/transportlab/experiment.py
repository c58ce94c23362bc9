"""Config-driven experiments: field -> solver -> weak residuals -> diagnostics -> artifacts."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from .diagnostics import (
    DiagnosticsReport, apriori_check, convergence_study, modulus_check, norm_history, renorm_defect,
    standard_renormalizations, excess,
)
from .fields import FieldError, field_from_spec, mollify
from .flow import StepControl, measure_preservation_check
from .grid import BoxDomain, GridFunction
from .initial import initial_from_spec
from .reporting import dumps
from .solver import (
    SolverError, check_expansion, grid_support_box, read_grid_csv, solve_rough, solve_smooth,
    uniform_times, write_grid_csv,
)
from .weakform import TestBank, residual_report

SCHEMA_VERSION = 1
CHECKS = ("weak_residual", "norm_history", "apriori", "renorm", "convergence", "modulus", "measure")

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "name", "field", "u0", "domain", "horizon", "n_intervals"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "field": {
            "type": "object", "additionalProperties": False, "required": ["name"],
            "properties": {"name": {"type": "string"}, "params": {"type": "object"}, "sup_norm": _num},
        },
        "u0": {
            "type": "object", "required": ["kind"],
            "properties": {"kind": {"enum": ["bump", "plateau", "indicator", "grid"]}},
        },
        "domain": {
            "type": "object", "additionalProperties": False, "required": ["lower", "upper", "grid_shape"],
            "properties": {"lower": _vec, "upper": _vec,
                           "grid_shape": {"type": "array", "items": {"type": "integer", "minimum": 2}}},
        },
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "n_intervals": {"type": "integer", "minimum": 1},
        "save_times": {"type": "array", "items": _num},
        "nus": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "kernel": {"type": "object", "additionalProperties": False,
                   "properties": {"m": {"type": "integer", "minimum": 1}}},
        "step_control": {"type": "object", "additionalProperties": False,
                         "properties": {"base_step": _num, "tolerance": _num,
                                        "max_halvings": {"type": "integer", "minimum": 0}}},
        "bank": {"type": "object", "additionalProperties": False,
                 "properties": {"seed": {"type": "integer"}, "size": {"type": "integer", "minimum": 1}}},
        "checks": {"type": "array", "items": {"enum": list(CHECKS)}},
        "oracle": {"type": "boolean"},
        "apriori": {"type": "object", "additionalProperties": False,
                    "properties": {"radii": _vec, "times": {"type": "array", "items": _num}}},
        "renorm": {"type": "object", "additionalProperties": False,
                   "properties": {"radii": {"type": "array", "items": _num}, "factor": _num}},
        "modulus": {"type": "object", "additionalProperties": False,
                    "properties": {"hs": _vec, "times": {"type": "array", "items": _num}, "p": _num}},
        "measure": {"type": "object", "additionalProperties": False,
                    "properties": {"t": _num, "n_samples": {"type": "integer", "minimum": 1},
                                   "max_defect": _num}},
        "tolerances": {"type": "object", "additionalProperties": False,
                       "properties": {"norm_rtol": _num, "weak_residual_max": _num}},
        "output_dir": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class Experiment:
    config: dict
    base_dir: Path

    @classmethod
    def load(cls, path, seed: Optional[int] = None, out: Optional[str] = None) -> "Experiment":
        path = Path(path)
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if seed is not None:
            cfg.setdefault("bank", {})["seed"] = int(seed)
        if out is not None:
            cfg["output_dir"] = out
        exp = cls(cfg, path.parent)
        exp.validate()
        return exp

    # ---------------------------------------------------------------- setup
    def validate(self) -> None:
        try:
            jsonschema.validate(self.config, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
        cfg = self.config
        d = cfg["domain"]
        if not len(d["lower"]) == len(d["upper"]) == len(d["grid_shape"]):
            raise ConfigError("domain lower/upper/grid_shape lengths differ")
        try:
            self.field = field_from_spec(cfg["field"])
            self.domain = BoxDomain(d["lower"], d["upper"], d["grid_shape"])
            self.u0 = self._initial()
        except (FieldError, ValueError, TypeError, SolverError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.field.dim != self.domain.dim:
            raise ConfigError("field and domain dimensions differ")
        T = float(cfg["horizon"])
        for t in cfg.get("save_times", []) + cfg.get("apriori", {}).get("times", []):
            if not 0 <= t <= T:
                raise ConfigError(f"output time {t} outside [0, {T}]")
        lo, hi = self.u0.support_box() if hasattr(self.u0, "support_box") else grid_support_box(self.u0)
        try:
            check_expansion(self.domain, lo, hi, self.field.sup_norm, T)
        except SolverError as exc:
            raise ConfigError(f"domain too small for finite speed of propagation: {exc}") from exc
        nus = cfg.get("nus", [])
        if any(b <= a for a, b in zip(nus, nus[1:])):
            raise ConfigError("nus must be strictly increasing")
        if not self.field.is_smooth and not nus:
            raise ConfigError("a rough field needs a list of nus")
        if "modulus" in self.checks and not self.field.is_smooth:
            raise ConfigError("the modulus check needs a smooth field")
        if "convergence" in self.checks and len(nus) < 3:
            raise ConfigError("the convergence check needs at least three nus")

    def _initial(self):
        spec = dict(self.config["u0"])
        if spec["kind"] == "grid":
            path = Path(spec["path"])
            if not path.is_absolute():
                path = self.base_dir / path
            g = read_grid_csv(path)
            d = self.config["domain"]
            if g.domain != BoxDomain(d["lower"], d["upper"], d["grid_shape"]):
                raise ConfigError("grid initial datum does not match the configured domain")
            return g
        return initial_from_spec(spec)

    @property
    def checks(self) -> list:
        return list(self.config.get("checks", []))

    @property
    def step_control(self) -> StepControl:
        sc = self.config.get("step_control", {})
        T, K = float(self.config["horizon"]), int(self.config["n_intervals"])
        return StepControl(sc.get("base_step", T / K), sc.get("tolerance", 1e-10), sc.get("max_halvings", 30))

    @property
    def times(self) -> list:
        return uniform_times(float(self.config["horizon"]), int(self.config["n_intervals"]))

    def bank(self) -> TestBank:
        b = self.config.get("bank", {})
        T, K = float(self.config["horizon"]), int(self.config["n_intervals"])
        return TestBank.generate(self.domain, T, T / K, b.get("size", 64), b.get("seed", 0))

    def portable_config(self) -> dict:
        """The config without its output location, which must not affect artifacts."""
        cfg = copy.deepcopy(self.config)
        cfg.pop("output_dir", None)
        return cfg

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.portable_config(), sort_keys=True).encode()).hexdigest()

    def u0_grid(self) -> GridFunction:
        if isinstance(self.u0, GridFunction):
            return self.u0
        return GridFunction.from_callable(self.domain, self.u0)

    # ---------------------------------------------------------------- run
    def solve(self, jobs: int = 1):
        """Returns (slices of the designated solution, SolutionSequence or None)."""
        nus = self.config.get("nus", [])
        if nus:
            seq = solve_rough(self.field, self.u0, self.times, nus, step_control=self.step_control,
                              domain=self.domain, m=self.config.get("kernel", {}).get("m", 16), jobs=jobs)
            return seq.finest, seq
        return solve_smooth(self.field, self.u0, self.times, self.step_control, self.domain), None

    def oracle(self):
        if not self.config.get("oracle", False) or self.field.analytic_flow is None:
            return None
        flow, u0 = self.field.analytic_flow, self.u0
        if isinstance(u0, GridFunction):
            from .solver import interpolate
            return lambda t, x: interpolate(u0, flow(t, x))
        return lambda t, x: u0(flow(t, x))

    def convergence(self, seq) -> tuple[DiagnosticsReport, object]:
        table = convergence_study(seq, self.oracle())
        report = DiagnosticsReport(metadata={"check": "convergence"})
        d = table.oracle[-1] if table.oracle is not None else table.consecutive[-1]
        which = "oracle" if table.oracle is not None else "consecutive"
        report.add("convergence_decreasing", float(np.max(np.diff(d))), 0.0, 0.0,
                   {"nus": seq.nus, "which": which}, strict=True, which=which, distances=d.tolist())
        return report, table

    def run(self, jobs: int = 1, only_convergence: bool = False) -> tuple[DiagnosticsReport, dict]:
        cfg = self.config
        sol, seq = self.solve(jobs)
        u0g = self.u0_grid()
        report = DiagnosticsReport(metadata={
            "name": cfg["name"], "field": self.field.spec(), "domain": self.domain.to_dict(),
            "nus": cfg.get("nus", []), "seed": cfg.get("bank", {}).get("seed", 0),
            "step_control": self.step_control.to_dict(), "config_digest": self.digest(),
        })
        extras: dict = {"solutions": sol, "sequence": seq}
        checks = ["convergence"] if only_convergence else self.checks
        if "convergence" in checks and seq is not None:
            rep, table = self.convergence(seq)
            report.extend(rep)
            extras["convergence"] = table
        if only_convergence:
            return report, extras
        bank = self.bank() if {"weak_residual", "renorm"} & set(checks) else None
        plain = None
        if bank is not None:
            plain = residual_report(sol, u0g, self.field, bank)
            extras["weak_residuals"] = plain
            limit = cfg.get("tolerances", {}).get("weak_residual_max")
            if "weak_residual" in checks and limit is not None:
                report.add("weak_residual", plain.max_abs, float(limit), 0.0, {"seed": bank.seed})
        if "norm_history" in checks:
            # asserted only when a tolerance is configured; otherwise the
            # three-way classification is recorded as information
            rtol = cfg.get("tolerances", {}).get("norm_rtol")
            history = {}
            for p in (1.0, 2.0, np.inf):
                nh = norm_history(sol, p, rtol=1e-6 if rtol is None else rtol)
                history[str(p)] = {"classification": nh.classification, "max_deviation": nh.max_deviation,
                                   "tol": nh.tol, "history": nh.history}
                if rtol is not None:
                    report.add("norm_history", nh.max_deviation, nh.tol, 0.0, {"p": str(p)},
                               p=str(p), classification=nh.classification)
            report.metadata["norm_history"] = history
        if "apriori" in checks:
            a = cfg.get("apriori", {})
            report.extend(apriori_check(sol, u0g, self.field.sup_norm, a.get("radii", [0.5, 1.0]), a.get("times")))
        if "renorm" in checks:
            r = cfg.get("renorm", {})
            factor = float(r.get("factor", 4.0))
            defects = {}
            for name, g in standard_renormalizations(r.get("radii", [0.5])).items():
                rd = renorm_defect(sol, u0g, self.field, g, bank, name)
                defects[name] = rd.defect
                report.add("renorm_defect", rd.defect, factor * plain.max_abs, 1e-15, {"g": name}, g=name)
            # the true sup of u0; a node maximum can sit below the peak
            top = float(getattr(self.u0, "sup_abs", np.max(np.abs(u0g.values))))
            rd = renorm_defect(sol, u0g, self.field, excess(top), bank, "excess_sup")
            defects["excess_sup"] = rd.defect
            report.add("renorm_defect_max_principle", rd.defect, 0.0, 0.0, {"g": "excess_sup"})
            extras["renorm"] = defects
        if "modulus" in checks:
            mcfg = cfg.get("modulus", {})
            report.extend(modulus_check(self.u0, self.field, mcfg.get("hs", [0.01, 0.05, 0.1]), self.domain,
                                        mcfg.get("p", 2.0), mcfg.get("times", [0.0]), self.step_control))
        if "measure" in checks:
            mc = cfg.get("measure", {})
            fld = self.field if seq is None else mollify(self.field, None, seq.nus[-1], self.domain,
                                                         cfg.get("kernel", {}).get("m", 16))
            mr = measure_preservation_check(fld, mc.get("t", float(cfg["horizon"])), self.domain,
                                            mc.get("n_samples", 200), self.step_control)
            report.add("measure_preservation", mr.defect, mc.get("max_defect", 1e-6), 0.0,
                       {"t": mc.get("t", float(cfg["horizon"]))}, volume_ratio=mr.volume_ratio)
        return report, extras

    # ---------------------------------------------------------------- output
    def write(self, report: DiagnosticsReport, extras: dict, out_dir: Optional[str] = None) -> Path:
        out = Path(out_dir or self.config.get("output_dir") or f"out/{self.config['name']}")
        (out / "solutions").mkdir(parents=True, exist_ok=True)
        written = []

        def put(rel, text):
            (out / rel).write_text(text)
            written.append(rel)

        put("report.json", report.to_json())
        put("summary.csv", report.to_csv())
        seq = extras.get("sequence")
        save = self.config.get("save_times", [float(self.config["horizon"])])
        members = {nu: seq.solutions[nu] for nu in seq.nus} if seq is not None else {0: extras["solutions"]}
        for nu, slices in members.items():
            for t in save:
                k = int(np.argmin([abs(g.time - t) for g in slices]))
                rel = f"solutions/u_nu{nu}_k{k}.csv"
                side = {"field": self.field.spec(), "nu": nu, "t": slices[k].time,
                        "step_control": self.step_control.to_dict(), "domain": self.domain.to_dict()}
                write_grid_csv(out / rel, slices[k], side)
                written += [rel, rel[:-4] + ".json"]
        if "convergence" in extras:
            put("convergence.csv", extras["convergence"].to_csv())
        if "weak_residuals" in extras:
            put("weak_residuals.json", dumps(extras["weak_residuals"].to_dict()))
        if "renorm" in extras:
            put("renorm_defects.json", dumps(extras["renorm"]))
        files = {}
        for rel in sorted(written):
            files[rel] = hashlib.sha256((out / rel).read_bytes()).hexdigest()
        manifest = {"tool": "transportlab", "version": __version__, "schema_version": SCHEMA_VERSION,
                    "config_digest": self.digest(), "config": self.portable_config(), "artifacts": files}
        (out / "manifest.json").write_text(dumps(manifest))
        return out


def bundled_config(name: str) -> Path:
    path = Path(__file__).parent / "configs" / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"no bundled config named {name!r}")
    return path


def resolve_config(arg: str) -> Path:
    if os.path.exists(arg):
        return Path(arg)
    return bundled_config(arg)
