"""Experiment configuration: YAML parsing, validation and object factories.

A configuration is a YAML document with sections model, guide, schedule,
data, run, pmmh and output. Parsing validates every key against a
whitelist and its value against the documented range, fills defaults
explicitly, and echoes back a canonical document, so a parsed-then-echoed
configuration always reparses to the same thing. Command-line flags
override individual keys after parsing.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .guides import (
    ConstantGuide,
    ExactTransitionGuide,
    GpGuide,
    GpGuideParams,
    PdGuide,
    PdGuideParams,
)
from .models import (
    EpsilonBallObservation,
    OuHyper,
    OuModel,
    OuParams,
    PdParams,
    PeriodicDriftModel,
    RkControl,
    SirModel,
    SirParams,
)
from .pmmh import (
    GammaPrior,
    IdentityTransform,
    LogitTransform,
    LogTransform,
    NormalPrior,
    UniformPrior,
)

WORKERS_ENV = "BRIDGEPF_WORKERS"


class ConfigError(ValueError):
    """A configuration key is unknown, missing or out of range."""


def _require(cond, key, message):
    if not cond:
        raise ConfigError(f"{key}: {message}")


def _check_keys(section: dict, allowed, where):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {where}.{key}")


_MODEL_KEYS = {
    "ou": {"kind", "theta1", "theta2", "theta3"},
    "pd": {"kind", "theta"},
    "sir": {"kind", "beta_level", "beta_rate", "beta_vol", "nu_level", "nu_rate",
            "nu_vol", "population", "eps", "abs_tol", "rel_tol"},
}

_GUIDE_KEYS = {
    "exact": {"kind"},
    "constant": {"kind"},
    "gp": {"kind", "fit", "alpha", "beta", "inflation", "power", "obs_var",
           "shift", "scale"},
    "pd": {"kind", "eps", "sigma2", "power"},
}

_MODEL_DEFAULTS = {
    "ou": {"theta1": 0.0187, "theta2": 0.2610, "theta3": 0.0224},
    "pd": {"theta": float(np.pi)},
    "sir": {"beta_level": -6.3, "beta_rate": 1.0, "beta_vol": 0.25,
            "nu_level": -0.8, "nu_rate": 1.0, "nu_vol": 0.25,
            "population": 763.0, "eps": 0.02, "abs_tol": 1e-2, "rel_tol": 1e-5},
}


@dataclass
class ExperimentConfig:
    model: dict
    guide: dict
    schedule: dict
    data: dict
    run: dict
    output: dict
    pmmh: dict | None = None

    def echo(self) -> str:
        """Canonical YAML of the validated configuration with defaults filled."""
        doc = {"model": self.model, "guide": self.guide, "schedule": self.schedule,
               "data": self.data, "run": self.run, "output": self.output}
        if self.pmmh is not None:
            doc["pmmh"] = self.pmmh
        return yaml.safe_dump(doc, sort_keys=True, default_flow_style=False)


def parse_config(text: str) -> ExperimentConfig:
    raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping of sections")
    _check_keys(raw, {"model", "guide", "schedule", "data", "run", "output", "pmmh"},
                "top level")

    # --- model
    model = dict(raw.get("model") or {})
    kind = model.get("kind", "ou")
    _require(kind in _MODEL_KEYS, "model.kind", f"unknown model kind {kind!r}")
    _check_keys(model, _MODEL_KEYS[kind], "model")
    merged = dict(_MODEL_DEFAULTS[kind])
    merged.update({k: v for k, v in model.items() if k != "kind"})
    model = {"kind": kind, **{k: float(v) for k, v in merged.items()}}
    if kind == "ou":
        _require(model["theta2"] > 0, "model.theta2", "must be positive")
        _require(model["theta3"] > 0, "model.theta3", "must be positive")
    if kind == "sir":
        _require(model["eps"] > 0, "model.eps", "must be positive")
        for k in ("beta_rate", "beta_vol", "nu_rate", "nu_vol"):
            _require(model[k] > 0, f"model.{k}", "must be positive")

    # --- guide
    guide = dict(raw.get("guide") or {})
    gkind = guide.get("kind", "exact")
    _require(gkind in _GUIDE_KEYS, "guide.kind", f"unknown guide kind {gkind!r}")
    _check_keys(guide, _GUIDE_KEYS[gkind], "guide")
    out_guide = {"kind": gkind}
    if gkind == "gp":
        out_guide["fit"] = bool(guide.get("fit", "alpha" not in guide))
        for k, default in (("alpha", 1.0), ("beta", 1.0), ("inflation", 1.0),
                           ("power", 1.0), ("obs_var", 0.0), ("shift", 0.0),
                           ("scale", 1.0)):
            out_guide[k] = float(guide.get(k, default))
        _require(out_guide["inflation"] >= 1.0, "guide.inflation", "must be >= 1")
        _require(0 < out_guide["power"] <= 1.0, "guide.power", "must lie in (0, 1]")
    elif gkind == "pd":
        out_guide["eps"] = float(guide.get("eps", 0.0259))
        out_guide["sigma2"] = float(guide.get("sigma2", 0.3238))
        out_guide["power"] = float(guide.get("power", 0.25))
        _require(out_guide["eps"] > 0, "guide.eps", "must be positive")
        _require(out_guide["sigma2"] > 0, "guide.sigma2", "must be positive")
    guide = out_guide

    # --- schedule
    schedule = dict(raw.get("schedule") or {})
    _check_keys(schedule, {"bridge_step", "sim_substep"}, "schedule")
    bridge_step = float(schedule.get("bridge_step", 0.1))
    _require(bridge_step > 0, "schedule.bridge_step", "must be positive")
    sim_substep = schedule.get("sim_substep")
    if sim_substep is not None:
        sim_substep = float(sim_substep)
        _require(sim_substep > 0, "schedule.sim_substep", "must be positive")
        _require(sim_substep <= bridge_step + 1e-12, "schedule.sim_substep",
                 "must not exceed bridge_step")
    schedule = {"bridge_step": bridge_step, "sim_substep": sim_substep}

    # --- data
    data = dict(raw.get("data") or {})
    _check_keys(data, {"files", "simulate"}, "data")
    if "files" in data and data["files"]:
        _require("simulate" not in data or not data["simulate"], "data",
                 "give either files or simulate, not both")
        data = {"files": [str(p) for p in data["files"]], "simulate": None}
    else:
        sim = dict(data.get("simulate") or {})
        _check_keys(sim, {"datasets", "observations", "spacing", "x0"},
                    "data.simulate")
        sim = {
            "datasets": int(sim.get("datasets", 4)),
            "observations": int(sim.get("observations", 100)),
            "spacing": float(sim.get("spacing", 1.0)),
            "x0": float(sim.get("x0", 0.0)),
        }
        _require(sim["datasets"] >= 1, "data.simulate.datasets", "must be >= 1")
        _require(sim["observations"] >= 1, "data.simulate.observations",
                 "must be >= 1")
        _require(sim["spacing"] > 0, "data.simulate.spacing", "must be positive")
        data = {"files": None, "simulate": sim}

    # --- run
    run = dict(raw.get("run") or {})
    _check_keys(run, {"filters", "particles", "replicates", "rel_threshold",
                      "seed", "timing", "truth", "resampler"}, "run")
    filters = list(run.get("filters", ["bridge", "bootstrap"]))
    for f in filters:
        _require(f in ("bridge", "bootstrap"), "run.filters",
                 f"unknown filter kind {f!r}")
    particles = [int(n) for n in run.get("particles", [32, 64, 128, 256])]
    for n in particles:
        _require(n >= 2, "run.particles", "every particle count must be >= 2")
    replicates = int(run.get("replicates", 256))
    _require(replicates >= 1, "run.replicates", "must be >= 1")
    rel_threshold = float(run.get("rel_threshold", 0.5))
    _require(0.0 <= rel_threshold <= 1.0, "run.rel_threshold",
             "must lie in [0, 1]")
    timing = str(run.get("timing", "wall"))
    _require(timing in ("wall", "work"), "run.timing", "must be wall or work")
    truth = str(run.get("truth", "closed-form" if model["kind"] == "ou" else "none"))
    _require(truth in ("closed-form", "none"), "run.truth",
             "must be closed-form or none")
    if truth == "closed-form":
        _require(model["kind"] == "ou", "run.truth",
                 "closed-form truth is only available for the ou model")
    resampler = str(run.get("resampler", "systematic"))
    _require(resampler in ("systematic", "multinomial"), "run.resampler",
             "must be systematic or multinomial")
    run = {"filters": filters, "particles": particles, "replicates": replicates,
           "rel_threshold": rel_threshold, "seed": int(run.get("seed", 0)),
           "timing": timing, "truth": truth, "resampler": resampler}

    # --- output
    output = dict(raw.get("output") or {})
    _check_keys(output, {"directory", "workers"}, "output")
    workers = output.get("workers")
    output = {"directory": str(output.get("directory", "results")),
              "workers": None if workers is None else int(workers)}

    # --- pmmh (optional)
    pmmh = raw.get("pmmh")
    if pmmh is not None:
        pmmh = dict(pmmh)
        _check_keys(pmmh, {"steps", "burn_in", "particles", "init", "priors",
                           "proposal_sd", "transforms", "likelihood"}, "pmmh")
        steps = int(pmmh.get("steps", 1000))
        _require(steps >= 1, "pmmh.steps", "must be >= 1")
        priors = list(pmmh.get("priors") or [])
        _require(priors, "pmmh.priors", "at least one prior is required")
        for p in priors:
            _require(isinstance(p, dict) and "dist" in p, "pmmh.priors",
                     "each prior needs a dist field")
            _require(p["dist"] in ("uniform", "gamma", "normal"), "pmmh.priors",
                     f"unknown prior dist {p.get('dist')!r}")
        init = [float(v) for v in (pmmh.get("init") or [])]
        _require(len(init) == len(priors), "pmmh.init",
                 "must match the number of priors")
        sd = [float(v) for v in (pmmh.get("proposal_sd") or [0.1] * len(priors))]
        _require(len(sd) == len(priors), "pmmh.proposal_sd",
                 "must match the number of priors")
        transforms = list(pmmh.get("transforms") or ["identity"] * len(priors))
        for t in transforms:
            _require(t in ("identity", "log", "logit"), "pmmh.transforms",
                     f"unknown transform {t!r}")
        likelihood = str(pmmh.get("likelihood", "bridge"))
        _require(likelihood in ("bridge", "bootstrap", "exact"), "pmmh.likelihood",
                 "must be bridge, bootstrap or exact")
        pmmh = {"steps": steps, "burn_in": int(pmmh.get("burn_in", 0)),
                "particles": int(pmmh.get("particles", 256)), "init": init,
                "priors": priors, "proposal_sd": sd, "transforms": transforms,
                "likelihood": likelihood}

    return ExperimentConfig(model=model, guide=guide, schedule=schedule,
                            data=data, run=run, output=output, pmmh=pmmh)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# Factories


def build_model(config: ExperimentConfig, theta=None, initial_infected=None):
    """Instantiate the configured model, optionally overriding parameters.

    theta replaces the natural parameter vector of the model kind:
    (theta1, theta2, theta3) for ou, (theta,) for pd and the six
    rate hyperparameters for sir.
    """
    m = config.model
    kind = m["kind"]
    if kind == "ou":
        t = theta if theta is not None else (m["theta1"], m["theta2"], m["theta3"])
        return OuModel(OuParams(*[float(v) for v in t]))
    if kind == "pd":
        t = theta if theta is not None else (m["theta"],)
        return PeriodicDriftModel(PdParams(theta=float(t[0])))
    t = theta if theta is not None else (m["beta_level"], m["beta_rate"],
                                         m["beta_vol"], m["nu_level"],
                                         m["nu_rate"], m["nu_vol"])
    t = [float(v) for v in t]
    ctrl = RkControl(abs_tol=m["abs_tol"], rel_tol=m["rel_tol"],
                     h_init=min(0.01, config.schedule["bridge_step"]),
                     h_min=1e-10, h_max=1.0)
    return SirModel(
        SirParams(beta=OuHyper(t[0], t[1], t[2]), nu=OuHyper(t[3], t[4], t[5]),
                  population=m["population"]),
        control=ctrl, initial_infected=initial_infected)


def build_observation_model(config: ExperimentConfig):
    if config.model["kind"] == "sir":
        return EpsilonBallObservation(eps=config.model["eps"],
                                      component=SirModel.observed_component)
    return None


def guide_params_from_config(config: ExperimentConfig) -> GpGuideParams:
    g = config.guide
    return GpGuideParams(alpha=g["alpha"], beta=g["beta"], inflation=g["inflation"],
                         power=g["power"], obs_var=g["obs_var"], shift=g["shift"],
                         scale=g["scale"])


def build_guide(config: ExperimentConfig, model, series=None):
    """Instantiate the configured guide.

    A gp guide with fit=true is fitted to the provided observed series
    (times, values); otherwise its parameters come from the config.
    """
    kind = config.guide["kind"]
    if kind == "exact":
        return ExactTransitionGuide(model)
    if kind == "constant":
        return ConstantGuide()
    if kind == "pd":
        g = config.guide
        return PdGuide(PdGuideParams(eps=g["eps"], sigma2=g["sigma2"],
                                     power=g["power"]))
    g = config.guide
    if g["fit"]:
        if series is None:
            raise ConfigError("guide.fit: an observed series is required to fit")
        from .guides import fit_gp_guide

        times, values = series
        fit = fit_gp_guide(times, values, inflation=g["inflation"],
                           power=g["power"], obs_var=g["obs_var"])
        params = fit.params
    else:
        params = guide_params_from_config(config)
    component = SirModel.observed_component if config.model["kind"] == "sir" else 0
    mode = "observation" if config.model["kind"] == "sir" else "state"
    return GpGuide([(component, params)], mode=mode)


_PRIOR_BUILDERS = {
    "uniform": lambda p: UniformPrior(float(p["low"]), float(p["high"])),
    "gamma": lambda p: GammaPrior(float(p["shape"]), float(p.get("scale", 1.0))),
    "normal": lambda p: NormalPrior(float(p["mean"]), float(p["var"])),
}

_TRANSFORM_BUILDERS = {
    "identity": lambda p: IdentityTransform(),
    "log": lambda p: LogTransform(),
    "logit": lambda p: LogitTransform(float(p["low"]), float(p["high"])),
}


def build_priors(config: ExperimentConfig):
    return [_PRIOR_BUILDERS[p["dist"]](p) for p in config.pmmh["priors"]]


def build_transforms(config: ExperimentConfig):
    names = config.pmmh["transforms"]
    if all(n == "identity" for n in names):
        return None
    return [_TRANSFORM_BUILDERS[n](p)
            for n, p in zip(names, config.pmmh["priors"])]


def default_workers(config: ExperimentConfig) -> int:
    if config.output["workers"] is not None:
        return config.output["workers"]
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)
