"""TOML run configuration with documented defaults and dotted overrides.

Layout (every key optional except ``system``)::

    system = "linear2d-case1"
    criterion = "mu_c"            # or a list of strategy names
    n_steps = 20
    n_repeats = 10
    seed = 0

    [model]      alpha, noise, noise_prior_scale, noise_dof, empirical_bayes,
                 prior_variance, q_form
    [budgets]    n_mc, kde_points, moments_n_mc, truth_n_mc, pdf_n_mc, variance_n_mc
    [optimizer]  grid_count, n_starts
    [metric]     error_metric, pdf_region
    [system_options]  variance_reading, normalized_init

Unknown keys are errors.
"""

import copy
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .campaign import CampaignConfig
from .errors import ArgumentError

DEFAULTS = {
    "system": None,
    "criterion": "mu_c",
    "n_steps": 20,
    "n_repeats": 10,
    "seed": 0,
    "model": {
        "alpha": 0.1,
        "noise": "auto",
        "noise_prior_scale": 1.0,
        "noise_dof": 1.0,
        "empirical_bayes": True,
        "prior_variance": 1.0,
        "q_form": "exact",
    },
    "budgets": {
        "n_mc": 10_000,
        "kde_points": 1024,
        "moments_n_mc": 100_000,
        "truth_n_mc": 100_000,
        "pdf_n_mc": 100_000,
        "variance_n_mc": 10_000,
    },
    "optimizer": {
        "grid_count": 1000,
        "n_starts": 8,
    },
    "metric": {
        "error_metric": "auto",
        "pdf_region": None,
    },
    "system_options": {
        "variance_reading": "squared",
        "normalized_init": False,
    },
}


def _merge(base, update, prefix=""):
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ArgumentError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ArgumentError(f"config key {path!r} must be a table")
            _merge(base[key], value, path + ".")
        else:
            base[key] = value
    return base


def parse_value(text):
    """A TOML scalar/array, or the raw string when it does not parse."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(cfg, item):
    """Apply one ``dotted.key=value`` override in place; returns (key, value)."""
    if "=" not in item:
        raise ArgumentError(f"override {item!r} is not of the form key=value")
    key, text = item.split("=", 1)
    key = key.strip()
    value = parse_value(text.strip())
    node = {}
    cursor = node
    parts = key.split(".")
    for part in parts[:-1]:
        cursor[part] = {}
        cursor = cursor[part]
    cursor[parts[-1]] = value
    _merge(cfg, node)
    return key, value


def load(path=None, text=None, overrides=(), seed=None):
    """Merged config dict and the override provenance list."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, "rb") as fh:
            try:
                user = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ArgumentError(f"cannot parse {path}: {exc}") from exc
        _merge(cfg, user)
    elif text is not None:
        _merge(cfg, tomllib.loads(text))
    provenance = []
    for item in overrides:
        key, value = apply_override(cfg, item)
        provenance.append({"key": key, "value": value, "source": "--override"})
    if seed is not None:
        cfg["seed"] = int(seed)
        provenance.append({"key": "seed", "value": int(seed), "source": "--seed"})
    if not cfg["system"]:
        raise ArgumentError("config needs a 'system'")
    return cfg, provenance


def criteria_of(cfg):
    crit = cfg["criterion"]
    names = [crit] if isinstance(crit, str) else list(crit)
    if not names:
        raise ArgumentError("config lists no criterion")
    return names


def campaign_configs(cfg):
    """One CampaignConfig per listed strategy."""
    model, budgets = cfg["model"], cfg["budgets"]
    opt, metric, sysopt = cfg["optimizer"], cfg["metric"], cfg["system_options"]
    region = metric["pdf_region"]
    out = []
    for name in criteria_of(cfg):
        out.append(CampaignConfig(
            system=cfg["system"], strategy=name, n_steps=int(cfg["n_steps"]),
            n_repeats=int(cfg["n_repeats"]), base_seed=int(cfg["seed"]),
            alpha=float(model["alpha"]), noise=model["noise"],
            noise_prior_scale=float(model["noise_prior_scale"]),
            noise_dof=float(model["noise_dof"]),
            empirical_bayes=bool(model["empirical_bayes"]),
            prior_variance=float(model["prior_variance"]), q_form=model["q_form"],
            error_metric=metric["error_metric"],
            pdf_region=tuple(region) if region is not None else None,
            n_mc=int(budgets["n_mc"]), kde_points=int(budgets["kde_points"]),
            moments_n_mc=int(budgets["moments_n_mc"]),
            truth_n_mc=int(budgets["truth_n_mc"]), pdf_n_mc=int(budgets["pdf_n_mc"]),
            variance_n_mc=int(budgets["variance_n_mc"]),
            grid_count=int(opt["grid_count"]), n_starts=int(opt["n_starts"]),
            variance_reading=sysopt["variance_reading"],
            normalized_init=bool(sysopt["normalized_init"]),
        ))
    return out
