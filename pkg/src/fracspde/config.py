"""Flat ``key = value`` run configuration files.

Recognised keys::

    domain = interval:pi        # or box:1x2
    alpha = 2
    beta = 0.75
    lambda = 0.5
    sigma = linear:1
    noise.kind = white          # or riesz, ornstein_uhlenbeck, ...
    noise.gamma = 0.5
    noise.delta = 1
    u0 = sine
    T = 20
    steps = 256
    modes = 16
    grid = 32
    paths = 2000
    seed = 20240601

``#`` and ``;`` start comments.  ``FRACSPDE_SEED`` in the environment
overrides ``seed``; keyword overrides passed to
:func:`parse_config` win over both.
"""

from __future__ import annotations

import configparser
from pathlib import Path

from .noise import CovKernel
from .solver import SigmaSpec, SimulationConfig
from .spectra import parse_domain
from .streams import resolve_seed

__all__ = ["KEYS", "parse_config", "load_config", "dump_config"]

KEYS = (
    "domain", "alpha", "beta", "lambda", "sigma", "noise.kind", "noise.gamma", "noise.delta",
    "noise.c", "u0", "T", "steps", "modes", "grid", "paths", "seed",
)

_SECTION = "run"


def _parse_sigma(text: str) -> SigmaSpec:
    kind, _, arg = text.strip().partition(":")
    if kind.strip().lower() != "linear":
        raise ValueError("config files support only sigma = linear:c")
    return SigmaSpec.linear(float(arg) if arg else 1.0)


def _parse_noise(items: dict) -> CovKernel | None:
    kind = items.get("noise.kind", "white").strip().lower()
    if kind == "white":
        return None
    kw = {k: float(items[f"noise.{k}"]) for k in ("gamma", "delta", "c") if f"noise.{k}" in items}
    return CovKernel(kind, **kw)


def parse_config(text: str, **overrides) -> SimulationConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str  # keep "T" distinct
    cp.read_string(f"[{_SECTION}]\n" + text)
    items = dict(cp[_SECTION])
    unknown = sorted(set(items) - set(KEYS))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    defaults = SimulationConfig.__dataclass_fields__
    alpha = float(items.get("alpha", 2.0))
    kw = {}
    if "domain" in items:
        kw["domain"] = parse_domain(items["domain"], alpha)
    elif "alpha" in items:
        kw["domain"] = parse_domain("interval:pi", alpha)
    if "beta" in items:
        kw["beta"] = float(items["beta"])
    if "lambda" in items:
        kw["lam"] = float(items["lambda"])
    if "sigma" in items:
        kw["sigma"] = _parse_sigma(items["sigma"])
    kw["noise"] = _parse_noise(items)
    if "u0" in items:
        kw["u0"] = items["u0"].strip()
    if "T" in items:
        kw["T"] = float(items["T"])
    for key, name in (("steps", "J"), ("modes", "N"), ("grid", "M"), ("paths", "paths")):
        if key in items:
            kw[name] = int(items[key])
    seed = int(items["seed"], 0) if "seed" in items else defaults["seed"].default
    kw["seed"] = resolve_seed(seed)
    # explicit overrides (command line flags) beat both the file and the environment
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return SimulationConfig(**kw)


def load_config(path, **overrides) -> SimulationConfig:
    return parse_config(Path(path).read_text(), **overrides)


def dump_config(cfg: SimulationConfig) -> str:
    """Inverse of :func:`parse_config` for linear ``sigma``."""
    lines = [
        f"domain = {cfg.domain.label()}",
        f"alpha = {cfg.domain.alpha!r}",
        f"beta = {cfg.beta.value!r}",
        f"lambda = {cfg.lam!r}",
        f"sigma = {cfg.sigma.label()}",
    ]
    if cfg.noise is None:
        lines.append("noise.kind = white")
    else:
        lines.append(f"noise.kind = {cfg.noise.kind}")
        for k in ("gamma", "delta", "c"):
            v = getattr(cfg.noise, k, None)
            if v is not None:
                lines.append(f"noise.{k} = {v!r}")
    lines += [
        f"u0 = {cfg.u0}",
        f"T = {cfg.T!r}",
        f"steps = {cfg.J}",
        f"modes = {cfg.N}",
        f"grid = {cfg.M}",
        f"paths = {cfg.paths}",
        f"seed = {cfg.seed}",
    ]
    return "\n".join(lines) + "\n"
