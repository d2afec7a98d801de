"""INI configuration parsing with a strict, typed schema.

Every section and key must be known; unknown names are hard errors rather
than silently ignored, so a typo cannot fall back to a default.  Values are
scalars or comma-separated lists.
"""

from __future__ import annotations

import configparser

import numpy as np

from .model import DisorderSpec


class ConfigError(ValueError):
    pass


def _parse_float_list(text: str):
    return [float(v) for v in text.split(",") if v.strip() != ""]


def _parse_int_list(text: str):
    return [int(v) for v in text.split(",") if v.strip() != ""]


# section -> key -> (parser, default); REQUIRED marks keys without defaults
REQUIRED = object()

SCHEMA = {
    "model": {
        "sites": (int, REQUIRED),
        "geometry": (str, "chain"),
        "hopping": (float, 1.0),
        "flux": (float, 0.0),
        "interaction": (_parse_float_list, [0.0]),
        "onsite": (_parse_float_list, [0.0]),
        "hbar": (float, 1.0),
    },
    "disorder": {
        "width": (float, 0.0),
        "realizations": (int, 1),
    },
    "run": {
        "n_initial": (_parse_int_list, REQUIRED),
        "times": (_parse_float_list, REQUIRED),
        "seed": (int, 0),
        "threads": (int, 1),
    },
    "classical": {
        "samples": (int, 10_000),
    },
    "trajectory": {
        "n_final": (_parse_int_list, None),
        "multistart": (int, 64),
        "residual_tol": (float, 1e-9),
    },
    "cbs": {
        "mc_samples": (int, 100),
        "bootstrap_resamples": (int, 200),
        "transfer_top_k": (int, 10),
    },
}


def parse_config(path: str) -> dict:
    """Read an INI file into {section: {key: typed value}} per SCHEMA."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")

    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    out = {}
    for section, keys in SCHEMA.items():
        out[section] = {}
        for key, (parse, default) in keys.items():
            if cp.has_option(section, key):
                raw = cp.get(section, key)
                try:
                    out[section][key] = parse(raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"bad value for {key!r} in [{section}]: {raw!r}"
                    ) from exc
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {key!r} in [{section}]")
            else:
                out[section][key] = default
    return out


def model_config(cfg: dict) -> dict:
    """Translate the [model] section into a build_model description."""
    m = cfg["model"]
    L = m["sites"]
    interaction = m["interaction"]
    onsite = m["onsite"]
    if len(interaction) not in (1, L):
        raise ConfigError("interaction must be a scalar or one value per site")
    if len(onsite) not in (1, L):
        raise ConfigError("onsite must be a scalar or one value per site")
    return {
        "L": L,
        "geometry": m["geometry"],
        "J": m["hopping"],
        "flux": m["flux"],
        "U": interaction[0] if len(interaction) == 1 else np.array(interaction),
        "eps": onsite[0] if len(onsite) == 1 else np.array(onsite),
        "hbar": m["hbar"],
    }


def disorder_spec(cfg: dict) -> DisorderSpec:
    return DisorderSpec(
        width=cfg["disorder"]["width"],
        master_seed=cfg["run"]["seed"],
        realization_count=cfg["disorder"]["realizations"],
    )


def resolved_lines(cfg: dict) -> str:
    """Render a resolved config back to INI text (round-trips via parse)."""
    lines = []
    for section, keys in cfg.items():
        lines.append(f"[{section}]")
        for key, value in keys.items():
            if value is None:
                continue
            if isinstance(value, (list, tuple, np.ndarray)):
                value = ",".join(repr(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
