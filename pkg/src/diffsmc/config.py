"""Sectioned key-value experiment configuration.

One file fully determines a run.  The format is deliberately small:
``[section]`` headers, ``key = value`` lines, ``#`` comments.  Values
are typed by a fixed schema (scalars and flat comma-separated lists);
unknown sections or keys are rejected so typos fail loudly instead of
silently running defaults.  ``serialize`` emits a canonical rendering
of every key, and ``parse(serialize(cfg))`` reproduces ``cfg`` exactly.

Environment variables override file values with the documented prefix,
e.g. ``DIFFSMC_TARGET__NAME=mixture``.
"""

import os

ENV_PREFIX = "DIFFSMC_"

SCHEMA = {
    "experiment": {
        "seeds": ("str", "0:10"),
        "out": ("str", "runs"),
        "threads": ("int", 1),
        "thin": ("int", 0),
    },
    "target": {
        "name": ("str", "gaussian"),
        "mu": ("float", 2.75),
        "sigma": ("float", 0.25),
        "dim": ("int", 10),
        "seed": ("int", 0),
        "dataset": ("str", ""),
        "standardize": ("bool", True),
        "prior_sigma": ("float", 1.0),
        "normalize_weights": ("bool", True),
    },
    "schedule": {
        "kind": ("str", "cosine"),
        "steps": ("int", 16),
        "offset": ("float", 0.008),
        "beta0": ("float", 0.1),
        "betaT": ("float", 12.0),
    },
    "smc": {
        "particles": ("int", 2000),
        "resampling": ("str", "systematic"),
        "integrator": ("str", "standard"),
        "ess_threshold": ("float", 0.3),
        "adaptive": ("bool", True),
    },
    "mcmc": {
        "steps": ("int", 0),
        "times": ("float_list", (0.0, 1.0)),
        "sizes": ("float_list", (0.1, 0.1)),
    },
    "potential": {
        "variant": ("str", "simple"),
        "checkpoint": ("str", ""),
    },
    "net": {
        "hidden": ("int", 64),
        "layers": ("int", 3),
        "embed_dim": ("int", 128),
    },
    "train": {
        "loss": ("str", "guidance"),
        "batch": ("int", 300),
        "updates": ("int", 500),
        "lr": ("float", 1e-3),
        "decay_rate": ("float", 0.95),
        "decay_every": ("int", 50),
        "rounds": ("int", 2),
    },
    "vi": {
        "steps": ("int", 20000),
        "lr": ("float", 1e-3),
        "mc": ("int", 8),
        "load_path": ("str", ""),
        "save_path": ("str", ""),
    },
    "eval": {
        "exact_samples": ("int", 100000),
        "coverage_radius": ("float", 0.0),
        "sinkhorn_points": ("int", 0),
        "sinkhorn_eps": ("float", 0.0),
    },
}

TARGET_NAMES = ("gaussian", "mixture", "funnel", "gmm", "logreg", "normal")


class ConfigError(ValueError):
    pass


def _parse_value(kind, raw, where):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "str":
            return raw
        if kind == "float_list":
            return tuple(float(p) for p in raw.split(",") if p.strip() != "")
        if kind == "int_list":
            return tuple(int(p) for p in raw.split(",") if p.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad {kind} value {raw!r} for {where}") from exc
    raise ConfigError(f"unknown schema type {kind}")


def _format_value(kind, value):
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("float_list", "int_list"):
        return ",".join(repr(v) if kind == "float_list" else str(v) for v in value)
    if kind == "float":
        return repr(float(value))
    return str(value)


class ExperimentConfig:
    """Typed view over the sectioned key-value data."""

    def __init__(self, data=None):
        self.data = {
            sec: {k: spec[1] for k, spec in keys.items()}
            for sec, keys in SCHEMA.items()
        }
        if data:
            for sec, keys in data.items():
                for k, v in keys.items():
                    self.set(sec, k, v)

    def get(self, section, key):
        try:
            return self.data[section][key]
        except KeyError:
            raise ConfigError(f"unknown config key [{section}] {key}")

    def set(self, section, key, value):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        self.data[section][key] = value

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.data == other.data

    def seeds(self):
        """Seed list from 'a:b' (half-open range) or comma syntax."""
        raw = self.get("experiment", "seeds")
        if ":" in raw:
            lo, hi = raw.split(":")
            return list(range(int(lo), int(hi)))
        return [int(p) for p in raw.split(",") if p.strip() != ""]


def parse(text: str, env=None) -> ExperimentConfig:
    """Parse config text, then apply environment overrides."""
    cfg = ExperimentConfig()
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}] at line {lineno}")
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value' at line {lineno}: {line!r}")
        if section is None:
            raise ConfigError(f"key outside any section at line {lineno}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}] at line {lineno}")
        kind = SCHEMA[section][key][0]
        cfg.set(section, key, _parse_value(kind, raw, f"[{section}] {key}"))
    env = os.environ if env is None else env
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):]
        if "__" not in rest:
            raise ConfigError(f"malformed override variable {name}")
        sec, key = rest.lower().split("__", 1)
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown config key in override {name}")
        cfg.set(sec, key, _parse_value(SCHEMA[sec][key][0], raw, name))
    return cfg


def load(path, env=None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read(), env=env)


def serialize(cfg: ExperimentConfig) -> str:
    """Canonical full rendering; parse(serialize(cfg)) == cfg."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for key, (kind, _default) in keys.items():
            lines.append(f"{key} = {_format_value(kind, cfg.get(sec, key))}")
        lines.append("")
    return "\n".join(lines)


def validate(cfg: ExperimentConfig, check_files=True):
    """Semantic checks beyond the schema types."""
    name = cfg.get("target", "name")
    if name not in TARGET_NAMES:
        raise ConfigError(
            f"unknown target {name!r}; expected one of {', '.join(TARGET_NAMES)}"
        )
    if cfg.get("potential", "variant") not in ("simple", "neural"):
        raise ConfigError("potential.variant must be 'simple' or 'neural'")
    if len(cfg.get("mcmc", "times")) != len(cfg.get("mcmc", "sizes")):
        raise ConfigError("mcmc.times and mcmc.sizes must have equal length")
    if not cfg.seeds():
        raise ConfigError("empty seed list")
    if check_files:
        for sec, key in (("vi", "load_path"), ("potential", "checkpoint"),
                         ("target", "dataset")):
            path = cfg.get(sec, key)
            if path and not os.path.exists(path):
                raise ConfigError(f"[{sec}] {key} does not exist: {path}")
