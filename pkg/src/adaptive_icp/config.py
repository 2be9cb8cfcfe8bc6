"""Engine configuration and the flat key = value config file format.

Unknown keys are rejected; missing keys keep their defaults, so a partial
file is a valid override set and `print-config` output round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigError


@dataclass
class EngineConfig:
    # scan preprocessing
    frame_voxel: float = 1.0          # m, per-scan downsampling cell
    density_radius: float = 1.0       # m, neighbor-count radius
    density_alpha: float = 5.0        # percentile kept threshold
    knn: int = 10                     # neighborhood for covariances/normals

    # coarse registration
    coarse_sigma: float = 1.0         # weight decay of the error distribution
    coarse_max_dist: float = 2.0      # m, correspondence gate
    coarse_max_iters: int = 20
    coarse_tol: float = 1e-4          # twist-norm convergence tolerance
    lm_lambda: float = 1e-4           # base damping, x10 backoff on cost increase
    max_translation: float = 20.0     # m, divergence bound from the initial pose

    # initial pose gate
    gate_tau: float = 1.0             # m, translation-difference threshold
    pred_weight_old: float = 1.0      # blend weight of the older increment
    pred_weight_recent: float = 1.0   # base blend weight of the newer increment

    # adaptive threshold
    sigma_decay: float = 1.5          # motion-stability decay factor
    sigma_max: float = 1.0            # m, rotation-error saturation
    beta: float = 1.0                 # 1/rad, rotation-error scaling
    threshold_window: int = 100       # entries kept; 0 = unbounded
    dt: float = 0.1                   # s, frame interval
    bootstrap_sigma: float = 2.0      # m, threshold before any entry exists
    sigma_floor: float = 0.1          # m, lower bound of the threshold

    # fine registration
    fine_max_iters: int = 30
    fine_tol: float = 1e-4
    min_gate: float = 0.3             # m, floor of the 3-sigma residual gate

    # local map
    map_voxel: float = 1.0            # m
    map_cap: int = 20                 # points per voxel
    map_range: float = 100.0          # m, prune radius

    # evaluation
    eval_align: bool = True

    def validate(self) -> "EngineConfig":
        positive = [
            "frame_voxel", "density_radius", "knn", "coarse_sigma", "coarse_max_dist",
            "coarse_max_iters", "coarse_tol", "max_translation", "gate_tau",
            "sigma_decay", "sigma_max", "beta", "dt", "bootstrap_sigma", "sigma_floor",
            "fine_max_iters", "fine_tol", "min_gate", "map_voxel", "map_cap", "map_range",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lm_lambda < 0:
            raise ConfigError(f"lm_lambda must be nonnegative, got {self.lm_lambda}")
        if not 0.0 <= self.density_alpha <= 100.0:
            raise ConfigError(f"density_alpha must be in [0, 100], got {self.density_alpha}")
        if self.threshold_window < 0:
            raise ConfigError(f"threshold_window must be nonnegative, got {self.threshold_window}")
        return self


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_value(name: str, kind: type, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            return _BOOL_WORDS[raw.lower()]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except (KeyError, ValueError):
        pass
    raise ConfigError(f"cannot parse {name} = {raw!r} as {kind.__name__}")


def parse_config(text: str) -> EngineConfig:
    """Parse `key = value` lines; '#' starts a comment, blank lines are ignored."""
    types = {f.name: f.type for f in fields(EngineConfig)}
    # dataclass field types arrive as strings under from __future__ annotations
    kinds = {"float": float, "int": int, "bool": bool}
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = kinds[types[key]] if isinstance(types[key], str) else types[key]
        overrides[key] = _parse_value(key, kind, raw)
    return EngineConfig(**overrides).validate()


def load_config(path) -> EngineConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def dump_config(cfg: EngineConfig) -> str:
    """Effective values in the same key = value form parse_config accepts."""
    lines = []
    for f in fields(EngineConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
