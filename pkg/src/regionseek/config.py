"""Run configuration shared by all CLI commands.

Values come from defaults, then an optional key=value config file, then
command-line flags, in that order. The fully resolved set is echoed into
every report so runs are reproducible from their outputs alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .affinity import AffinityParams
from .hierarchy import DecomposeParams
from .ksums import KsumsParams


@dataclass
class RunConfig:
    alpha: float = 0.2
    theta_fraction: float = 0.30
    seeds_follow_prose: bool = False
    tau1: float = 0.97
    tau2: float = 0.2
    min_region_patches: int = 4
    max_nodes: int = 256
    connectivity: int = 4
    max_rounds: int = 100
    seed: int = 0
    init_mode: str = "seeded"
    sample_with_replacement: bool = False
    pool_method: str = "mean"
    k: int = 10
    threads: int = 1

    def decompose_params(self, rng_seed: int | None = None) -> DecomposeParams:
        return DecomposeParams(
            tau1=self.tau1,
            tau2=self.tau2,
            min_region_patches=self.min_region_patches,
            max_nodes=self.max_nodes,
            connectivity=self.connectivity,
            affinity=AffinityParams(
                alpha=self.alpha,
                theta_fraction=self.theta_fraction,
                seeds_follow_prose=self.seeds_follow_prose,
            ),
            ksums=KsumsParams(
                max_rounds=self.max_rounds,
                rng_seed=self.seed if rng_seed is None else rng_seed,
                init_mode=self.init_mode,
                sample_with_replacement=self.sample_with_replacement,
            ),
        )

    def to_dict(self) -> dict:
        return asdict(self)


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def load_config_file(path) -> dict:
    """Parse `key = value` lines; '#' starts a comment, blank lines skipped."""
    values: dict = {}
    known = {f.name: f.type for f in fields(RunConfig)}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return values


def _coerce(key: str, value: str):
    default = getattr(RunConfig(), key)
    if isinstance(default, bool):
        if value.lower() not in _BOOL_WORDS:
            raise ValueError(f"config key {key!r}: cannot parse bool from {value!r}")
        return _BOOL_WORDS[value.lower()]
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def resolve_config(file_values: dict | None, overrides: dict) -> RunConfig:
    """Defaults <- config file <- explicit CLI flags."""
    merged = {}
    if file_values:
        merged.update(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(**merged)
    cfg.decompose_params()  # validate ranges eagerly
    return cfg
