"""Run configuration: flat ``key = value`` text with ``#`` comments.

Values are layered: built-in defaults, then the chosen scenario's desk
defaults, then whatever the file sets. Unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

U64_MAX = 2**64 - 1


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    dim: int = 1
    n: int = 1024
    length: float = 40.0
    hbar: float = 1.0
    mass: float = 1.0
    alpha: float = 0.5
    dt: float = 1e-3
    t_end: float = 1.0
    record_every: int = 100
    snapshot_every: int = 10
    N_particles: int = 20000
    estimator: str = "gaussian_kde"
    bandwidth: float | None = None  # None: Silverman's rule
    cg_cell_factor: int = 1
    seed: int = 0
    out_dir: str = "out"
    g_form: str = "linear"
    # scenario parameters
    sigma0: float = 0.5
    shift: float | None = None  # None: one sigma0
    norm0: float = 1.0
    modes: int = 16
    potential: str = "zero"
    omega: float = 1.0
    trace_tol: float = 1e-8
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.t_end / self.dt - 1e-9))

    @property
    def step_dt(self) -> float:
        """Step actually taken: ``t_end`` split into ``n_steps`` equal steps (<= dt)."""
        return self.t_end / self.n_steps

    def replace(self, **changes) -> RunConfig:
        cfg = dataclasses.replace(self, **changes)
        validate(cfg)
        return cfg


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "extra"}
_INT_KEYS = {"dim", "n", "record_every", "snapshot_every", "N_particles", "cg_cell_factor", "seed", "modes"}
_STR_KEYS = {"scenario", "estimator", "out_dir", "g_form", "potential"}
_OPTIONAL_FLOAT = {"bandwidth": "auto", "shift": "auto"}


def _convert(key: str, raw: str):
    if key in _STR_KEYS:
        return raw
    if key in _OPTIONAL_FLOAT and raw.lower() == _OPTIONAL_FLOAT[key]:
        return None
    if key in _INT_KEYS:
        try:
            return int(raw, 0)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(key, f"expected a real number, got {raw!r}") from None
    if not math.isfinite(val):
        raise ConfigError(key, f"must be finite, got {raw!r}")
    return val


def parse_pairs(text: str) -> dict[str, object]:
    """Parse the flat format into typed values (no defaults, no validation)."""
    out: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(key, "unknown key")
        if key in out:
            raise ConfigError(key, "given more than once")
        if not raw:
            raise ConfigError(key, "missing value")
        out[key] = _convert(key, raw)
    return out


def _need(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(key, message)


def validate(cfg: RunConfig) -> None:
    from .scenarios import SCENARIOS

    _need(cfg.scenario in SCENARIOS, "scenario", f"must be one of {sorted(SCENARIOS)}")
    _need(cfg.dim in (1, 2), "dim", "must be 1 or 2")
    _need(cfg.n >= 2 and cfg.n & (cfg.n - 1) == 0, "n", "must be a power of two >= 2")
    _need(cfg.length > 0, "length", "must be > 0")
    _need(cfg.hbar > 0, "hbar", "must be > 0")
    _need(cfg.mass > 0, "mass", "must be > 0")
    _need(cfg.alpha >= 0, "alpha", "must be >= 0")
    _need(cfg.dt > 0, "dt", "must be > 0")
    _need(cfg.t_end > 0, "t_end", "must be > 0")
    _need(cfg.record_every >= 1, "record_every", "must be >= 1")
    _need(cfg.snapshot_every >= 1, "snapshot_every", "must be >= 1")
    _need(cfg.N_particles >= 1, "N_particles", "must be >= 1")
    _need(cfg.estimator in ("histogram", "gaussian_kde"), "estimator", "must be histogram or gaussian_kde")
    _need(cfg.bandwidth is None or cfg.bandwidth > 0, "bandwidth", "must be > 0 or auto")
    _need(cfg.cg_cell_factor >= 1, "cg_cell_factor", "must be >= 1")
    _need(cfg.n % cfg.cg_cell_factor == 0, "cg_cell_factor", f"must divide n={cfg.n}")
    _need(0 <= cfg.seed <= U64_MAX, "seed", "must be an unsigned 64-bit integer")
    _need(cfg.g_form == "linear", "g_form", "only 'linear' (alpha (1 - f_q)) is implemented")
    _need(cfg.sigma0 > 0, "sigma0", "must be > 0")
    _need(cfg.norm0 > 0, "norm0", "must be > 0")
    _need(cfg.modes >= 1, "modes", "must be >= 1")
    _need(cfg.potential in ("zero", "harmonic"), "potential", "must be zero or harmonic")
    _need(cfg.omega >= 0, "omega", "must be >= 0")
    _need(cfg.trace_tol > 0, "trace_tol", "must be > 0")
    SCENARIOS[cfg.scenario].check(cfg)


def build_config(values: dict[str, object]) -> RunConfig:
    from .scenarios import SCENARIOS

    if "scenario" not in values:
        raise ConfigError("scenario", "required key missing")
    name = values["scenario"]
    if name not in SCENARIOS:
        raise ConfigError("scenario", f"must be one of {sorted(SCENARIOS)}, got {name!r}")
    merged = {**SCENARIOS[name].defaults, **values}
    cfg = RunConfig(**merged)
    validate(cfg)
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text."""
    return build_config(parse_pairs(text))


def format_config(cfg: RunConfig) -> str:
    """Inverse of :func:`parse_config` (every key written out)."""
    lines = []
    for name in _FIELDS:
        val = getattr(cfg, name)
        if val is None:
            val = _OPTIONAL_FLOAT[name]
        elif isinstance(val, float):
            val = f"{val:.17g}"
        lines.append(f"{name} = {val}")
    return "\n".join(lines) + "\n"
