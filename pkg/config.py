"""Experiment configuration: one JSON object per run, resolved against defaults.

Environment fallbacks are read from the process environment (a .env file in
the working directory is loaded first):

    MLNHARDY_THREADS   worker count when --threads is not given
    MLNHARDY_OUTPUT    output directory when --output is not given
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from errors import ConfigError, DomainError
from grid import Domain
from operators import DENSE_GUARD
from schemes import TREND_RATIO
from special import exponent_table, hardy_constant

logger = logging.getLogger(__name__)

COMMANDS = (
    "solve", "iterate", "constant", "scaling", "probe-solvability", "sweep", "verify", "threshold",
)

# Calibrated acceptance constants; echoed into every report.
TOLERANCES = {
    "hardy_lower_factor": 0.8,
    "domain_spread": 0.15,
    "trend_ratio": TREND_RATIO,
    "sweep_band": 20.0,
    "scaling_slope": 0.15,
    "monotonicity_factor": 10.0,
    "duality_factor": 100.0,
    "scheme_agreement": 1e-4,
    "dense_guard": DENSE_GUARD,
}

# fields a config must state explicitly for each command
REQUIRED_FIELDS = {
    "solve": ("n", "s", "gamma", "domain", "N", "f"),
    "iterate": ("n", "s", "gamma", "domain", "N", "f", "K"),
    "constant": ("n", "s", "N", "domains"),
    "scaling": ("s", "lambdas"),
    "probe-solvability": ("s", "gamma", "domain", "ladder", "f"),
    "sweep": ("n", "s", "domain", "N", "m", "gammas", "f"),
    "verify": (),
    "threshold": ("n", "s", "domain", "N"),
}


_NUMBERS = ("n", "s", "gamma", "N", "box_halfwidth", "K", "profile_width", "m", "p",
            "fractional_weight", "tol", "seed", "num_probes", "threads")
_OPTIONAL = ("box_halfwidth", "m", "p")
_NUMBER_LISTS = ("ladder", "k_levels", "lambdas", "gammas")


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass
class ExperimentConfig:
    command: str
    n: int = 3
    s: float = 0.5
    gamma: float = 0.0
    domain: dict = field(default_factory=lambda: {"kind": "ball", "radius": 1.0})
    domains: list = field(default_factory=lambda: [{"kind": "ball", "radius": 1.0},
                                                   {"kind": "box", "half_widths": 1.0}])
    N: int = 16
    box_halfwidth: Optional[float] = None
    ladder: list = field(default_factory=lambda: [12, 16, 24])
    f: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    K: int = 30
    k_levels: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    lambdas: list = field(default_factory=lambda: [1, 2, 4, 8, 16])
    profile_width: float = 0.25
    gammas: list = field(default_factory=list)
    m: Optional[float] = None
    p: Optional[float] = None
    regularization: str = "inverse_k"
    schedule_b: str = "geometric"
    fractional_weight: float = 1.0
    tol: float = 1e-10
    seed: int = 0
    num_probes: int = 20
    threads: int = 1
    output: str = "output"
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCES))

    def build_domain(self, spec=None):
        try:
            return Domain.from_dict(spec or self.domain, n=self.n)
        except DomainError as exc:
            raise ConfigError(f"invalid domain {spec or self.domain}: {exc}") from exc

    def to_dict(self):
        return asdict(self)

    def validate(self):
        """Check the preconditions of the dispatched command; raises ConfigError."""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command '{self.command}', expected one of {', '.join(COMMANDS)}")
        self._check_types()
        if int(self.n) != self.n or self.n < 3:
            raise ConfigError(f"n must be an integer >= 3, got {self.n}")
        if not 0.0 < self.s < 1.0:
            raise ConfigError(f"s must lie in (0, 1), got {self.s}")
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise ConfigError(f"N must be an even integer >= 8, got {self.N}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.f.get("kind") not in ("constant", "power", "custom"):
            raise ConfigError(f"f.kind must be constant, power or custom, got {self.f.get('kind')!r}")
        if self.f["kind"] == "power" and "beta" not in self.f:
            raise ConfigError("missing field 'f.beta' for a power-law source")
        if self.f["kind"] == "custom" and "path" not in self.f:
            raise ConfigError("missing field 'f.path' for a custom source table")

        lam = hardy_constant(self.n)
        if self.command in ("solve", "iterate", "probe-solvability", "verify") and not 0.0 <= self.gamma < lam:
            raise ConfigError(f"gamma={self.gamma} must lie in [0, Λ_n) = [0, {lam:g})")
        if self.command == "iterate" and self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        if self.command == "probe-solvability" and len(self.ladder) < 3:
            raise ConfigError(f"ladder needs at least 3 mesh levels, got {self.ladder}")
        if self.command == "scaling":
            lambdas = sorted(self.lambdas)
            if len(lambdas) < 4 or lambdas[0] < 1 or lambdas[-1] / lambdas[0] < 8:
                raise ConfigError("lambdas need >= 4 values >= 1 spanning a factor of at least 8")
        if self.command == "sweep":
            self._validate_sweep()
        if self.command == "iterate" and self.p is not None and self.p >= self.n / (self.n - 1.0):
            raise ConfigError(f"p={self.p} must be below n/(n-1) = {self.n / (self.n - 1.0):g}")
        self.build_domain()
        return self

    def _check_types(self):
        for name in _NUMBERS:
            value = getattr(self, name)
            if value is None and name in _OPTIONAL:
                continue
            if not _is_number(value):
                raise ConfigError(f"field '{name}' must be a number, got {value!r}")
        for name in _NUMBER_LISTS:
            value = getattr(self, name)
            if not isinstance(value, list) or not all(_is_number(v) for v in value):
                raise ConfigError(f"field '{name}' must be a list of numbers, got {value!r}")
        for name in ("f", "domain"):
            if not isinstance(getattr(self, name), dict):
                raise ConfigError(f"field '{name}' must be a JSON object, got {getattr(self, name)!r}")
        if not isinstance(self.domains, list) or not all(isinstance(d, dict) for d in self.domains):
            raise ConfigError("field 'domains' must be a list of JSON objects")
        if self.command == "sweep" and self.m is None:
            raise ConfigError("field 'm' must be a number for command 'sweep'")

    def _validate_sweep(self):
        n = self.n
        if not 2.0 * n / (n + 2.0) < self.m < n / 2.0:
            raise ConfigError(f"m={self.m} must lie in ((2*)', n/2) = ({2.0 * n / (n + 2.0):g}, {n / 2.0:g})")
        gamma_m = exponent_table(n, self.s, self.m).gamma_m
        too_large = [g for g in self.gammas if g >= gamma_m]
        if too_large:
            raise ConfigError(
                f"couplings {too_large} are not below the threshold γ(m) = {gamma_m:.6g} for m={self.m}"
            )
        if any(g < 0 for g in self.gammas) or not self.gammas:
            raise ConfigError("gammas must be a non-empty list of non-negative couplings")


def env_threads(default=1):
    raw = os.getenv("MLNHARDY_THREADS")
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"MLNHARDY_THREADS must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError(f"MLNHARDY_THREADS must be >= 1, got {value}")
    return value


def env_output(default="output"):
    return os.getenv("MLNHARDY_OUTPUT") or default


def load_config(command, path=None, output=None, threads=None):
    """Read ``path`` (a JSON object) and resolve it into a validated ExperimentConfig.

    ``output`` and ``threads`` come from the command line and override both
    the file and the environment.
    """
    load_dotenv()
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config file {path} is not valid UTF-8 JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    elif REQUIRED_FIELDS.get(command):
        raise ConfigError(f"command '{command}' needs --config")

    if "command" in raw and raw["command"] != command:
        raise ConfigError(f"config is for command '{raw['command']}', not '{command}'")
    raw.pop("command", None)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    for name in REQUIRED_FIELDS.get(command, ()):
        if name not in raw:
            raise ConfigError(f"missing field '{name}' for command '{command}'")

    tolerances = dict(TOLERANCES)
    tolerances.update(raw.pop("tolerances", {}))
    if path is not None and isinstance(raw.get("f"), dict) and raw["f"].get("kind") == "custom":
        raw["f"] = dict(raw["f"], path=str((path.parent / raw["f"]["path"]).resolve()))
    try:
        config = ExperimentConfig(command=command, tolerances=tolerances, **raw)
    except TypeError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc

    config.threads = threads or (raw.get("threads") if "threads" in raw else env_threads(config.threads))
    config.output = output or (raw.get("output") if "output" in raw else env_output(config.output))
    logger.debug("resolved config: %s", config.to_dict())
    return config.validate()
