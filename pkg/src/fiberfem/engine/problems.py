"""Nonlinearity and right-hand-side library, plus the registry of shipped problems."""

from __future__ import annotations

import json
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from numpy.typing import NDArray
from pydantic import ValidationError
from scipy.special import erf

from ..core import ConfigurationError, DataFileError, get_logger, settings
from ..models import NonlinearityConfig, ProblemConfig

logger = get_logger(__name__)

ScalarMap = Callable[[NDArray[np.float64]], NDArray[np.float64]]
Field2D = Callable[[NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]]

CONFIG_SUFFIXES = (".json", ".yaml", ".yml")


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """Scalar nonlinearity f with bounded derivative.

    Attributes:
        name: Family name
        f: Vectorized f
        f_prime: Vectorized f'
        bounds: [a, b] containing the closure of the range of f'
        params: Parameters the family was built from
    """

    name: str
    f: ScalarMap
    f_prime: ScalarMap
    bounds: tuple[float, float]
    params: dict[str, float] = field(default_factory=dict)


def atan_nonlinearity(alpha: float, beta: float) -> Nonlinearity:
    """f'(x) = alpha * arctan(x) + beta with f(0) = 0.

    Raises:
        ConfigurationError: If alpha is not positive
    """
    if not alpha > 0:
        raise ConfigurationError(f"atan nonlinearity needs alpha > 0, got {alpha!r}", config_key="alpha")

    def f(x: NDArray[np.float64]) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=np.float64)
        return alpha * (x * np.arctan(x) - 0.5 * np.log1p(x * x)) + beta * x

    def f_prime(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return alpha * np.arctan(np.asarray(x, dtype=np.float64)) + beta

    half = alpha * np.pi / 2.0
    return Nonlinearity(
        name="atan",
        f=f,
        f_prime=f_prime,
        bounds=(beta - half, beta + half),
        params={"alpha": alpha, "beta": beta},
    )


def atan_from_range(lower: float, upper: float) -> Nonlinearity:
    """atan nonlinearity whose f' sweeps the open range (lower, upper)."""
    if not upper > lower:
        raise ConfigurationError("atan range needs upper > lower", config_key="upper")
    return atan_nonlinearity(alpha=(upper - lower) / np.pi, beta=0.5 * (lower + upper))


def ambrosetti_prodi_range(lambda_1: float, lambda_2: float) -> tuple[float, float]:
    """Range ((3 l1 - l2)/2, (l1 + l2)/2) centered at l1 and stopping halfway to l2."""
    return (0.5 * (3.0 * lambda_1 - lambda_2), 0.5 * (lambda_1 + lambda_2))


def nonconvex_nonlinearity(
    low: float = 4.0, high: float = 14.0, width: float = 2.0, ceiling: float | None = None
) -> Nonlinearity:
    """Even well f'(x) = high - (high - low) exp(-(x/width)^2).

    f' dips to ``low`` at the origin and recovers to ``high`` on both sides, so
    f is convex far out and flattens near zero. ``ceiling`` is the next
    eigenvalue above the well; f' must stay strictly below it. Without a
    ceiling, the only gate is the interval containment in
    :meth:`ProblemSpec.from_config`.

    Raises:
        ConfigurationError: Unless 0 < low < high < ceiling and width > 0
    """
    if not (0 < low < high and width > 0):
        raise ConfigurationError(
            "nonconvex nonlinearity needs 0 < low < high and width > 0",
            config_key="params",
            details={"low": low, "high": high, "width": width},
        )
    if ceiling is not None and not high < ceiling:
        raise ConfigurationError(
            f"nonconvex well reaches {high!r}, at or above the eigenvalue ceiling {ceiling!r}",
            config_key="params.high",
            details={"high": high, "ceiling": ceiling},
        )
    params = {"low": low, "high": high, "width": width}
    if ceiling is not None:
        params["ceiling"] = ceiling
    depth = high - low

    def f(x: NDArray[np.float64]) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=np.float64)
        return high * x - depth * width * (np.sqrt(np.pi) / 2.0) * erf(x / width)

    def f_prime(x: NDArray[np.float64]) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=np.float64)
        return high - depth * np.exp(-((x / width) ** 2))

    return Nonlinearity(
        name="nonconvex",
        f=f,
        f_prime=f_prime,
        bounds=(low, high),
        params=params,
    )


def linear_nonlinearity(c: float) -> Nonlinearity:
    """f(x) = c x."""

    def f(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return c * np.asarray(x, dtype=np.float64)

    def f_prime(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.full_like(np.asarray(x, dtype=np.float64), c)

    return Nonlinearity(name="linear", f=f, f_prime=f_prime, bounds=(c, c), params={"c": c})


def nonlinearity_from_config(config: NonlinearityConfig) -> Nonlinearity:
    """Build the nonlinearity named by a config block.

    Raises:
        ConfigurationError: On missing or unknown parameters
    """
    params = dict(config.params)
    try:
        if config.type == "atan":
            if {"lower", "upper"} <= params.keys():
                return atan_from_range(params.pop("lower"), params.pop("upper"))
            return atan_nonlinearity(params.pop("alpha"), params.pop("beta"))
        if config.type == "nonconvex":
            return nonconvex_nonlinearity(**params)
        return linear_nonlinearity(params.pop("c"))
    except KeyError as e:
        raise ConfigurationError(
            f"Nonlinearity '{config.type}' is missing parameter {e!s}",
            config_key="nonlinearity.params",
        )
    except TypeError as e:
        raise ConfigurationError(
            f"Unknown parameter for nonlinearity '{config.type}': {e!s}",
            config_key="nonlinearity.params",
        )


def biquadratic(scale: float = 1.0) -> Field2D:
    """g(x, y) = scale * x(x - 1) y(y - 2)."""

    def field(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
        return scale * x * (x - 1.0) * y * (y - 2.0)

    return field


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Validated problem: configuration plus the nonlinearity it names.

    Attributes:
        config: Parsed configuration
        nonlinearity: Nonlinearity built from the config
        base_dir: Directory relative paths in the config resolve against
    """

    config: ProblemConfig
    nonlinearity: Nonlinearity
    base_dir: Path | None = None

    @classmethod
    def from_config(cls, config: ProblemConfig, base_dir: Path | None = None) -> ProblemSpec:
        """Pair a config with its nonlinearity and check interval containment.

        Raises:
            ConfigurationError: If [a, b] is not inside the spectral interval
        """
        nonlinearity = nonlinearity_from_config(config.nonlinearity)
        lower, upper = config.interval
        a, b = nonlinearity.bounds
        if not (lower <= a and b <= upper):
            raise ConfigurationError(
                f"Spectral interval [{lower!r}, {upper!r}] must contain the range "
                f"[{a!r}, {b!r}] of f'",
                config_key="interval",
            )
        return cls(config=config, nonlinearity=nonlinearity, base_dir=base_dir)

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def interval(self) -> tuple[float, float]:
        return self.config.interval

    @property
    def tol_fiber(self) -> float:
        return self.config.tol.fiber

    @property
    def tol_solution(self) -> float:
        return self.config.tol.solution

    def rhs_field(self) -> Field2D | None:
        """Closed-form RHS field, if the config names one."""
        rhs = self.config.rhs
        if rhs.type == "biquadratic":
            return biquadratic(rhs.scale)
        return None

    def rhs_path(self) -> Path | None:
        """Resolved path of an explicit RHS vector."""
        if self.config.rhs.path is None:
            return None
        path = Path(self.config.rhs.path)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def with_updates(self, **updates: Any) -> ProblemSpec:
        """Copy with top-level config fields replaced (CLI overrides)."""
        config = ProblemConfig.model_validate({**self.config.model_dump(), **updates})
        return ProblemSpec.from_config(config, base_dir=self.base_dir)


def read_config_file(path: Path | str) -> dict[str, Any]:
    """Parse a JSON or YAML config file into a dict.

    Raises:
        DataFileError: If the file cannot be read or parsed
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataFileError(f"Cannot read config: {e!s}", path=str(path))
    try:
        data = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise DataFileError(f"Cannot parse config: {e!s}", path=str(path))
    if not isinstance(data, dict):
        raise DataFileError("Config file must hold a mapping", path=str(path))
    return data


def load_problem(path: Path | str) -> ProblemSpec:
    """Load and validate a problem config file.

    Raises:
        DataFileError: If the file cannot be read
        ConfigurationError: If the content is invalid
    """
    path = Path(path)
    data = read_config_file(path)
    try:
        config = ProblemConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(
            f"Invalid problem config {path.name}: {e.error_count()} error(s)",
            details={"errors": json.loads(e.json())},
        )
    return ProblemSpec.from_config(config, base_dir=path.parent)


class ProblemRegistry:
    """Registry of problem configurations found under ``<config_dir>/problems``."""

    def __init__(self, config_dir: Path | str | None = None) -> None:
        """Initialize the registry.

        Args:
            config_dir: Config directory; defaults to FIBERFEM_CONFIG_DIR, then
                the repository ``config/`` directory
        """
        if config_dir is None:
            config_dir = settings.config_dir or Path(__file__).resolve().parents[3] / "config"

        self.config_dir = Path(config_dir)
        self.problems_dir = self.config_dir / "problems"
        self._problems: dict[str, ProblemSpec] = {}
        self._load_problems()

    def _load_problems(self) -> None:
        self._problems = {}
        if not self.problems_dir.exists():
            logger.warning("problems_dir_missing", path=str(self.problems_dir))
            return
        for path in sorted(self.problems_dir.iterdir()):
            if path.suffix not in CONFIG_SUFFIXES:
                continue
            try:
                spec = load_problem(path)
            except (ConfigurationError, DataFileError) as e:
                logger.error("problem_load_failed", path=str(path), error=e.message)
                continue
            self._problems[spec.name] = spec
        logger.debug("problems_loaded", names=self.list_problems())

    def get(self, name: str) -> ProblemSpec:
        """Problem by name.

        Raises:
            ConfigurationError: If no such problem is registered
        """
        try:
            return self._problems[name]
        except KeyError:
            raise ConfigurationError(
                f"Unknown problem '{name}'; available: {', '.join(self.list_problems())}",
                config_key="config",
            )

    def list_problems(self) -> list[str]:
        return sorted(self._problems)

    def resolve(self, reference: str) -> ProblemSpec:
        """Problem from a file path, or from a registered name when no such file exists."""
        path = Path(reference)
        if path.suffix in CONFIG_SUFFIXES or path.exists():
            return load_problem(path)
        return self.get(reference)

    def save(self, config: ProblemConfig, overwrite: bool = False) -> Path:
        """Write a config as JSON into the problems directory.

        Raises:
            DataFileError: If the file exists and overwrite is False, or on I/O failure
        """
        self.problems_dir.mkdir(parents=True, exist_ok=True)
        path = self.problems_dir / f"{config.name}.json"
        if path.exists() and not overwrite:
            raise DataFileError("Problem file already exists", path=str(path))
        try:
            path.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
        except OSError as e:
            raise DataFileError(f"Cannot write config: {e!s}", path=str(path))
        self._problems[config.name] = ProblemSpec.from_config(config, base_dir=path.parent)
        return path


def shipped_examples(registry: ProblemRegistry | None = None) -> list[ProblemSpec]:
    """The three shipped example problems, in order."""
    registry = registry or ProblemRegistry()
    return [registry.get(name) for name in ("example1", "example2", "example3")]
