"""Environment-driven settings for dinikit runs."""

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional, Union

from dotenv import load_dotenv

from .exceptions import ParameterError


@dataclass(frozen=True)
class Settings:
    """Run settings; CLI flags override these, scenario fields override both."""

    out: Path = Path("out")
    jobs: int = 1
    seed: int = 0
    log_level: str = "INFO"
    p: float = 0.5
    kappa: float = 0.25

    def with_overrides(self, **overrides: Any) -> "Settings":
        """Copy with every non-None override applied."""
        values = {k: v for k, v in overrides.items() if v is not None}
        if "out" in values:
            values["out"] = Path(values["out"])
        return replace(self, **values)


def _env(name: str, default: str) -> str:
    return os.getenv(name, default)


def load_settings(env_file: Optional[Union[str, Path]] = None) -> Settings:
    """Read DINIKIT_* variables after loading ``.env`` (or ``env_file``) if present."""
    path = Path(env_file) if env_file is not None else Path.cwd() / ".env"
    if path.exists():
        load_dotenv(dotenv_path=path, override=False)

    try:
        settings = Settings(
            out=Path(_env("DINIKIT_OUT", "out")),
            jobs=int(_env("DINIKIT_JOBS", "1")),
            seed=int(_env("DINIKIT_SEED", "0")),
            log_level=_env("DINIKIT_LOG_LEVEL", "INFO").upper(),
            p=float(_env("DINIKIT_P", "0.5")),
            kappa=float(_env("DINIKIT_KAPPA", "0.25")),
        )
    except ValueError as exc:
        raise ParameterError(f"Invalid DINIKIT_* environment value: {exc}") from exc

    if settings.jobs < 1:
        raise ParameterError(f"DINIKIT_JOBS must be at least 1, got {settings.jobs}")
    if not 0.0 < settings.p <= 1.0:
        raise ParameterError(f"DINIKIT_P must lie in (0, 1], got {settings.p}")
    if not 0.0 < settings.kappa < 0.5:
        raise ParameterError(
            f"DINIKIT_KAPPA must lie in (0, 1/2), got {settings.kappa}"
        )
    return settings
