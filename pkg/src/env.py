from __future__ import annotations

import os

try:
    from dotenv import load_dotenv
except ModuleNotFoundError:
    load_dotenv = None


SEED_ENV_VAR = "STRATEGIO_SEED"


def load_env() -> None:
    """Load environment variables from a local .env if present."""

    if load_dotenv is not None:
        load_dotenv(override=False)


def get_env_int(name: str) -> int | None:
    val = os.getenv(name)
    if val is None or not val.strip():
        return None
    try:
        return int(val.strip())
    except ValueError:
        raise ValueError(f"Environment variable {name} must be an integer, got {val!r}") from None


def resolve_seed(flag_seed: int | None, config_seed: int | None) -> int:
    """Seed precedence: CLI flag, then config, then STRATEGIO_SEED, then 0."""

    for candidate in (flag_seed, config_seed, get_env_int(SEED_ENV_VAR)):
        if candidate is not None:
            if candidate < 0:
                raise ValueError(f"Seed must be a non-negative integer, got {candidate}")
            return int(candidate)
    return 0
