import os
from fractions import Fraction
from dotenv import load_dotenv

load_dotenv()


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    return int(raw) if raw not in (None, "") else default


class Settings:
    SEED: int = _int_env("LATENCY_PTAS_SEED", 0)
    EPS: Fraction = Fraction(os.getenv("LATENCY_PTAS_EPS") or "1")
    RETRIES: int = _int_env("LATENCY_PTAS_RETRIES", 16)
    WORKERS: int = _int_env("LATENCY_PTAS_WORKERS", 1)
    STATE_CAP: int = _int_env("LATENCY_PTAS_STATE_CAP", 2_000_000)
    COMPOSITION_CAP: int = _int_env("LATENCY_PTAS_COMPOSITION_CAP", 200_000)
    GUESS_CAP: int = _int_env("LATENCY_PTAS_GUESS_CAP", 5_000_000)
    LOG_LEVEL: str = os.getenv("LATENCY_PTAS_LOG_LEVEL", "WARNING")

    # oracle budgets
    ORACLE_TRP_MAX_N: int = 15
    ORACLE_SEGTSP_MAX_N: int = 9
    ORACLE_SCHED_MAX_N: int = 16


settings = Settings()
