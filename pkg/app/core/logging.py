import logging

_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: str = "WARNING") -> logging.Logger:
    """Install a single stream handler on the package logger."""
    logger = logging.getLogger("app")
    logger.setLevel(getattr(logging, level.upper(), logging.WARNING))
    if not any(getattr(h, "_latency_ptas", False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_FORMAT))
        handler._latency_ptas = True
        logger.addHandler(handler)
    return logger
