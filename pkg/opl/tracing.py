"""
Optional Langfuse tracing for experiment runs

`observe` wraps a function in a Langfuse span when the package is installed
and credentials are configured; otherwise it returns the function untouched.
Inputs and outputs are never captured since they are large arrays.
"""

import logging
from typing import Any, Callable, Dict, Optional

from config import config

logger = logging.getLogger(__name__)

# Langfuse tracing imports
try:
    from langfuse import get_client, observe as _langfuse_observe
    LANGFUSE_AVAILABLE = True
except ImportError:
    LANGFUSE_AVAILABLE = False
    _langfuse_observe = None

    def get_client():
        return None


def tracing_enabled() -> bool:
    return LANGFUSE_AVAILABLE and not config.validate_required(["LANGFUSE_PUBLIC_KEY", "LANGFUSE_SECRET_KEY"])


def observe(name: Optional[str] = None) -> Callable:
    """Decorator factory mirroring langfuse.observe, a no-op when tracing is off."""
    def decorator(func: Callable) -> Callable:
        if not tracing_enabled():
            return func
        return _langfuse_observe(name=name or func.__name__, capture_input=False, capture_output=False)(func)
    return decorator


def tag_current_span(metadata: Dict[str, Any]) -> None:
    """Attach scalar metadata (seed, gamma, ...) to the active span, if any."""
    if not tracing_enabled():
        return
    try:
        get_client().update_current_span(metadata=metadata)
    except Exception as e:
        logger.debug("could not tag langfuse span: %s", e)


def flush() -> None:
    if tracing_enabled():
        get_client().flush()
