"""
Shared click options and the error translation used by every command.
"""
from contextlib import contextmanager
from typing import Iterator, List, Optional

import click
from pydantic import ValidationError

from estavg.exceptions import EstimatorAveragingError
from estavg.schemas.experiment import Family

FAMILY_CHOICE = click.Choice([f.value for f in Family])

# Command-line spellings of the fit methods.
METHOD_ALIASES = {"k": "K", "K": "K", "pcf": "g", "g": "g", "palm": "palm"}


@contextmanager
def domain_errors() -> Iterator[None]:
    """Turn domain and validation errors into click exceptions (exit status 1)."""
    try:
        yield
    except EstimatorAveragingError as exc:
        context = ", ".join(f"{k}={v}" for k, v in exc.context.items())
        raise click.ClickException(f"{exc.detail} ({context})" if context else exc.detail) from exc
    except (ValidationError, ValueError) as exc:
        raise click.ClickException(str(exc)) from exc


def split_list(value: Optional[str]) -> Optional[List[str]]:
    """``"a,b"`` -> ``["a", "b"]``; None stays None."""
    if value is None:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


def normalize_method(family: Family, method: str) -> str:
    """Canonical method name of a family (``k`` -> ``K``, ``pcf`` -> ``g``, ``kernel:ppl`` -> ``ppl``)."""
    if family == Family.POISSON:
        return method.split(":", 1)[1] if method.startswith("kernel:") else method
    if family == Family.BOOLEAN:
        return method
    if method not in METHOD_ALIASES:
        raise click.BadParameter(f"unknown method '{method}' for {family.value}", param_hint="--method")
    return METHOD_ALIASES[method]
