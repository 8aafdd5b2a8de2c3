"""Pilot package: dynamic discovery and dispatcher."""
import importlib
import pkgutil

from core.errors import PhaseSystemError
from core.models import PilotMode

_registry = {}  # mode value -> Pilot class


def _load_modules():
    import mra_mom.pilots as pkg
    for finder, name, ispkg in pkgutil.iter_modules(pkg.__path__):
        if name.startswith('_') or name == 'base':
            continue
        mod = importlib.import_module(f"{pkg.__name__}.{name}")
        Pilot = getattr(mod, "Pilot", None)
        if Pilot is None:
            continue
        for mode in getattr(mod, "MODES", []):
            _registry[mode] = Pilot


def get_pilot(mode, estimate):
    if not _registry:
        _load_modules()
    try:
        key = PilotMode(mode).value
    except ValueError:
        key = str(mode)
    if key not in _registry:
        raise PhaseSystemError("unsupported pilot mode", mode=key, available=sorted(_registry))
    return _registry[key](estimate)


def available_modes():
    if not _registry:
        _load_modules()
    return sorted(_registry)


__all__ = ["get_pilot", "available_modes"]
