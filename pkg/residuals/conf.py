from pathlib import Path

from django.conf import settings

DEFAULTS = {
    "FIT_MAX_ITERATIONS": 500,
    "FIT_REL_TOL": 1e-8,
    "FIT_GRADIENT_TOL": 1e-3,
    "FIT_OPTIMIZER": "quasi-newton",
    "PROBABILITY_FLOOR": 1e-300,
    "QUADRATURE_NODES": 64,
    "SCHEME_DRAWS": 100_000,
    "SHARD_SIZE": 65_536,
    "LOESS_SPAN": 0.75,
    "TREND_GRID_POINTS": 100,
    "OUTLIER_THRESHOLD": 2.0,
    "THREADS": 1,
    "OUTPUT_DIR": "",
}


def psr_setting(name: str):
    """Read one PSR_RESIDUALS entry, falling back to the built-in default."""
    configured = getattr(settings, "PSR_RESIDUALS", None) or {}
    if name in configured:
        return configured[name]
    return DEFAULTS[name]


def resolve_output_path(raw_path: str | Path) -> Path:
    path = Path(raw_path).expanduser()
    if not path.is_absolute():
        base_dir = psr_setting("OUTPUT_DIR")
        if base_dir:
            path = Path(base_dir).expanduser() / path
    path = path.resolve()
    path.parent.mkdir(parents=True, exist_ok=True)
    return path
