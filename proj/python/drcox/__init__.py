"""Doubly robust hazard ratio estimation under informative censoring."""

import json as _json

from ._drcox import (
    ConvergenceError,
    Dataset,
    ValidationError,
    aipcw_baseline,
    config_hash as _config_hash,
    fit,
    generate,
    nelson_aalen,
    parse_csv,
    product_limit,
    read_csv,
    simulate as _simulate,
)

__all__ = [
    "ConvergenceError",
    "Dataset",
    "ValidationError",
    "aipcw_baseline",
    "config_hash",
    "fit",
    "generate",
    "nelson_aalen",
    "parse_csv",
    "product_limit",
    "read_csv",
    "simulate",
]


def _as_json(config):
    return config if isinstance(config, str) else _json.dumps(config)


def simulate(config, threads=None):
    """Run a simulation study from a config dict or JSON string; returns the report CSV."""
    return _simulate(_as_json(config), threads)


def config_hash(config):
    return _config_hash(_as_json(config))
