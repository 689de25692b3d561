"""Killing tensor analysis on conformal 2-tori."""

import json

from ._ktorus import (
    ConformalFactor,
    Error,
    analyze_config,
    closed_geodesic,
    kernel,
    known_metric,
    lambda_form,
    potentiality,
)

__all__ = [
    "ConformalFactor",
    "Error",
    "analyze",
    "analyze_config",
    "closed_geodesic",
    "kernel",
    "known_metric",
    "lambda_form",
    "potentiality",
]


def analyze(config, ranks=(1, 2, 3, 4), metric_id="metric"):
    """Run the obstruction pipeline on a config (dict or JSON text); returns the report as a dict."""
    text = config if isinstance(config, str) else json.dumps(config)
    return json.loads(analyze_config(text, list(ranks), metric_id))
