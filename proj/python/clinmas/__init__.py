"""Python interface to the clinmas multi-agent debate engine."""

import json as _json
import os as _os

from . import _clinmas
from ._clinmas import (
    CaseError,
    ConfigError,
    CoverageError,
    Error,
    InvalidArgument,
    check_consensus,
    curated_problems,
    decisiveness_score,
    default_problems,
    mentions_problem,
    template_version,
)

__all__ = [
    "CaseError",
    "ConfigError",
    "CoverageError",
    "Error",
    "InvalidArgument",
    "analyze",
    "check_consensus",
    "curate",
    "curated_problems",
    "decisiveness_score",
    "default_aliases",
    "default_problems",
    "evaluate",
    "macro_average",
    "mentions_problem",
    "metrics",
    "read_transcripts",
    "run_scripted",
    "template_version",
]


def metrics(tp, tn, fp, fn):
    """Precision, recall, specificity and F1; undefined values are None."""
    return _json.loads(_clinmas.metrics_json(tp, tn, fp, fn))


def macro_average(reports):
    """Unweighted mean of metric dicts, skipping None entries."""
    return _json.loads(_clinmas.macro_average_json(_json.dumps(list(reports))))


def default_aliases():
    return _json.loads(_clinmas.default_aliases_json())


def curate(corpus, problems=(), aliases=""):
    """Implicit-diagnosis task instances plus a corpus report."""
    return _json.loads(_clinmas.curate_json(_os.fspath(corpus), list(problems), _os.fspath(aliases)))


def run_scripted(corpus, tasks, script, out_dir, config=None):
    """Runs a batch against a scripted backend; returns the batch summary."""
    return _json.loads(
        _clinmas.run_scripted_json(
            _os.fspath(corpus), _os.fspath(tasks), _json.dumps(config or {}), _os.fspath(script), _os.fspath(out_dir)
        )
    )


def evaluate(gold, predictions):
    """Per-problem metrics and the macro average for a prediction or transcript file."""
    return _json.loads(_clinmas.evaluate_json(_os.fspath(gold), _os.fspath(predictions)))


def analyze(transcripts, gold, min_appearances=100):
    return _json.loads(_clinmas.analyze_json(_os.fspath(transcripts), _os.fspath(gold), min_appearances))


def read_transcripts(path):
    return _json.loads(_clinmas.read_transcripts_json(_os.fspath(path)))
