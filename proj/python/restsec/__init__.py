"""Black-box security testing for REST APIs."""

import json

from ._restsec import (
    Fixture,
    __version__,
    fault_label,
    find_stack_trace,
    fixture_documents,
    fixture_names,
    main,
    parse_allow_header,
    render_sqli_payload,
    replay,
    schema_endpoints,
    security_oracles,
    seeded_fault_code,
)
from ._restsec import _fuzz


def fuzz(**config):
    """Fuzz a target and run the security oracles.

    Keyword arguments mirror the command-line flags (schema, base_url, auth,
    budget_seconds, seed, oracles, out_dir, emit, ...). Returns a dict with
    the exit code and the parsed report.
    """
    result = _fuzz(config)
    text = result.pop("report_json")
    result["report"] = json.loads(text) if text else None
    return result


__all__ = [
    "Fixture",
    "__version__",
    "fault_label",
    "find_stack_trace",
    "fixture_documents",
    "fixture_names",
    "fuzz",
    "main",
    "parse_allow_header",
    "render_sqli_payload",
    "replay",
    "schema_endpoints",
    "security_oracles",
    "seeded_fault_code",
]
