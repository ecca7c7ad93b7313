"""Two-window online change-point detection."""

import json
import os

from . import _core
from ._core import Monitor, TwinError, generate_stream, scan

__all__ = [
    "Monitor",
    "TwinError",
    "analyze_csv",
    "calibrate",
    "generate_stream",
    "load_table",
    "monitor",
    "scan",
    "simulate",
    "table_dir",
]

_packaged = os.path.join(os.path.dirname(__file__), "data", "tables")


def table_dir():
    """Shipped quantile tables: TWIN_TABLE_DIR, then the wheel copy, then the source tree."""
    env = os.environ.get("TWIN_TABLE_DIR")
    if env:
        return env
    if os.path.isdir(_packaged):
        return _packaged
    return _core.default_table_dir()


def load_table(path):
    return json.loads(_core.load_table_json(os.fspath(path)))


def calibrate(law="L_SN", draws=10000, seed=20250601, **kw):
    """Monte Carlo quantile table for L_TC, L_SN, L_F or NULL_SIM (needs detector=)."""
    return json.loads(_core.calibrate_json(law, draws, seed, **kw))


def monitor(values, detector="TC", n_train=100, threshold=None, table=None, **kw):
    """Run one detector over a finite stream; returns the verdict dict."""
    if threshold is None and table is None and detector != "RC":
        table = os.path.join(table_dir(), _table_name(detector))
    m = Monitor(detector=detector, n_train=n_train, threshold=threshold, table=table, **kw)
    m.extend([float(v) for v in values])
    out = json.loads(m.verdict_json())
    out["steps"] = m.steps
    return out


def simulate(scenario, fast=False, tables=None, thresholds=None, threads=0):
    """Run a scenario (dict, JSON text or path) and return the result rows."""
    if isinstance(scenario, dict):
        text = json.dumps(scenario)
    elif os.path.exists(os.fspath(scenario)):
        with open(scenario) as f:
            text = f.read()
    else:
        text = scenario
    return json.loads(_core.simulate_json(text, fast, tables or table_dir(), thresholds, threads))


def analyze_csv(path, n_train=31, variance="monitoring", date_col="date", value_col="value",
                detectors=None, tables=None):
    """Daily-median analysis of a CSV; returns (report dict, trace csv text)."""
    rep, trace = _core.analyze_csv_json(os.fspath(path), n_train, variance, date_col, value_col,
                                        detectors, tables or table_dir())
    return json.loads(rep), trace


def _table_name(detector):
    return {"TC": "L_TC.json", "SNTC": "L_SN.json", "NPTC": "L_F.json"}.get(
        detector, "NULL_SIM_%s.json" % detector)
