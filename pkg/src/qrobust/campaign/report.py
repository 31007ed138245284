"""Persisting campaign results.

CSV layout (``format="csv"``), one file per table, header row first:

=================  ==============================================================
rim_grid.csv       controller_id, sigma_sim, p, rim, n, ci_lo, ci_hi
arim_curve.csv     sigma_sim, p, arim, L, ci_lo, ci_hi
tau.csv            sigma_base, sigma_j, alpha, tau, p_value, concordant,
                   discordant, ties_i, ties_j
yield.csv          controller_id, sigma_sim, threshold, yield, worst_case_fidelity
trajectory.csv     controller_id, restart, calls_used, best_objective
controllers.json   ranked controller records with objective and search status
summary.json       schema version, metadata, normalized config, selection
=================  ==============================================================

Floats are written with 17 significant digits so that every double reads
back to the identical value. Rows are ordered by controller id, then noise
level, then threshold. Wall-clock timestamps live in a separate
``provenance.json`` so that the files above are byte-identical across
replays of the same config. ``format="json"`` writes the same tables into
a single ``result.json``.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import numpy as np

from ..consistency import TauResult
from ..errors import SchemaVersionError, ValidationError
from ..spin_model import controller_from_record, controller_to_record
from .config import CampaignConfig
from .runner import SCHEMA_VERSION, ArimPoint, CampaignResult, ControllerRecord

__all__ = [
    "FORMATS",
    "COLUMNS",
    "TABLES",
    "write_report",
    "write_controllers",
    "write_trajectory",
    "read_controllers",
    "write_provenance",
    "load_result",
]

FORMATS = ("csv", "json")

COLUMNS = {
    "rim_grid": ("controller_id", "sigma_sim", "p", "rim", "n", "ci_lo", "ci_hi"),
    "arim_curve": ("sigma_sim", "p", "arim", "L", "ci_lo", "ci_hi"),
    "tau": ("sigma_base", "sigma_j", "alpha", "tau", "p_value", "concordant",
            "discordant", "ties_i", "ties_j"),
    "yield": ("controller_id", "sigma_sim", "threshold", "yield", "worst_case_fidelity"),
    "trajectory": ("controller_id", "restart", "calls_used", "best_objective"),
}
TABLES = tuple(COLUMNS)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return format(float(x), ".17g")


def _rows(result: CampaignResult, table: str):
    cfg = result.config
    sig = cfg.sigma_sim_grid
    if table == "rim_grid":
        for i, rec in enumerate(result.controllers):
            for j, s in enumerate(sig):
                yield (rec.id, s, cfg.p, result.rim[i, j], cfg.n_samples,
                       result.ci_lo[i, j], result.ci_hi[i, j])
    elif table == "arim_curve":
        for a in result.arim_curve:
            yield (a.sigma, cfg.p, a.arim, a.L, a.ci_lo, a.ci_hi)
    elif table == "tau":
        for t in result.tau:
            yield (t.sigma_base, t.sigma_j, t.alpha, t.tau, t.p_value, t.concordant,
                   t.discordant, t.ties_i, t.ties_j)
    elif table == "yield":
        for i, rec in enumerate(result.controllers):
            for j, s in enumerate(sig):
                for k, th in enumerate(cfg.yield_thresholds):
                    yield (rec.id, s, th, result.yields[i, j, k], result.worst[i, j])
    elif table == "trajectory":
        yield from _trajectory_rows(result.controllers)


def _trajectory_rows(records):
    for rec in records:
        for calls, value in rec.trajectory:
            yield (rec.id, rec.restart, calls, value)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _controller_records(records, spec) -> list[dict]:
    out = []
    for rec in records:
        d = {"id": rec.id, "restart": rec.restart, "objective": rec.objective,
             "calls_used": rec.calls_used, "status": rec.status}
        d.update(controller_to_record(spec, rec.controller))
        out.append(d)
    return out


def _summary(result: CampaignResult) -> dict:
    ids = [rec.id for rec in result.controllers]
    return {
        "schema_version": SCHEMA_VERSION,
        "metadata": dict(result.metadata),
        "config": result.config.to_dict(),
        "best_controller": None if result.best_index is None else ids[result.best_index],
        "median_controller": None if result.median_index is None else ids[result.median_index],
        "arim_mean": result.arim_mean,
        "tau_degenerate_sigmas": list(result.tau_degenerate),
    }


def _check(result, fmt, tables):
    if fmt not in FORMATS:
        raise ValidationError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    if not isinstance(result, CampaignResult):
        raise ValidationError("nothing to report: no campaign result")
    if result.rim is None or np.size(result.rim) == 0 or not result.controllers:
        raise ValidationError("nothing to report: the RIM grid is empty")
    bad = set(tables) - set(TABLES)
    if bad:
        raise ValidationError(f"unknown tables {sorted(bad)}")


def write_report(result: CampaignResult, out_dir, fmt: str = "csv", tables=None) -> list[Path]:
    """Write ``result`` under ``out_dir``; returns the paths written.

    ``tables`` restricts CSV output to a subset of :data:`TABLES` (the JSON
    summary and controller records are then skipped). All validation
    happens before the first file is created.
    """
    tables = TABLES if tables is None else tuple(tables)
    _check(result, fmt, tables)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    written = []
    if fmt == "csv":
        for name in tables:
            path = out / f"{name}.csv"
            _write(path, _csv_text(COLUMNS[name], _rows(result, name)))
            written.append(path)
        if tables == TABLES:
            written.append(write_controllers(
                result.controllers, result.config.chain, out / "controllers.json",
                result.metadata.get("config_hash"),
            ))
            path = out / "summary.json"
            _write(path, _json_text(_summary(result)))
            written.append(path)
    else:
        doc = _summary(result)
        doc["controllers"] = _controller_records(result.controllers, result.config.chain)
        doc["tables"] = {
            name: {"columns": list(COLUMNS[name]), "rows": [list(r) for r in _rows(result, name)]}
            for name in tables
        }
        path = out / "result.json"
        _write(path, _json_text(_to_builtin(doc)))
        written.append(path)
    return written


def _to_builtin(obj):
    if isinstance(obj, dict):
        return {k: _to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_builtin(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_controllers(records, spec, path, config_hash: str | None = None) -> Path:
    """Ranked controller records as JSON, one ``{M, J, source, target, biases, time}`` each."""
    path = Path(path)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash,
        "controllers": _controller_records(records, spec),
    }
    _write(path, _json_text(doc))
    return path


def write_trajectory(records, path) -> Path:
    path = Path(path)
    _write(path, _csv_text(COLUMNS["trajectory"], _trajectory_rows(records)))
    return path


def write_provenance(path, **fields) -> Path:
    path = Path(path)
    _write(path, _json_text(fields))
    return path


def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from None


def _check_schema(doc, path):
    found = doc.get("schema_version") if isinstance(doc, dict) else None
    if found != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"{path} has schema version {found}, this qrobust reads version {SCHEMA_VERSION}; "
            "regenerate it with the current release"
        )


def _parse_records(items, path) -> tuple[list[ControllerRecord], object]:
    records, spec = [], None
    for pos, item in enumerate(items):
        try:
            s, ctrl = controller_from_record(item)
        except (ValidationError, TypeError) as exc:
            raise ValidationError(f"{path}: controller {pos}: {exc}") from None
        if spec is not None and s != spec:
            raise ValidationError(f"{path}: controllers belong to different chains")
        spec = s
        records.append(ControllerRecord(
            id=int(item.get("id", pos)),
            controller=ctrl,
            objective=float(item.get("objective", float("nan"))),
            restart=item.get("restart"),
            calls_used=int(item.get("calls_used", 0)),
            status=str(item.get("status", "")),
        ))
    return records, spec


def read_controllers(path):
    """Controller records from a controllers file, plus their chain.

    Accepts the document written by :func:`write_controllers` or a bare list
    of ``{M, J, source, target, biases, time}`` records.
    """
    path = Path(path)
    doc = _read_json(path)
    if isinstance(doc, dict):
        _check_schema(doc, path)
        items = doc.get("controllers", [])
    elif isinstance(doc, list):
        items = doc
    else:
        raise ValidationError(f"{path}: expected a list of controller records")
    if not items:
        raise ValidationError(f"{path}: no controllers")
    return _parse_records(items, path)


def _read_csv(path: Path, columns):
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != tuple(columns):
        raise SchemaVersionError(f"{path}: header does not match schema version {SCHEMA_VERSION}")
    return rows[1:]


def _assemble(summary, records, tables) -> CampaignResult:
    config = CampaignConfig.from_dict(summary["config"])
    sig = list(config.sigma_sim_grid)
    ths = list(config.yield_thresholds)
    pos = {rec.id: i for i, rec in enumerate(records)}
    L, S, T = len(records), len(sig), len(ths)
    rim = np.full((L, S), np.nan)
    lo, hi = np.full((L, S), np.nan), np.full((L, S), np.nan)
    yields, worst = np.full((L, S, T), np.nan), np.full((L, S), np.nan)
    for cid, s, _p, r, _n, a, b in tables["rim_grid"]:
        i, j = pos[int(cid)], sig.index(float(s))
        rim[i, j], lo[i, j], hi[i, j] = float(r), float(a), float(b)
    for cid, s, th, y, w in tables["yield"]:
        i, j = pos[int(cid)], sig.index(float(s))
        yields[i, j, ths.index(float(th))] = float(y)
        worst[i, j] = float(w)
    curve = [ArimPoint(float(s), float(a), float(c0), float(c1), int(n))
             for s, _p, a, n, c0, c1 in tables["arim_curve"]]
    tau = [TauResult(float(t), int(c), int(d), int(ti), int(tj), float(pv),
                     float(sb), float(sj), float(al))
           for sb, sj, al, t, pv, c, d, ti, tj in tables["tau"]]
    traj = {}
    for cid, _restart, calls, value in tables["trajectory"]:
        traj.setdefault(int(cid), []).append((int(calls), float(value)))
    records = [
        ControllerRecord(rec.id, rec.controller, rec.objective, rec.restart,
                         rec.calls_used, rec.status, tuple(traj.get(rec.id, ())))
        for rec in records
    ]
    best = summary.get("best_controller")
    median = summary.get("median_controller")
    return CampaignResult(
        config=config,
        controllers=records,
        rim=rim, ci_lo=lo, ci_hi=hi, yields=yields, worst=worst,
        arim_curve=curve,
        tau=tau,
        tau_degenerate=[float(s) for s in summary.get("tau_degenerate_sigmas", [])],
        best_index=None if best is None else pos[best],
        median_index=None if median is None else pos[median],
        metadata=dict(summary.get("metadata", {})),
    )


def load_result(path) -> CampaignResult:
    """Read a result written by :func:`write_report` (a directory or ``result.json``).

    Raises
    ------
    SchemaVersionError
        If the files were written under a different schema version.
    """
    path = Path(path)
    if path.is_dir() and not (path / "summary.json").exists() and (path / "result.json").exists():
        path = path / "result.json"
    if path.is_file():
        doc = _read_json(path)
        _check_schema(doc, path)
        records, _ = _parse_records(doc.get("controllers", []), path)
        tables = {}
        for name in TABLES:
            t = doc.get("tables", {}).get(name, {"columns": list(COLUMNS[name]), "rows": []})
            if tuple(t["columns"]) != COLUMNS[name]:
                raise SchemaVersionError(f"{path}: table {name} does not match the schema")
            tables[name] = t["rows"]
        return _assemble(doc, records, tables)

    summary_path = path / "summary.json"
    summary = _read_json(summary_path)
    _check_schema(summary, summary_path)
    records, _ = read_controllers(path / "controllers.json")
    tables = {name: _read_csv(path / f"{name}.csv", COLUMNS[name]) for name in TABLES}
    return _assemble(summary, records, tables)
