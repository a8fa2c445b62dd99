"""Text file formats for instances, schedules, baseline plans and reports.

Instances, schedules and plans are JSON documents tagged with a format name
and version.  Matrices are written one row per line so files diff well.
Schedules refer to patients by their stable id, never by position.
Reports are the delimited results table.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baseline import BaselinePlan, Reservation
from .model import Calendar, Instance, InstanceError, Schedule
from .report import ExperimentReport

VERSION = 1
INSTANCE_FORMAT = "theatresched-instance"
SCHEDULE_FORMAT = "theatresched-schedule"
BASELINE_FORMAT = "theatresched-baseline"


class FormatError(ValueError):
    """A file does not match its format; ``path`` locates the bad field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


# writing -------------------------------------------------------------------

def _dump_value(value, indent: str) -> str:
    if isinstance(value, list) and value and isinstance(value[0], list):
        rows = ",\n".join(indent + "  " + json.dumps(row, separators=(",", ":")) for row in value)
        return "[\n" + rows + "\n" + indent + "]"
    return json.dumps(value, separators=(",", ":"))


def dumps_document(doc: dict) -> str:
    """JSON with one top-level key per line and one matrix row per line."""
    lines = [f"  {json.dumps(k)}: {_dump_value(v, '  ')}" for k, v in doc.items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def _bits(a) -> list:
    return np.asarray(a, dtype=int).tolist()


def instance_to_dict(inst: Instance) -> dict:
    cal = inst.calendar
    doc = {
        "format": INSTANCE_FORMAT,
        "version": VERSION,
        "surgeons": inst.num_surgeons,
        "patients": inst.num_patients,
        "specialties": inst.num_specialties,
        "ors": inst.num_ors,
        "blocks_per_week": cal.blocks_per_week,
        "weeks": cal.num_weeks,
        "m_psi": inst.max_nonelective_per_block,
        "m_p": inst.max_elective_per_block,
        "xi": inst.weekend_or_limit,
        "calendar": {"weekend_days": _bits(cal.weekend_days), "blocks_per_day": 3,
                     "full_day_hours": inst.full_day_hours, "half_day_hours": inst.half_day_hours},
        "is_full_day": _bits(inst.is_full_day),
        "is_weekend": _bits(inst.is_weekend),
        "block_week": _bits(cal.block_week),
        "specialty_names": list(inst.specialty_names),
        "weekly_nonelective_target": _bits(inst.weekly_nonelective_target),
        "duration_params": np.asarray(inst.duration_params, float).tolist(),
        "nonelective_duration_params": None,
        "arrival_rates": None,
        "urgency_mix": list(inst.urgency_mix),
        "or_equipped": _bits(inst.or_equipped),
        "surgeon_specialty": _bits(inst.surgeon_specialty),
        "surgeon_available": _bits(inst.surgeon_available),
        "patient_ids": _bits(inst.patient_ids),
        "patient_urgency": _bits(inst.patient_urgency),
        "patient_wait_days": _bits(inst.patient_wait_days),
        "patient_specialty": _bits(inst.patient_specialty),
        "can_treat": _bits(inst.can_treat),
    }
    if inst.nonelective_duration_params is not None:
        # NaN rows mean "same as elective"; JSON has no NaN, so they become null
        doc["nonelective_duration_params"] = [
            None if np.isnan(row).any() else row.tolist()
            for row in np.asarray(inst.nonelective_duration_params, float)]
    if inst.arrival_rates is not None:
        doc["arrival_rates"] = np.asarray(inst.arrival_rates, float).tolist()
    return doc


def schedule_to_dict(schedule: Schedule, inst: Instance) -> dict:
    ids = inst.patient_ids
    return {
        "format": SCHEDULE_FORMAT,
        "version": VERSION,
        "specialty_assign": [list(e) for e in sorted(schedule.specialty_assign)],
        "surgeon_assign": [list(e) for e in sorted(schedule.surgeon_assign)],
        "patient_assign": sorted([int(ids[p]), r, t] for p, r, t in schedule.patient_assign),
        "nonelective_reserve": [[s, r, t, int(v)]
                                for (s, r, t), v in sorted(schedule.nonelective_reserve.items()) if v],
    }


def baseline_to_dict(plan: BaselinePlan) -> dict:
    return {
        "format": BASELINE_FORMAT,
        "version": VERSION,
        "reservations": [[e.specialty, e.ors, e.block, e.count, e.surgeon]
                         for e in sorted(plan.reservations)],
    }


# reading -------------------------------------------------------------------

class _Reader:
    """Typed field access that reports failures with their location."""

    def __init__(self, doc, fmt: str):
        if not isinstance(doc, dict):
            raise FormatError("", "document must be an object")
        if doc.get("format") != fmt:
            raise FormatError("format", f"expected {fmt!r}, found {doc.get('format')!r}")
        if doc.get("version") != VERSION:
            raise FormatError("version", f"unsupported version {doc.get('version')!r}"
                                         f" (this reader understands {VERSION})")
        self.doc = doc

    def get(self, key, default=...):
        if key not in self.doc:
            if default is ...:
                raise FormatError(key, "missing field")
            return default
        return self.doc[key]

    def integer(self, key, lo=0) -> int:
        v = self.get(key)
        if not isinstance(v, int) or isinstance(v, bool) or v < lo:
            raise FormatError(key, f"expected an integer >= {lo}, found {v!r}")
        return v

    def number(self, value, path) -> float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise FormatError(path, f"expected a number, found {value!r}")
        return float(value)

    def vector(self, key, n, kind="int", value=None):
        v = self.get(key) if value is None else value
        if not isinstance(v, list) or len(v) != n:
            raise FormatError(key, f"expected a list of length {n}")
        for i, x in enumerate(v):
            self._check(x, kind, f"{key}[{i}]")
        return v

    def matrix(self, key, rows, cols, kind="bit"):
        v = self.get(key)
        if not isinstance(v, list) or len(v) != rows:
            raise FormatError(key, f"expected {rows} rows")
        for i, row in enumerate(v):
            if not isinstance(row, list) or len(row) != cols:
                raise FormatError(f"{key}[{i}]", f"expected {cols} columns")
            for j, x in enumerate(row):
                self._check(x, kind, f"{key}[{i}][{j}]")
        return v

    def _check(self, x, kind, path):
        if kind == "bit":
            if x not in (0, 1) or isinstance(x, float):
                raise FormatError(path, f"expected 0 or 1, found {x!r}")
        elif kind == "int":
            if not isinstance(x, int) or isinstance(x, bool):
                raise FormatError(path, f"expected an integer, found {x!r}")
        elif kind == "number":
            self.number(x, path)


def instance_from_dict(doc) -> Instance:
    rd = _Reader(doc, INSTANCE_FORMAT)
    H, P, S = rd.integer("surgeons"), rd.integer("patients"), rd.integer("specialties")
    R, weeks = rd.integer("ors"), rd.integer("weeks", 1)
    cal_doc = rd.get("calendar")
    if not isinstance(cal_doc, dict):
        raise FormatError("calendar", "expected an object")
    days = cal_doc.get("weekend_days")
    if not isinstance(days, list) or not days or any(x not in (0, 1) for x in days):
        raise FormatError("calendar.weekend_days", "expected a non-empty list of 0/1")
    if cal_doc.get("blocks_per_day", 3) != 3:
        raise FormatError("calendar.blocks_per_day", "only three blocks per day are supported")
    cal = Calendar(tuple(bool(x) for x in days), weeks)
    if rd.integer("blocks_per_week", 1) != cal.blocks_per_week:
        raise FormatError("blocks_per_week", f"calendar implies {cal.blocks_per_week}")
    T = cal.num_blocks
    for key, derived in (("is_full_day", cal.is_full_day), ("is_weekend", cal.is_weekend),
                         ("block_week", cal.block_week)):
        got = rd.vector(key, T)
        bad = next((i for i, (a, b) in enumerate(zip(got, derived.tolist())) if int(a) != int(b)), None)
        if bad is not None:
            raise FormatError(f"{key}[{bad}]", "disagrees with the calendar")

    hours = {k: rd.number(cal_doc.get(k, d), f"calendar.{k}")
             for k, d in (("full_day_hours", 10.0), ("half_day_hours", 5.0))}
    durations = rd.matrix("duration_params", S, 2, "number")
    non_el = rd.get("nonelective_duration_params", None)
    if non_el is not None:
        if not isinstance(non_el, list) or len(non_el) != S:
            raise FormatError("nonelective_duration_params", f"expected {S} rows")
        rows = []
        for i, row in enumerate(non_el):
            if row is None:
                rows.append([np.nan, np.nan])
            else:
                rows.append(rd.vector(f"nonelective_duration_params[{i}]", 2, "number", row))
        non_el = rows
    rates = rd.get("arrival_rates", None)
    if rates is not None:
        rates = rd.vector("arrival_rates", S, "number")
    mix = rd.vector("urgency_mix", 3, "number")
    names = rd.get("specialty_names", [])
    if not isinstance(names, list) or (names and len(names) != S) or not all(isinstance(n, str) for n in names):
        raise FormatError("specialty_names", f"expected {S} strings or an empty list")

    try:
        return Instance(
            calendar=cal,
            num_ors=R,
            surgeon_specialty=np.array(rd.matrix("surgeon_specialty", H, S), bool).reshape(H, S),
            surgeon_available=np.array(rd.matrix("surgeon_available", H, T), bool).reshape(H, T),
            can_treat=np.array(rd.matrix("can_treat", P, H), bool).reshape(P, H),
            patient_specialty=np.array(rd.matrix("patient_specialty", P, S), bool).reshape(P, S),
            or_equipped=np.array(rd.matrix("or_equipped", R, S), bool).reshape(R, S),
            weekly_nonelective_target=rd.vector("weekly_nonelective_target", S),
            duration_params=np.array(durations, float).reshape(S, 2),
            patient_urgency=rd.vector("patient_urgency", P),
            patient_wait_days=rd.vector("patient_wait_days", P),
            patient_ids=rd.vector("patient_ids", P),
            nonelective_duration_params=None if non_el is None else np.array(non_el, float).reshape(S, 2),
            max_nonelective_per_block=rd.integer("m_psi"),
            max_elective_per_block=rd.integer("m_p"),
            weekend_or_limit=rd.integer("xi"),
            full_day_hours=hours["full_day_hours"],
            half_day_hours=hours["half_day_hours"],
            specialty_names=tuple(names),
            arrival_rates=None if rates is None else np.array(rates, float),
            urgency_mix=tuple(mix),
        )
    except InstanceError as exc:
        raise FormatError("", f"inconsistent instance: {exc}") from exc


def _triples(rd: _Reader, key: str, width: int, limits) -> list[tuple]:
    v = rd.get(key)
    if not isinstance(v, list):
        raise FormatError(key, "expected a list")
    out = []
    for i, e in enumerate(v):
        if not isinstance(e, list) or len(e) != width:
            raise FormatError(f"{key}[{i}]", f"expected {width} integers")
        for j, (x, hi) in enumerate(zip(e, limits)):
            if not isinstance(x, int) or isinstance(x, bool) or x < 0 or (hi is not None and x >= hi):
                raise FormatError(f"{key}[{i}][{j}]", f"value {x!r} out of range")
        out.append(tuple(e))
    return out


def schedule_from_dict(doc, inst: Instance) -> Schedule:
    rd = _Reader(doc, SCHEDULE_FORMAT)
    S, R, H, T = inst.num_specialties, inst.num_ors, inst.num_surgeons, inst.num_blocks
    index = inst.patient_index
    placed = []
    for i, (pid, r, t) in enumerate(_triples(rd, "patient_assign", 3, (None, R, T))):
        if pid not in index:
            raise FormatError(f"patient_assign[{i}][0]", f"unknown patient id {pid}")
        placed.append((index[pid], r, t))
    reserve = {}
    for s, r, t, v in _triples(rd, "nonelective_reserve", 4, (S, R, T, None)):
        reserve[s, r, t] = v
    return Schedule(set(_triples(rd, "specialty_assign", 3, (S, R, T))),
                    set(_triples(rd, "surgeon_assign", 3, (H, R, T))),
                    set(placed), reserve)


def baseline_from_dict(doc, inst: Instance | None = None) -> BaselinePlan:
    rd = _Reader(doc, BASELINE_FORMAT)
    limits = (None,) * 5
    if inst is not None:
        limits = (inst.num_specialties, inst.num_ors, inst.num_blocks, None, inst.num_surgeons)
    return BaselinePlan(sorted(Reservation(*e) for e in _triples(rd, "reservations", 5, limits)))


# files ---------------------------------------------------------------------

def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError("", f"{path}: not valid JSON (line {exc.lineno}, column {exc.colno})") from exc


def _write(path, text: str) -> None:
    Path(path).write_text(text)


def save_instance(inst: Instance, path) -> None:
    _write(path, dumps_document(instance_to_dict(inst)))


def load_instance(path) -> Instance:
    return instance_from_dict(_read_json(path))


def save_schedule(schedule: Schedule, inst: Instance, path) -> None:
    _write(path, dumps_document(schedule_to_dict(schedule, inst)))


def load_schedule(path, inst: Instance) -> Schedule:
    return schedule_from_dict(_read_json(path), inst)


def save_baseline(plan: BaselinePlan, path) -> None:
    _write(path, dumps_document(baseline_to_dict(plan)))


def load_baseline(path, inst: Instance | None = None) -> BaselinePlan:
    return baseline_from_dict(_read_json(path), inst)


def save_report(report: ExperimentReport, path, timing: bool = True) -> None:
    _write(path, report.to_csv(timing))


def load_report(path) -> ExperimentReport:
    text = Path(path).read_text()
    try:
        return ExperimentReport.from_csv(text)
    except (KeyError, ValueError) as exc:
        raise FormatError("", f"{path}: not a results table ({exc})") from exc


def load_mendeley(directory) -> Instance:
    """Adapter for the public hospital waiting-list dataset layout.

    Only the interface exists: the dataset is not bundled, so there is no
    layout to test a parser against.
    """
    raise NotImplementedError(
        f"reading the published waiting-list dataset is not supported; convert {directory} "
        "to the instance format (see save_instance) instead")
