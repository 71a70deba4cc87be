"""Track and profile file formats.

``TrackFile`` (input, JSON)::

    {
      "units": {"length": "m", "angle": "rad", "w": "m^2/s^2", ...},   # optional
      "h": 1.0,
      "slope_rad": [...],            # n-1 entries
      "w_max": [...] | "v_max": [...],   # exactly one, n entries (w = v^2/2)
      "w_init": 16.0, "w_fin": 16.0,
      "vehicle": {"M": ..., "P_max": ..., "mu": ..., "c": ...,
                  "gamma": ... | "rho": ..., "A_f": ..., "c_d": ...,
                  "g": 9.81},        # g optional
      "weights": {"lambda": 0.0, "eta": 0.0}   # optional
    }

A CSV file with columns ``s, alpha_rad, v_max`` can replace the arrays; it
is resampled to a uniform step (see :func:`track_from_csv`).

``ProfileFile`` (output, JSON) embeds the track and carries the solution
arrays, the bounds used, objective, exactness summary, assumption report and
solver statistics.  Floats are written with ``repr`` precision, so a write /
read cycle is lossless.
"""

from dataclasses import dataclass, field
import csv
import json
import math

import jsonschema
import numpy as np

from .errors import InvalidArgumentError, SpeedPlanError
from .model import TrackInstance, VehicleParams

UNITS = {
    "length": "m",
    "angle": "rad",
    "w": "m^2/s^2",
    "v": "m/s",
    "f": "m/s^2",
    "mass": "kg",
    "power": "W",
    "gamma": "1/m",
    "lambda": "s/J",
    "objective": "s",
}

_NUM = {"type": "number"}
_ARR = {"type": "array", "items": {"type": "number"}, "minItems": 1}

TRACK_SCHEMA = {
    "type": "object",
    "required": ["h", "slope_rad", "w_init", "w_fin", "vehicle"],
    "properties": {
        "units": {"type": "object", "additionalProperties": {"type": "string"}},
        "h": _NUM,
        "slope_rad": {"type": "array", "items": {"type": "number"}},
        "w_max": _ARR,
        "v_max": _ARR,
        "w_init": _NUM,
        "w_fin": _NUM,
        "vehicle": {
            "type": "object",
            "required": ["M", "P_max", "mu", "c"],
            "properties": {k: _NUM for k in ("M", "P_max", "mu", "c", "gamma", "rho", "A_f",
                                             "c_d", "g")},
            "additionalProperties": False,
        },
        "weights": {
            "type": "object",
            "properties": {"lambda": _NUM, "eta": _NUM},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class SchemaError(SpeedPlanError, ValueError):
    """Input document does not match its schema; ``path`` is dotted."""

    def __init__(self, path, message):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
        self.detail = message


def _error_path(err):
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        if missing:
            parts.append(missing[0])
    elif err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        if extra:
            parts.append(extra[0])
    return ".".join(parts)


def validate_track_document(doc):
    """Raise :class:`SchemaError` (with a dotted field path) on the first problem."""
    errors = sorted(jsonschema.Draft202012Validator(TRACK_SCHEMA).iter_errors(doc),
                    key=lambda e: (len(list(e.absolute_path)), _error_path(e)))
    if errors:
        err = errors[0]
        raise SchemaError(_error_path(err), err.message)
    veh = doc["vehicle"]
    drag = [k for k in ("rho", "A_f", "c_d") if k in veh]
    if "gamma" in veh and drag:
        raise SchemaError("vehicle.gamma", "give either gamma or (rho, A_f, c_d), not both")
    if "gamma" not in veh and len(drag) != 3:
        missing = [k for k in ("rho", "A_f", "c_d") if k not in veh]
        if drag:
            raise SchemaError(f"vehicle.{missing[0]}", "incomplete drag triple (rho, A_f, c_d)")
        raise SchemaError("vehicle.gamma", "one of gamma or (rho, A_f, c_d) is required")
    if ("w_max" in doc) == ("v_max" in doc):
        raise SchemaError("w_max", "exactly one of w_max or v_max is required")
    limits = "w_max" if "w_max" in doc else "v_max"
    n = len(doc[limits])
    if n < 2:
        raise SchemaError(limits, "need at least two positions")
    if len(doc["slope_rad"]) != n - 1:
        raise SchemaError("slope_rad", f"expected {n - 1} entries (n-1), got {len(doc['slope_rad'])}")
    for key, unit in doc.get("units", {}).items():
        if key in UNITS and unit != UNITS[key]:
            raise SchemaError(f"units.{key}", f"expected {UNITS[key]!r}, got {unit!r}")


def track_from_dict(doc):
    """Validate a TrackFile document and build a :class:`TrackInstance`."""
    validate_track_document(doc)
    veh = doc["vehicle"]
    extra = {"g": veh["g"]} if "g" in veh else {}
    if "gamma" in veh:
        vehicle = VehicleParams(M=veh["M"], P_max=veh["P_max"], mu=veh["mu"], c=veh["c"],
                                gamma=veh["gamma"], **extra)
    else:
        vehicle = VehicleParams.from_drag(veh["M"], veh["P_max"], veh["mu"], veh["c"], veh["rho"],
                                          veh["A_f"], veh["c_d"], **extra)
    if "w_max" in doc:
        w_max = np.asarray(doc["w_max"], dtype=float)
    else:
        w_max = 0.5 * np.asarray(doc["v_max"], dtype=float) ** 2
    weights = doc.get("weights", {})
    return TrackInstance(h=doc["h"], alpha=doc["slope_rad"], w_max=w_max, w_init=doc["w_init"],
                         w_fin=doc["w_fin"], vehicle=vehicle, lam=weights.get("lambda", 0.0),
                         eta=weights.get("eta", 0.0))


def track_to_dict(instance):
    v = instance.vehicle
    return {
        "units": dict(UNITS),
        "h": instance.h,
        "slope_rad": [float(a) for a in instance.alpha],
        "w_max": [float(w) for w in instance.w_max],
        "w_init": instance.w_init,
        "w_fin": instance.w_fin,
        "vehicle": {"M": v.M, "P_max": v.P_max, "mu": v.mu, "c": v.c, "gamma": v.gamma, "g": v.g},
        "weights": {"lambda": instance.lam, "eta": instance.eta},
    }


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"not valid JSON ({exc})") from None


def load_track(path, base=None):
    """Read a TrackFile; ``.csv`` paths need ``base`` (a dict or JSON path)
    supplying ``h``, boundary values, vehicle and weights."""
    if str(path).lower().endswith(".csv"):
        if base is None:
            raise InvalidArgumentError("CSV tracks need a base document (h, vehicle, boundary values)")
        if not isinstance(base, dict):
            base = _read_json(base)
        return track_from_dict(track_from_csv(path, base))
    return track_from_dict(_read_json(path))


def save_track(instance, path):
    with open(path, "w") as fh:
        json.dump(track_to_dict(instance), fh, indent=2)


def read_csv_columns(path):
    """Columns ``s, alpha_rad, v_max`` as float arrays (header required)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = ("s", "alpha_rad", "v_max")
        if reader.fieldnames is None or any(k not in reader.fieldnames for k in need):
            raise SchemaError("csv", f"header must contain columns {', '.join(need)}")
        rows = [(float(r["s"]), float(r["alpha_rad"]), float(r["v_max"])) for r in reader]
    if len(rows) < 2:
        raise SchemaError("csv", "need at least two rows")
    s, alpha, vmax = (np.array(c) for c in zip(*rows))
    if np.any(np.diff(s) <= 0):
        raise SchemaError("csv.s", "arc length must be strictly increasing")
    return s, alpha, vmax


def resample(s, alpha, v_max, h):
    """Uniform grid ``s_0 + k h`` covering ``[s_0, s_end]`` (the last point is
    kept only if it fits a whole step).  Speed limits are linearly
    interpolated at the positions, slopes at segment midpoints."""
    if not h > 0:
        raise InvalidArgumentError("h must be > 0")
    steps = int(math.floor((s[-1] - s[0]) / h + 1e-9))
    if steps < 1:
        raise InvalidArgumentError("track shorter than one step")
    pos = s[0] + h * np.arange(steps + 1)
    mid = pos[:-1] + 0.5 * h
    return np.interp(mid, s, alpha), np.interp(pos, s, v_max)


def track_from_csv(path, base):
    """TrackFile document from a CSV profile plus a base document."""
    s, alpha, vmax = read_csv_columns(path)
    if "h" not in base:
        raise SchemaError("h", "base document must give the resampling step h")
    slopes, v = resample(s, alpha, vmax, float(base["h"]))
    doc = {k: val for k, val in base.items() if k not in ("slope_rad", "w_max", "v_max")}
    doc["slope_rad"] = slopes.tolist()
    doc["v_max"] = v.tolist()
    return doc


# ---------------------------------------------------------------------------
# profiles


def _floats(x):
    return None if x is None else [float(v) for v in x]


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class ProfileDocument:
    track: dict
    status: str
    mode: str
    tightened: bool
    w: list = None
    v: list = None
    f: list = None
    t: list = None
    bounds: dict = field(default_factory=dict)
    objective: dict = field(default_factory=dict)
    exactness: dict = field(default_factory=dict)
    assumptions: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    FORMAT = "speedplan-profile/1"

    def to_dict(self):
        return {
            "format": self.FORMAT,
            "units": dict(UNITS),
            "track": self.track,
            "status": self.status,
            "mode": self.mode,
            "tightened": self.tightened,
            "w": self.w, "v": self.v, "f": self.f, "t": self.t,
            "bounds": self.bounds,
            "objective": self.objective,
            "exactness": self.exactness,
            "assumptions": self.assumptions,
            "solver": self.solver,
            "diagnostics": list(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or d.get("format") != cls.FORMAT:
            raise SchemaError("format", f"expected {cls.FORMAT!r}")
        for key in ("track", "status", "mode", "tightened"):
            if key not in d:
                raise SchemaError(key, "missing")
        validate_track_document(d["track"])
        doc = cls(track=d["track"], status=d["status"], mode=d["mode"], tightened=d["tightened"],
                  w=d.get("w"), v=d.get("v"), f=d.get("f"), t=d.get("t"),
                  bounds=d.get("bounds") or {}, objective=d.get("objective") or {},
                  exactness=d.get("exactness") or {}, assumptions=d.get("assumptions") or {},
                  solver=d.get("solver") or {}, diagnostics=d.get("diagnostics") or [])
        doc.check_lengths()
        return doc

    @property
    def n(self):
        limits = self.track.get("w_max", self.track.get("v_max"))
        return len(limits)

    def check_lengths(self):
        n = self.n
        want = {"w": n, "v": n, "f": n - 1, "t": n - 1}
        for key, length in want.items():
            arr = getattr(self, key)
            if arr is None:
                continue
            if not isinstance(arr, list) or len(arr) != length:
                raise SchemaError(key, f"expected {length} entries")
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in arr):
                raise SchemaError(key, "entries must be numbers")
        for key, arr in self.bounds.items():
            if arr is not None and (not isinstance(arr, list) or len(arr) != n):
                raise SchemaError(f"bounds.{key}", f"expected {n} entries")

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        return cls.from_dict(_read_json(path))


def profile_from_report(instance, report):
    """Build a :class:`ProfileDocument` from a planning report."""
    prof = report.profile
    verdict = report.verdict
    bounds = {
        "l": _floats(report.lower_recursion),
        "u": _floats(report.upper_recursion),
        "z": _floats(verdict.z) if verdict is not None and verdict.feasible else None,
        "y": _floats(verdict.y) if verdict is not None and verdict.feasible else None,
    }
    doc = ProfileDocument(track=track_to_dict(instance), status=report.status, mode=report.mode,
                          tightened=report.tightened, bounds=bounds,
                          assumptions=report.assumptions.to_dict(),
                          diagnostics=list(report.diagnostics))
    if report.infeasible_index is not None:
        doc.exactness = {"infeasible_index": report.infeasible_index}
    if prof is not None:
        doc.w, doc.v, doc.f, doc.t = (_floats(x) for x in (prof.w, prof.v, prof.f, prof.t))
        doc.objective = {"energy_term": prof.energy_term, "time_term": prof.time_term,
                         "total": prof.total, "relaxed": _num(prof.relaxed_objective)}
        ex = prof.exactness
        doc.exactness = {"max_residual": ex.max_residual, "r": ex.tail_length_r,
                         "violated": list(ex.violated), "suffix_structure": ex.suffix_structure,
                         "residuals": _floats(ex.residuals), "polish_shift": prof.polish_shift}
    if report.outcome is not None:
        doc.solver = {k: (_num(v) if isinstance(v, float) else v)
                      for k, v in report.outcome.solver_stats.items()}
        doc.solver["status"] = report.outcome.status
    return doc
