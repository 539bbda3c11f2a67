"""Scenario JSON files: schema, line-anchored validation and conversion to Scenario.

Files hold geodetic positions (degrees, metres) and angles in degrees; this is
the only place they are converted to the local ENU frame and radians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .decision import PolicyConfig
from .environment import DynamicObstacle, Geofence, StaticObstacle, WorldState
from .errors import ScenarioError
from .geo_transform import GeodeticCoord, LocalFrame
from .global_planner import PlannerConfig
from .guidance import UavConstraints, Wind
from .local_planner import AvoidanceConfig
from .simulator import InterceptSpec, Scenario

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_LAT = {"type": "number", "minimum": -90, "maximum": 90}
_LON = {"type": "number", "exclusiveMinimum": -180, "maximum": 180}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "version": {"const": SCHEMA_VERSION},
    "name": {"type": "string"},
    "anchor": _obj({"lat": _LAT, "lon": _LON, "alt": _NUM}, ["lat", "lon"]),
    "geofence": _obj({
        "vertices": {"type": "array", "minItems": 3,
                     "items": {"type": "array", "prefixItems": [_LAT, _LON], "minItems": 2, "maxItems": 2}},
        "alt_min": _NUM, "alt_max": _NUM,
    }, ["vertices", "alt_min", "alt_max"]),
    "start": _obj({"lat": _LAT, "lon": _LON, "alt": _NUM, "heading_deg": _NUM}, ["lat", "lon", "alt"]),
    "uav": _obj({
        "r_min": _POS, "climb_rate_max": _POS, "v_cruise": _POS, "climb_angle_max_deg": _POS,
        "roll_max_deg": _POS, "pitch_max_deg": _POS, "pitch_min_deg": {"type": "number", "maximum": 0},
        "l1_period": _POS, "l1_damping": _POS, "l1_xtrack_i": _NONNEG, "l1_dist": {"type": ["number", "null"]},
    }),
    "wind": _obj({"speed": _NONNEG, "bearing_deg": _NUM}),
    "static_obstacles": {"type": "array", "items": _obj({
        "name": {"type": "string"}, "lat": _LAT, "lon": _LON, "radius": _POS, "height": _POS,
        "spawn_time": _NONNEG,
    }, ["lat", "lon", "radius", "height"])},
    "dynamic_obstacles": {"type": "array", "items": _obj({
        "name": {"type": "string"},
        "waypoints": {"type": "array", "minItems": 1,
                      "items": {"type": "array", "prefixItems": [_LAT, _LON, _NUM], "minItems": 3, "maxItems": 3}},
        "speed": _POS, "radius": _POS, "spawn_time": _NONNEG,
    }, ["waypoints", "speed", "radius"])},
    "intercepts": {"type": "array", "items": _obj({
        "name": {"type": "string"}, "spawn_time": _NONNEG, "distance": _POS, "speed": _POS,
        "radius": _POS, "travel": _POS,
    }, ["spawn_time"])},
    "planner": _obj({
        "delta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "k_milestones": {"oneOf": [{"const": "auto"}, {"type": "integer", "minimum": 1}]},
        "k_knn": {"type": "integer", "minimum": 1},
        "kmedoids_iters": {"type": "integer", "minimum": 1},
        "kmedoids_restarts": {"type": "integer", "minimum": 1},
        "revisit_k": _NONNEG,
        "samples_per_milestone": {"type": "integer", "minimum": 1},
        "sample_count": {"type": ["integer", "null"], "minimum": 1},
        "node_clearance": _NONNEG,
        "cruise_alt": _POS,
        "simplify": {"type": "boolean"},
    }),
    "avoidance": _obj({
        "d_buff": _NONNEG, "max_dodge_points": {"type": "integer", "minimum": 1}, "sample_step": _POS,
        "time_step": _POS, "guidance_margin": _NONNEG, "max_yaw_change_deg": _POS,
    }),
    "policy": _obj({
        "tti_local": _NONNEG, "tti_speed": _NONNEG, "horizon": _POS, "miss_margin": _NONNEG,
        "speed_quantum": _POS, "v_min_frac": _POS, "v_max_frac": _POS,
        "retry_cap": {"type": "integer", "minimum": 0},
    }),
    "simulation": _obj({
        "dt": _POS, "decision_every": {"type": "integer", "minimum": 1}, "fov_deg": _POS,
        "rng_seed": {"type": "integer", "minimum": 0}, "visit_radius": _POS, "raster": _POS,
    }),
}, ["version", "geofence", "start"])


class ScenarioFileError(ScenarioError):
    """Scenario file rejected; ``line`` is 1-based when known."""

    def __init__(self, message: str, source: str = "<scenario>", line: int | None = None, field: str = ""):
        self.source, self.line, self.field = source, line, field
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {field + ': ' if field else ''}{message}")


# ---- source positions ------------------------------------------------------

_DECODER = json.JSONDecoder()


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i] in " \t\r\n":
        i += 1
    return i


def locate_paths(text: str) -> dict[tuple, int]:
    """Character offset of every value (and object key) in a JSON document, by path.

    Keys map under ``path + (key, "__key__")`` so errors about a bad key can
    point at the key itself. The document must already be valid JSON.
    """
    out: dict[tuple, int] = {}

    def value(i: int, path: tuple) -> int:
        i = _skip_ws(text, i)
        out[path] = i
        if text[i] == "{":
            i = _skip_ws(text, i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                i = _skip_ws(text, i)
                key_at = i
                key, i = json.decoder.scanstring(text, i + 1)
                out[path + (key, "__key__")] = key_at
                i = _skip_ws(text, i) + 1  # colon
                i = _skip_ws(text, value(i, path + (key,)))
                if text[i] == "}":
                    return i + 1
                i += 1  # comma
        if text[i] == "[":
            i = _skip_ws(text, i + 1)
            if text[i] == "]":
                return i + 1
            k = 0
            while True:
                i = _skip_ws(text, value(i, path + (k,)))
                k += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        _, end = _DECODER.raw_decode(text, i)
        return end

    value(0, ())
    return out


def _line_of(text: str, offset: int) -> int:
    return text.count("\n", 0, offset) + 1


def _field_name(path) -> str:
    return "".join(f"[{p}]" if isinstance(p, int) else (f".{p}" if i else str(p)) for i, p in enumerate(path)) or "<root>"


def _schema_error(text: str, source: str, err: jsonschema.ValidationError) -> ScenarioFileError:
    path = tuple(err.absolute_path)
    positions = locate_paths(text)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        if extra:
            key_path = path + (extra[0], "__key__")
            line = _line_of(text, positions.get(key_path, positions.get(path, 0)))
            return ScenarioFileError(f"unknown key {extra[0]!r}", source, line, _field_name(path + (extra[0],)))
    p = path
    while p not in positions and p:
        p = p[:-1]
    return ScenarioFileError(err.message, source, _line_of(text, positions.get(p, 0)), _field_name(path))


# ---- loading ---------------------------------------------------------------

@dataclass
class LoadedScenario:
    scenario: Scenario
    document: dict
    frame: LocalFrame


def parse_document(text: str, source: str = "<scenario>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFileError(f"invalid JSON: {exc.msg}", source, exc.lineno) from exc
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        raise _schema_error(text, source, errors[0])
    return doc


def _rad(d: dict, key: str, default: float) -> float:
    return math.radians(d[key]) if key in d else default


def build_scenario(doc: dict, source: str = "<scenario>", seed: int | None = None) -> LoadedScenario:
    """Schema-valid document -> Scenario in a local ENU frame."""
    fence_doc = doc["geofence"]
    verts = np.asarray(fence_doc["vertices"], dtype=float)
    anchor_doc = doc.get("anchor") or {"lat": float(verts[:, 0].mean()), "lon": float(verts[:, 1].mean())}
    frame = LocalFrame(GeodeticCoord(anchor_doc["lat"], anchor_doc["lon"], anchor_doc.get("alt", 0.0)))

    def local(lat, lon, alt=0.0) -> np.ndarray:
        return frame.to_local_array(np.asarray(lat, float), np.asarray(lon, float), np.asarray(alt, float))

    def fail(msg: str, field: str) -> ScenarioFileError:
        return ScenarioFileError(msg, source, None, field)

    xy = local(verts[:, 0], verts[:, 1])[:, :2]
    try:
        fence = Geofence(tuple(map(tuple, xy.tolist())), fence_doc["alt_min"], fence_doc["alt_max"])
    except (ScenarioError, ValueError) as exc:
        raise fail(str(exc), "geofence") from exc

    statics = []
    for i, o in enumerate(doc.get("static_obstacles", [])):
        c = local(o["lat"], o["lon"])
        try:
            statics.append(StaticObstacle((float(c[0]), float(c[1])), o["radius"], o["height"],
                                          o.get("spawn_time", 0.0), o.get("name", f"static {i + 1}")))
        except (ScenarioError, ValueError) as exc:
            raise fail(str(exc), f"static_obstacles[{i}]") from exc
    dynamics = []
    for i, o in enumerate(doc.get("dynamic_obstacles", [])):
        w = np.asarray(o["waypoints"], dtype=float)
        pts = local(w[:, 0], w[:, 1], w[:, 2])
        try:
            dynamics.append(DynamicObstacle(tuple(map(tuple, pts.tolist())), o["speed"], o["radius"],
                                            o.get("spawn_time", 0.0), o.get("name", f"dynamic {i + 1}")))
        except (ScenarioError, ValueError) as exc:
            raise fail(str(exc), f"dynamic_obstacles[{i}]") from exc

    u = doc.get("uav", {})
    base = UavConstraints()
    cons = UavConstraints(
        r_min=u.get("r_min", base.r_min), climb_rate_max=u.get("climb_rate_max", base.climb_rate_max),
        v_cruise=u.get("v_cruise", base.v_cruise),
        climb_angle_max=_rad(u, "climb_angle_max_deg", base.climb_angle_max),
        roll_max=_rad(u, "roll_max_deg", base.roll_max), pitch_max=_rad(u, "pitch_max_deg", base.pitch_max),
        pitch_min=_rad(u, "pitch_min_deg", base.pitch_min), l1_period=u.get("l1_period", base.l1_period),
        l1_damping=u.get("l1_damping", base.l1_damping), l1_xtrack_i=u.get("l1_xtrack_i", base.l1_xtrack_i),
        l1_dist=u.get("l1_dist", base.l1_dist),
    )
    w = doc.get("wind", {})
    wind = Wind(w.get("speed", 0.0), _rad(w, "bearing_deg", 0.0))

    sim = doc.get("simulation", {})
    fov = _rad(sim, "fov_deg", math.radians(60.0))
    planner = PlannerConfig(fov=fov, **doc.get("planner", {}))
    av = dict(doc.get("avoidance", {}))
    if "max_yaw_change_deg" in av:
        av["max_yaw_change"] = math.radians(av.pop("max_yaw_change_deg"))
    avoidance = AvoidanceConfig(**{"guidance_margin": 10.0, **av})
    try:
        policy = PolicyConfig(v_cruise=cons.v_cruise, **doc.get("policy", {}))
    except ValueError as exc:
        raise fail(str(exc), "policy") from exc
    intercepts = tuple(InterceptSpec(**{"name": f"intruder {i + 1}", **s}) for i, s in enumerate(doc.get("intercepts", [])))

    st = doc["start"]
    start = local(st["lat"], st["lon"], st["alt"])
    scenario = Scenario(
        world=WorldState(fence, statics, dynamics), start=start,
        start_heading=_rad(st, "heading_deg", 0.0), constraints=cons, wind=wind, planner=planner,
        avoidance=avoidance, policy=policy, dt=sim.get("dt", 0.1), decision_every=sim.get("decision_every", 10),
        fov=fov, rng_seed=sim.get("rng_seed", 0) if seed is None else int(seed),
        visit_radius=sim.get("visit_radius", 60.0), intercepts=intercepts, frame=frame,
        name=doc.get("name", Path(source).stem), raster=sim.get("raster", 5.0),
    )
    try:
        scenario.validate()
    except ScenarioError as exc:
        field = "start" if "initial position" in str(exc) else "simulation"
        raise fail(str(exc), field) from exc
    return LoadedScenario(scenario, doc, frame)


def load_scenario(path, seed: int | None = None) -> LoadedScenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioFileError(f"cannot read file: {exc.strerror}", str(path)) from exc
    return build_scenario(parse_document(text, str(path)), str(path), seed)


def example_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("uavsurvey.scenarios").iterdir() if p.name.endswith(".json"))


def example_path(name: str) -> Path:
    p = resources.files("uavsurvey.scenarios") / f"{name}.json"
    if not p.is_file():
        raise FileNotFoundError(f"no example scenario {name!r}; available: {', '.join(example_names())}")
    return Path(str(p))
