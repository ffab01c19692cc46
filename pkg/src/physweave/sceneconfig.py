"""Physics scene configuration: parsing, defaults, validation, emission.

Accepts the machine-generated JSON config format (both the
{"objects": ..., "forces": ...} object form and the legacy bare-array
form), tolerates prose around the JSON, fills every missing parameter from
the built-in default tables, and downgrades unknown material kinds /
invalid force kinds to warnings instead of failures.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

MATERIAL_KINDS = (
    "rigid", "mpm_elastic", "mpm_elastoplastic", "mpm_sand", "mpm_liquid",
    "mpm_snow", "mpm_muscle", "pbd_elastic", "pbd_cloth", "pbd_liquid",
    "pbd_particle",
)
FORCE_KINDS = ("constant", "wind", "point", "drag", "vortex", "turbulence",
               "noise")
FALLBACK_MATERIAL = "mpm_elastic"

# default parameter tables, field-for-field
_MATERIAL_TABLE = {
    "rigid":             {"rho": 200.0, "extras": {"friction": 0.7}},
    "mpm_elastic":       {"E": 3e5, "nu": 0.2, "rho": 1000.0,
                          "extras": {"model": "corotation"}},
    "mpm_elastoplastic": {"E": 3e4, "nu": 0.4, "rho": 100.0,
                          "extras": {"use_von_mises": True,
                                     "yield_stress": 1e4}},
    "mpm_sand":          {"E": 5e5, "nu": 0.2, "rho": 1800.0,
                          "extras": {"friction_angle": 45.0}},
    "mpm_liquid":        {"E": 1e6, "nu": 0.2, "rho": 1000.0,
                          "extras": {"viscous": False}},
    "mpm_snow":          {"E": 1e6, "nu": 0.2, "rho": 1000.0,
                          "extras": {"yield_lower": 0.025,
                                     "yield_higher": 0.0045}},
    "mpm_muscle":        {"E": 1e6, "nu": 0.2, "rho": 1000.0,
                          "extras": {"model": "Neo-Hookean"}},
    "pbd_elastic":       {"rho": 1000.0,
                          "extras": {"stretch_compliance": 0.0,
                                     "bending_compliance": 0.0,
                                     "volume_compliance": 0.0,
                                     "relaxation": 0.1}},
    "pbd_cloth":         {"rho": 4.0,  # kg/m^2
                          "extras": {"stretch_compliance": 1e-7,
                                     "bending_compliance": 1e-5,
                                     "air_resistance": 1e-3}},
    "pbd_liquid":        {"rho": 1000.0,
                          "extras": {"density_relaxation": 0.2,
                                     "viscosity_relaxation": 0.01}},
    "pbd_particle":      {"rho": 1000.0, "extras": {}},
}

_FORCE_TABLE = {
    "constant":   {"direction": [0.0, 0.0, -1.0], "strength": 9.8},
    "wind":       {"direction": [1.0, 0.0, 0.0], "strength": 1.0,
                   "radius": 1.0},
    "point":      {"strength": 1.0, "position": [0.0, 0.0, 0.0],
                   "falloff_power": 0.0},
    "drag":       {"linear": 0.0, "quadratic": 0.0},
    "vortex":     {"direction": [0.0, 0.0, 1.0],
                   "perpendicular_strength": 20.0},
    "turbulence": {"strength": 1.0, "frequency": 3.0},
    "noise":      {"strength": 1.0},
}

# plausibility bands used by validate_config (guidance ranges)
NU_TYPICAL = (0.2, 0.45)
E_TYPICAL = (1e3, 1e6)
RHO_TYPICAL = (50.0, 2500.0)

_DEFAULT_SIM = {"dt": 0.004, "substeps": 10, "steps": 300, "render_fps": 60}


@dataclass
class MaterialSpec:
    kind: str
    E: float | None = None
    nu: float | None = None
    rho: float = 1000.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MATERIAL_KINDS:
            raise ConfigError(f"unknown material kind {self.kind!r}")
        if self.rho is None or self.rho <= 0:
            raise ConfigError(f"density must be > 0, got {self.rho}")
        if self.nu is not None and not (0.0 <= self.nu < 0.5):
            raise ConfigError(f"Poisson ratio must be in [0, 0.5), typical "
                              f"0.2-0.45; got {self.nu}")
        if self.E is not None and self.E <= 0:
            raise ConfigError(f"Young's modulus must be > 0, got {self.E}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "rho": self.rho}
        if self.E is not None:
            out["E"] = self.E
        if self.nu is not None:
            out["nu"] = self.nu
        out["extras"] = dict(sorted(self.extras.items()))
        return out


@dataclass
class ForceFieldSpec:
    kind: str
    direction: tuple = (0.0, 0.0, -1.0)
    strength: float = 0.0
    position: tuple | None = None
    radius: float | None = None
    falloff_power: float | None = None
    linear: float | None = None
    quadratic: float | None = None
    frequency: float | None = None
    perpendicular_strength: float | None = None
    start_frame: int = -1

    def __post_init__(self):
        if self.kind not in FORCE_KINDS:
            raise ConfigError(f"unknown force kind {self.kind!r}")
        if self.start_frame < -1:
            raise ConfigError("start_frame must be >= -1")
        self.direction = tuple(float(c) for c in self.direction)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "direction": list(self.direction),
               "strength": self.strength, "start_frame": self.start_frame}
        for key in ("position", "radius", "falloff_power", "linear",
                    "quadratic", "frequency", "perpendicular_strength"):
            val = getattr(self, key)
            if val is not None:
                out[key] = list(val) if isinstance(val, tuple) else val
        return out


@dataclass
class ObjectSpec:
    index: int
    name: str = ""
    material: MaterialSpec = None  # type: ignore[assignment]
    fixed: bool = False
    surface_color: tuple = (0.7, 0.7, 0.7)
    mesh_ref: str = ""
    fix_top_ratio: float | None = None

    def __post_init__(self):
        if self.material is None:
            self.material = material_defaults(FALLBACK_MATERIAL)
        self.surface_color = tuple(float(c) for c in self.surface_color)
        if any(c < 0.0 or c > 1.0 for c in self.surface_color):
            raise ConfigError(f"surface_color out of [0,1]: {self.surface_color}")

    def to_dict(self) -> dict:
        out = {"index": self.index, "name": self.name,
               "material": self.material.to_dict(), "fixed": self.fixed,
               "surface_color": list(self.surface_color),
               "mesh_ref": self.mesh_ref}
        if self.fix_top_ratio is not None:
            out["fix_top_ratio"] = self.fix_top_ratio
        return out


@dataclass
class SceneConfig:
    objects: list = field(default_factory=list)
    forces: list = field(default_factory=list)
    sim: dict = field(default_factory=lambda: dict(_DEFAULT_SIM))
    background_ref: str = ""
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"objects": [o.to_dict() for o in self.objects],
                "forces": [f.to_dict() for f in self.forces],
                "sim": dict(sorted(self.sim.items())),
                "background_ref": self.background_ref}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def material_defaults(kind: str) -> MaterialSpec:
    """Default-parameter MaterialSpec for one of the 11 supported kinds."""
    if kind not in _MATERIAL_TABLE:
        raise ConfigError(f"unknown material kind {kind!r}")
    row = _MATERIAL_TABLE[kind]
    return MaterialSpec(kind=kind, E=row.get("E"), nu=row.get("nu"),
                        rho=row["rho"], extras=copy.deepcopy(row["extras"]))


def force_defaults(kind: str) -> ForceFieldSpec:
    """Default-parameter ForceFieldSpec for one of the 7 supported kinds."""
    if kind not in _FORCE_TABLE:
        raise ConfigError(f"unknown force kind {kind!r}")
    row = _FORCE_TABLE[kind]
    spec = ForceFieldSpec(kind=kind)
    for key, val in row.items():
        setattr(spec, key, tuple(val) if isinstance(val, list) else val)
    return spec


def _extract_json(text: str):
    """Locate and decode the first JSON value in possibly-noisy text."""
    stripped = text.strip()
    if stripped.startswith("```"):
        lines = [ln for ln in stripped.splitlines()
                 if not ln.strip().startswith("```")]
        stripped = "\n".join(lines)
    decoder = json.JSONDecoder()
    starts = [i for i, ch in enumerate(stripped) if ch in "{["]
    for i in starts:
        try:
            value, _ = decoder.raw_decode(stripped, i)
            return value
        except json.JSONDecodeError:
            continue
    raise ConfigError("no JSON object or array found in config text")


_MATERIAL_FIELD_KEYS = {"material_type", "type", "kind"}
_KNOWN_NUMERIC = {"E", "nu", "rho"}
_OBJ_KEYS = {"index", "name", "fixed", "surface_color", "mesh_ref",
             "fix_top_ratio", "material", "material_params", "object"}


def _parse_material(obj: dict, warnings: list) -> MaterialSpec:
    raw_kind = None
    for key in ("material_type", "kind", "type"):
        if key in obj:
            raw_kind = obj[key]
            break
    mat_block = obj.get("material") if isinstance(obj.get("material"), dict) else {}
    if raw_kind is None and mat_block:
        for key in ("material_type", "kind", "type"):
            if key in mat_block:
                raw_kind = mat_block[key]
                break
    if raw_kind is None:
        raw_kind = FALLBACK_MATERIAL
        warnings.append("object without material kind; using "
                        f"{FALLBACK_MATERIAL}")
    kind = str(raw_kind)
    if kind not in MATERIAL_KINDS:
        warnings.append(f"unknown material type {kind!r}; falling back to "
                        f"{FALLBACK_MATERIAL}")
        kind = FALLBACK_MATERIAL
    spec = material_defaults(kind)
    params = {}
    for source in (mat_block, obj.get("material_params"), obj):
        if isinstance(source, dict):
            params.update(source)
    for key, val in params.items():
        if key in _MATERIAL_FIELD_KEYS or key in _OBJ_KEYS:
            continue
        if key in _KNOWN_NUMERIC:
            try:
                setattr(spec, key, float(val))
            except (TypeError, ValueError):
                warnings.append(f"ignoring non-numeric material field "
                                f"{key}={val!r}")
        elif isinstance(val, (int, float, bool, str)):
            # unrecognized per-material knobs ride along in extras
            spec.extras[key] = val
    try:
        spec.__post_init__()
    except ConfigError as exc:
        warnings.append(f"invalid material parameters ({exc}); "
                        "reverting to defaults")
        spec = material_defaults(kind)
    return spec


def _parse_object(obj, idx: int, warnings: list) -> ObjectSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"object entry {idx} is not a JSON object")
    material = _parse_material(obj, warnings)
    color = obj.get("surface_color", (0.7, 0.7, 0.7))
    try:
        spec = ObjectSpec(index=int(obj.get("index", idx)),
                          name=str(obj.get("name", obj.get("object", ""))),
                          material=material,
                          fixed=bool(obj.get("fixed", False)),
                          surface_color=tuple(color),
                          mesh_ref=str(obj.get("mesh_ref", "")),
                          fix_top_ratio=obj.get("fix_top_ratio"))
    except (ConfigError, TypeError, ValueError) as exc:
        warnings.append(f"object {idx}: {exc}; using safe fields")
        spec = ObjectSpec(index=idx, name=str(obj.get("name", "")),
                          material=material)
    return spec


def _parse_force(entry, warnings: list) -> ForceFieldSpec | None:
    if not isinstance(entry, dict):
        warnings.append(f"discarding non-object force entry {entry!r}")
        return None
    raw_kind = entry.get("type", entry.get("kind"))
    if raw_kind is None or str(raw_kind) not in FORCE_KINDS:
        warnings.append(f"discarding force with invalid type {raw_kind!r}")
        return None
    spec = force_defaults(str(raw_kind))
    for key, val in entry.items():
        if key in ("type", "kind"):
            continue
        if key in ("direction", "position"):
            try:
                setattr(spec, key, tuple(float(c) for c in val))
            except (TypeError, ValueError):
                warnings.append(f"force {raw_kind}: bad {key} {val!r}; "
                                "keeping default")
        elif key == "start_frame":
            try:
                spec.start_frame = max(-1, int(val))
            except (TypeError, ValueError):
                warnings.append(f"force {raw_kind}: bad start_frame {val!r}")
        elif key in ("strength", "radius", "falloff_power", "linear",
                     "quadratic", "frequency", "perpendicular_strength"):
            try:
                setattr(spec, key, float(val))
            except (TypeError, ValueError):
                warnings.append(f"force {raw_kind}: bad {key} {val!r}")
        # anything else is silently irrelevant to this force kind
    return spec


def parse_scene_config(text: str) -> SceneConfig:
    """Parse raw config text into a fully-defaulted SceneConfig.

    Never raises for recoverable content problems; those become warnings on
    the returned config. Unparseable text or an empty object list raises
    ConfigError.
    """
    if not text or not text.strip():
        raise ConfigError("empty config text")
    value = _extract_json(text)
    warnings: list[str] = []
    if isinstance(value, list):
        # legacy bare-array form: the array is the object list
        raw_objects, raw_forces, raw_sim = value, [], {}
        background = ""
    elif isinstance(value, dict):
        raw_objects = value.get("objects", [])
        raw_forces = value.get("forces", [])
        raw_sim = value.get("sim", {})
        background = str(value.get("background_ref", ""))
    else:
        raise ConfigError(f"config root must be object or array, "
                          f"got {type(value).__name__}")
    if not isinstance(raw_objects, list) or not raw_objects:
        raise ConfigError("config contains no objects")
    objects = [_parse_object(o, i, warnings) for i, o in enumerate(raw_objects)]
    indices = [o.index for o in objects]
    if sorted(indices) != list(range(len(objects))):
        warnings.append("object indices not contiguous from 0; reindexing "
                        "by position")
        for i, o in enumerate(objects):
            o.index = i
    else:
        objects.sort(key=lambda o: o.index)
    forces = []
    if isinstance(raw_forces, list):
        for entry in raw_forces:
            spec = _parse_force(entry, warnings)
            if spec is not None:
                forces.append(spec)
    sim = dict(_DEFAULT_SIM)
    if isinstance(raw_sim, dict):
        for key in _DEFAULT_SIM:
            if key in raw_sim:
                try:
                    cast = int if key in ("substeps", "steps", "render_fps") else float
                    sim[key] = cast(raw_sim[key])
                except (TypeError, ValueError):
                    warnings.append(f"sim.{key}: bad value {raw_sim[key]!r}")
    return SceneConfig(objects=objects, forces=forces, sim=sim,
                       background_ref=background, warnings=warnings)


def load_scene_config(path) -> SceneConfig:
    return parse_scene_config(Path(path).read_text(encoding="utf-8"))


def validate_config(cfg: SceneConfig, scene_dir=None) -> list[str]:
    """Range/plausibility checks; returns warnings, never mutates."""
    warnings: list[str] = []
    for obj in cfg.objects:
        mat = obj.material
        label = f"object {obj.index} ({obj.name or mat.kind})"
        if mat.nu is not None and not (NU_TYPICAL[0] <= mat.nu <= NU_TYPICAL[1]):
            warnings.append(f"{label}: Poisson ratio {mat.nu} outside the "
                            f"typical {NU_TYPICAL[0]}-{NU_TYPICAL[1]} band")
        if mat.E is not None and not (E_TYPICAL[0] <= mat.E <= E_TYPICAL[1]):
            warnings.append(f"{label}: Young's modulus {mat.E:g} outside the "
                            f"typical {E_TYPICAL[0]:g}-{E_TYPICAL[1]:g} band")
        if not (RHO_TYPICAL[0] <= mat.rho <= RHO_TYPICAL[1]):
            warnings.append(f"{label}: density {mat.rho:g} outside the "
                            f"typical {RHO_TYPICAL[0]:g}-{RHO_TYPICAL[1]:g} band")
        if obj.fix_top_ratio is not None and not (0.0 <= obj.fix_top_ratio <= 1.0):
            warnings.append(f"{label}: fix_top_ratio {obj.fix_top_ratio} "
                            "outside [0, 1]")
        if obj.mesh_ref:
            ref = Path(obj.mesh_ref)
            if scene_dir is not None and not ref.is_absolute():
                ref = Path(scene_dir) / ref
            if not ref.exists():
                warnings.append(f"{label}: mesh file not found: {ref}")
    for force in cfg.forces:
        if force.kind == "point" and (force.falloff_power or 0.0) == 0.0:
            warnings.append("point force with falloff_power=0 acts with "
                            "constant magnitude at any distance")
    return warnings
