import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from physweave.errors import ConfigError
from physweave.sceneconfig import (FORCE_KINDS, MATERIAL_KINDS, SceneConfig,
                                   force_defaults, material_defaults,
                                   parse_scene_config, validate_config,
                                   _FORCE_TABLE, _MATERIAL_TABLE)

# frozen default tables (field-for-field golden values)
MATERIAL_GOLDEN = {
    "rigid": {"rho": 200.0, "extras": {"friction": 0.7}},
    "mpm_elastic": {"E": 3e5, "nu": 0.2, "rho": 1000.0,
                    "extras": {"model": "corotation"}},
    "mpm_elastoplastic": {"E": 3e4, "nu": 0.4, "rho": 100.0,
                          "extras": {"use_von_mises": True,
                                     "yield_stress": 1e4}},
    "mpm_sand": {"E": 5e5, "nu": 0.2, "rho": 1800.0,
                 "extras": {"friction_angle": 45.0}},
    "mpm_liquid": {"E": 1e6, "nu": 0.2, "rho": 1000.0,
                   "extras": {"viscous": False}},
    "mpm_snow": {"E": 1e6, "nu": 0.2, "rho": 1000.0,
                 "extras": {"yield_lower": 0.025, "yield_higher": 0.0045}},
    "mpm_muscle": {"E": 1e6, "nu": 0.2, "rho": 1000.0,
                   "extras": {"model": "Neo-Hookean"}},
    "pbd_elastic": {"rho": 1000.0,
                    "extras": {"stretch_compliance": 0.0,
                               "bending_compliance": 0.0,
                               "volume_compliance": 0.0,
                               "relaxation": 0.1}},
    "pbd_cloth": {"rho": 4.0,
                  "extras": {"stretch_compliance": 1e-7,
                             "bending_compliance": 1e-5,
                             "air_resistance": 1e-3}},
    "pbd_liquid": {"rho": 1000.0,
                   "extras": {"density_relaxation": 0.2,
                              "viscosity_relaxation": 0.01}},
    "pbd_particle": {"rho": 1000.0, "extras": {}},
}

FORCE_GOLDEN = {
    "constant": {"direction": (0.0, 0.0, -1.0), "strength": 9.8},
    "wind": {"direction": (1.0, 0.0, 0.0), "strength": 1.0, "radius": 1.0},
    "point": {"strength": 1.0, "position": (0.0, 0.0, 0.0),
              "falloff_power": 0.0},
    "drag": {"linear": 0.0, "quadratic": 0.0},
    "vortex": {"direction": (0.0, 0.0, 1.0), "perpendicular_strength": 20.0},
    "turbulence": {"strength": 1.0, "frequency": 3.0},
    "noise": {"strength": 1.0},
}


class TestDefaults:
    @pytest.mark.parametrize("kind", MATERIAL_KINDS)
    def test_material_defaults_golden(self, kind):
        spec = material_defaults(kind)
        golden = MATERIAL_GOLDEN[kind]
        assert spec.rho == golden["rho"]
        assert spec.E == golden.get("E")
        assert spec.nu == golden.get("nu")
        assert spec.extras == golden["extras"]

    @pytest.mark.parametrize("kind", FORCE_KINDS)
    def test_force_defaults_golden(self, kind):
        spec = force_defaults(kind)
        for key, val in FORCE_GOLDEN[kind].items():
            assert getattr(spec, key) == val
        assert spec.start_frame == -1

    def test_tables_bijective_with_enums(self):
        assert set(_MATERIAL_TABLE) == set(MATERIAL_KINDS)
        assert set(_FORCE_TABLE) == set(FORCE_KINDS)
        assert len(MATERIAL_KINDS) == 11
        assert len(FORCE_KINDS) == 7

    def test_unknown_kinds_rejected(self):
        with pytest.raises(ConfigError):
            material_defaults("unobtainium")
        with pytest.raises(ConfigError):
            force_defaults("tractor_beam")


class TestParse:
    def test_sand_with_constant_force(self):
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"mpm_sand"}],'
            '"forces":[{"type":"constant"}]}')
        mat = cfg.objects[0].material
        assert mat.kind == "mpm_sand"
        assert (mat.E, mat.nu, mat.rho) == (5e5, 0.2, 1800.0)
        assert mat.extras["friction_angle"] == 45.0
        force = cfg.forces[0]
        assert force.direction == (0.0, 0.0, -1.0)
        assert force.strength == 9.8
        assert cfg.warnings == []

    def test_unknown_material_falls_back(self):
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"unobtainium"}],"forces":[]}')
        assert cfg.objects[0].material.kind == "mpm_elastic"
        assert len(cfg.warnings) == 1
        assert "unobtainium" in cfg.warnings[0]

    def test_invalid_force_discarded(self):
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"rigid"}],'
            '"forces":[{"type":"tractor_beam"},{"type":"wind"}]}')
        assert len(cfg.forces) == 1
        assert cfg.forces[0].kind == "wind"
        assert len(cfg.warnings) == 1

    def test_legacy_bare_array(self):
        cfg = parse_scene_config(
            '[{"material_type":"pbd_cloth","name":"dress"},'
            '{"material_type":"rigid"}]')
        assert len(cfg.objects) == 2
        assert cfg.objects[0].material.kind == "pbd_cloth"
        assert cfg.forces == []

    def test_prose_and_fences_tolerated(self):
        text = ("Here is the configuration you asked for:\n```json\n"
                '{"objects":[{"material_type":"mpm_liquid"}],"forces":[]}'
                "\n```\nLet me know if you need anything else.")
        cfg = parse_scene_config(text)
        assert cfg.objects[0].material.kind == "mpm_liquid"

    def test_parameter_overrides_and_extras(self):
        cfg = parse_scene_config(json.dumps({
            "objects": [{"material_type": "mpm_elastic", "E": 1e4,
                         "nu": 0.3, "rho": 500,
                         "wobble_factor": 3.5,
                         "surface_color": [0.1, 0.2, 0.3],
                         "fix_top_ratio": 0.1,
                         "fixed": True, "name": "jelly"}],
            "forces": [{"type": "wind", "strength": 2.5,
                        "start_frame": 50}]}))
        obj = cfg.objects[0]
        assert (obj.material.E, obj.material.nu, obj.material.rho) \
            == (1e4, 0.3, 500.0)
        assert obj.material.extras["wobble_factor"] == 3.5
        assert obj.surface_color == (0.1, 0.2, 0.3)
        assert obj.fixed is True
        assert obj.fix_top_ratio == 0.1
        assert cfg.forces[0].strength == 2.5
        assert cfg.forces[0].start_frame == 50

    def test_sim_block(self):
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"rigid"}],"forces":[],'
            '"sim":{"steps":100,"dt":0.002}}')
        assert cfg.sim["steps"] == 100
        assert cfg.sim["dt"] == 0.002
        assert cfg.sim["substeps"] == 10
        assert cfg.sim["render_fps"] == 60

    def test_default_sim_values(self):
        cfg = parse_scene_config('{"objects":[{"material_type":"rigid"}]}')
        assert cfg.sim == {"dt": 0.004, "substeps": 10, "steps": 300,
                           "render_fps": 60}

    def test_empty_objects_rejected(self):
        with pytest.raises(ConfigError):
            parse_scene_config('{"objects":[],"forces":[]}')

    def test_unparseable_rejected(self):
        with pytest.raises(ConfigError):
            parse_scene_config("not a config at all")
        with pytest.raises(ConfigError):
            parse_scene_config("   ")

    def test_invalid_nu_reverts_with_band_warning(self):
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"mpm_elastic","nu":0.6}]}')
        assert cfg.objects[0].material.nu == 0.2  # back to defaults
        assert any("0.2" in w and "0.45" in w for w in cfg.warnings)

    def test_noncontiguous_indices_reindexed(self):
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"rigid","index":5},'
            '{"material_type":"rigid","index":9}]}')
        assert [o.index for o in cfg.objects] == [0, 1]
        assert any("reindex" in w for w in cfg.warnings)

    def test_roundtrip_canonical(self):
        cfg = parse_scene_config(json.dumps({
            "objects": [{"material_type": "mpm_sand", "name": "pile",
                         "surface_color": [0.9, 0.8, 0.6]},
                        {"material_type": "pbd_cloth", "fix_top_ratio": 0.1}],
            "forces": [{"type": "wind", "start_frame": 25},
                       {"type": "constant"}]}))
        emitted = cfg.to_json()
        cfg2 = parse_scene_config(emitted)
        assert cfg2.to_dict() == cfg.to_dict()
        assert cfg2.warnings == []

    @settings(max_examples=120, deadline=None)
    @given(st.text(max_size=300))
    def test_parsing_is_total(self, text):
        try:
            cfg = parse_scene_config(text)
            assert isinstance(cfg, SceneConfig)
        except ConfigError:
            pass  # the only acceptable failure mode


class TestValidate:
    def test_well_formed_config_clean(self, tmp_path):
        (tmp_path / "m.obj").write_text(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"mpm_elastic",'
            '"mesh_ref":"m.obj"}]}')
        assert validate_config(cfg, tmp_path) == []

    def test_nu_outside_typical_band_warns(self):
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"mpm_elastic","nu":0.47}]}')
        warnings = validate_config(cfg)
        assert any("0.2" in w and "0.45" in w for w in warnings)

    def test_missing_mesh_named(self, tmp_path):
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"rigid",'
            '"mesh_ref":"missing/thing.obj"}]}')
        warnings = validate_config(cfg, tmp_path)
        assert any("thing.obj" in w for w in warnings)

    def test_out_of_band_params_warn(self):
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"mpm_elastic","E":1e9,'
            '"rho":5.0}]}')
        warnings = validate_config(cfg)
        assert any("Young" in w for w in warnings)
        assert any("density" in w for w in warnings)

    def test_never_mutates(self):
        cfg = parse_scene_config(
            '{"objects":[{"material_type":"mpm_elastic","E":1e9}]}')
        before = cfg.to_dict()
        validate_config(cfg)
        assert cfg.to_dict() == before
