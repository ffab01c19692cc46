import numpy as np
import pytest

from physweave.sceneconfig import ForceFieldSpec, force_defaults
from physweave.simcore import RigidBody, SimState, sim_step
from physweave.simcore.state import make_rigid_from_mesh
from physweave.sceneconfig import material_defaults

from conftest import box_mesh, sphere_mesh

G = 9.8


def gravity_state(bodies, extra_fields=()):
    return SimState(bodies=bodies,
                    fields=[force_defaults("constant"), *extra_fields])


class TestBallistics:
    def test_free_fall_matches_closed_form(self):
        body = RigidBody(object_id=2, x=[0, 0, 6.0], v=[0, 0, 0], mass=1.0,
                         proxy="sphere", radius=0.05)
        state = gravity_state([body])
        for step in range(1, 251):
            sim_step(state)
            t = step * state.dt
            expected = 6.0 - 0.5 * G * t * t
            assert expected > body.radius  # still airborne on this fixture
            assert abs(body.x[2] - expected) < 1e-3

    def test_fixed_body_never_moves(self):
        body = RigidBody(object_id=2, x=[0, 0, 1.0], v=[0, 0, 0], mass=1.0,
                         fixed=True, proxy="box", half_extent=[0.5] * 3)
        state = gravity_state([body])
        x0 = body.x.copy()
        for _ in range(100):
            sim_step(state)
        assert np.array_equal(body.x, x0)
        assert np.array_equal(body.v, np.zeros(3))


class TestGroundContact:
    def test_comes_to_rest_without_penetration(self):
        body = RigidBody(object_id=2, x=[0, 0, 0.5], v=[0, 0, 0], mass=1.0,
                         proxy="sphere", radius=0.1)
        state = gravity_state([body])
        for _ in range(300):
            sim_step(state)
        low = body.x[2] - body.radius
        assert low >= -1e-4       # resting penetration bound
        assert low <= 0.02        # support-violation threshold
        assert abs(body.v[2]) < 1e-6

    def test_restitution_zero_no_bounce(self):
        body = RigidBody(object_id=2, x=[0, 0, 0.6], v=[0, 0, 0], mass=1.0,
                         proxy="sphere", radius=0.1)
        state = gravity_state([body])
        max_after_contact = 0.0
        touched = False
        for _ in range(400):
            sim_step(state)
            if body.x[2] - body.radius <= 1e-6:
                touched = True
            if touched:
                max_after_contact = max(max_after_contact,
                                        body.x[2] - body.radius)
        assert touched
        assert max_after_contact < 1e-3


class TestCoulombFriction:
    def _resting_box(self, mu=0.7):
        return RigidBody(object_id=2, x=[0, 0, 0.25], v=[0, 0, 0], mass=2.0,
                         mu=mu, proxy="box", half_extent=[0.25] * 3)

    def test_push_below_threshold_holds_static(self):
        body = self._resting_box(mu=0.7)
        push = ForceFieldSpec("constant", direction=(1, 0, 0),
                              strength=0.5 * 0.7 * G)
        state = gravity_state([body], extra_fields=[push])
        for _ in range(100):
            sim_step(state)
            assert abs(body.v[0]) < 1e-4
        assert abs(body.x[0]) < 1e-4

    def test_push_above_threshold_slides(self):
        body = self._resting_box(mu=0.7)
        push = ForceFieldSpec("constant", direction=(1, 0, 0),
                              strength=1.5 * 0.7 * G)
        state = gravity_state([body], extra_fields=[push])
        for _ in range(100):
            sim_step(state)
        assert body.x[0] > 0.01
        assert body.v[0] > 0.01


class TestPairContacts:
    def test_spheres_collide_and_separate(self):
        a = RigidBody(object_id=2, x=[-0.3, 0, 0.1], v=[1.0, 0, 0], mass=1.0,
                      proxy="sphere", radius=0.1, mu=0.0)
        b = RigidBody(object_id=3, x=[0.3, 0, 0.1], v=[-1.0, 0, 0], mass=1.0,
                      proxy="sphere", radius=0.1, mu=0.0)
        state = SimState(bodies=[a, b], fields=[])
        for _ in range(200):
            sim_step(state)
        gap = np.linalg.norm(a.x - b.x) - 0.2
        assert gap >= -1e-4
        # restitution 0: the head-on pair should end (nearly) at rest
        assert abs(a.v[0]) < 1e-6 and abs(b.v[0]) < 1e-6

    def test_box_lands_on_fixed_box(self):
        base = RigidBody(object_id=2, x=[0, 0, 0.25], v=[0, 0, 0], mass=1.0,
                         fixed=True, proxy="box", half_extent=[0.5, 0.5, 0.25])
        top = RigidBody(object_id=3, x=[0, 0, 1.5], v=[0, 0, 0], mass=1.0,
                        proxy="box", half_extent=[0.2, 0.2, 0.2])
        state = gravity_state([base, top])
        for _ in range(400):
            sim_step(state)
        assert abs((top.x[2] - 0.2) - 0.5) < 1e-3  # resting on the base top
        assert np.array_equal(base.x, np.array([0, 0, 0.25]))


class TestMeshConstruction:
    def test_sphere_detection(self):
        mesh = sphere_mesh(center=(0, 0, 1.0), radius=0.3, rings=16,
                           sectors=24)
        body = make_rigid_from_mesh(mesh, material_defaults("rigid"), 2)
        assert body.proxy == "sphere"
        assert abs(body.radius - 0.3) < 0.01
        assert body.mu == 0.7

    def test_box_detection_and_mass(self):
        mesh = box_mesh(center=(0, 0, 0.5), size=(0.4, 0.3, 0.2))
        body = make_rigid_from_mesh(mesh, material_defaults("rigid"), 2)
        assert body.proxy == "box"
        assert np.allclose(body.half_extent, [0.2, 0.15, 0.1])
        assert np.isclose(body.mass, 200.0 * 0.4 * 0.3 * 0.2, rtol=1e-6)
