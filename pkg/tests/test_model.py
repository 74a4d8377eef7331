import json

import numpy as np
import pytest

from bikebot.model import (LinkParams, Pose, RobotDescriptionError, RobotModel, as_q,
                           default_model, ee_pose_vector, forward_kinematics, frame_chain,
                           link_jacobian, link_transform, model_from_dict, model_to_dict,
                           roll_transform, system_jacobian)
from bikebot.transforms import is_rotation, rot_x
from bikebot.units import DEG
from conftest import random_configs


def test_link_transform_identity():
    link = LinkParams(alpha=0.0, a=0.0, d=0.0)
    assert np.allclose(link_transform(link, 0.0), np.eye(4))


def test_link_transform_first_link_of_chain():
    # alpha = 90 deg, a = 0, d = 0.276 at zero joint angle
    link = default_model().links[0]
    T = link_transform(link, 0.0)
    assert np.allclose(T[:3, 3], [0.0, 0.0, 0.276])
    assert np.allclose(T[:3, :3], rot_x(np.pi / 2), atol=1e-15)


def test_link_transform_rotated_offset():
    # a = 0.41, alpha = 180 deg, theta = 90 deg: the a-offset rotates onto +y
    link = LinkParams(alpha=np.pi, a=0.41, d=0.0)
    T = link_transform(link, np.pi / 2)
    assert np.allclose(T[:3, 3], [0.0, 0.41, 0.0], atol=1e-15)


def test_forward_kinematics_zero_config_matches_hand_chain(model):
    # independent composition of the same chain, written out longhand
    def dh(alpha, a, d, th):
        ca, sa, ct, st = np.cos(alpha), np.sin(alpha), np.cos(th), np.sin(th)
        return np.array([
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ])

    T = np.eye(4)
    T[:3, 3] = model.p0
    for link in model.links:
        T = T @ dh(link.alpha, link.a, link.d, 0.0)
    pose = forward_kinematics(model, np.zeros(model.n + 1))
    assert np.allclose(pose.position, T[:3, 3], atol=1e-12)
    assert np.allclose(pose.transform()[:3, :3], T[:3, :3], atol=1e-12)


def test_roll_rotates_end_effector_about_contact_line(model):
    q = np.zeros(model.n + 1)
    p0 = forward_kinematics(model, q).position
    q5 = q.copy()
    q5[0] = 5 * DEG
    p5 = forward_kinematics(model, q5).position
    assert np.allclose(p5, rot_x(-5 * DEG) @ p0, atol=1e-12)


def test_forward_kinematics_two_pi_invariance(model, rng):
    q = random_configs(model, 1, rng)[0]
    base = ee_pose_vector(model, q)
    for j in range(1, model.n + 1):
        q2 = q.copy()
        q2[j] += 2 * np.pi
        assert np.allclose(ee_pose_vector(model, q2), base, atol=1e-12)


def test_rotation_factors_orthonormal(model, rng):
    q = random_configs(model, 50, rng)
    chain = frame_chain(model, q)
    assert is_rotation(chain.world_from_frame[..., :3, :3].reshape(-1, 3, 3), tol=1e-10)


def test_dimension_mismatch_raises(model):
    with pytest.raises(ValueError):
        forward_kinematics(model, np.zeros(model.n))


def test_link_jacobian_lever_arm():
    # single vertical revolute joint, point mass at radius r: speed column = r
    link = LinkParams(alpha=0.0, a=0.5, d=0.0, m=1.0)
    m = RobotModel(bike=default_model().bike, links=(link,))
    J = link_jacobian(m, np.zeros(2), 1)
    # com sits at a/2 from the joint axis
    assert np.isclose(np.linalg.norm(J[:3, 0]), 0.25, atol=1e-12)
    assert np.allclose(J[3:, 0], [0, 0, 1])


def test_link_jacobian_matches_finite_differences(model, rng):
    h = 1e-6
    for q in random_configs(model, 5, rng):
        theta = q[1:]
        for i in (1, 3, model.n):
            J = link_jacobian(model, q, i)
            link = model.links[i - 1]
            for j in range(model.n):
                tp, tm = theta.copy(), theta.copy()
                tp[j] += h
                tm[j] -= h

                def com_in_f0(tv):
                    T = np.eye(4)
                    for k, lk in enumerate(model.links[:i]):
                        T = T @ link_transform(lk, tv[k])
                    return T[:3, :3] @ link.com + T[:3, 3]

                fd = (com_in_f0(tp) - com_in_f0(tm)) / (2 * h)
                scale = max(1.0, np.abs(J[:3, j]).max())
                assert np.allclose(J[:3, j], fd, atol=1e-5 * scale)
                if j >= i:
                    assert np.allclose(J[:, j], 0.0)


def test_system_jacobian_matches_finite_differences(model, rng):
    h = 1e-6
    for q in random_configs(model, 8, rng):
        J = system_jacobian(model, q)
        for j in range(model.n + 1):
            qp, qm = q.copy(), q.copy()
            qp[j] += h
            qm[j] -= h
            fd = (ee_pose_vector(model, qp)[:3] - ee_pose_vector(model, qm)[:3]) / (2 * h)
            scale = max(1.0, np.abs(J[:3, j]).max())
            assert np.allclose(J[:3, j], fd, atol=1e-5 * scale)


def test_system_jacobian_arm_columns_are_rotated_link_columns(model, rng):
    q = random_configs(model, 1, rng)[0]
    J_world = system_jacobian(model, q)
    # link jacobian of a com placed at the end-effector origin, in F_0
    ee_link = model.links[-1]
    stub = LinkParams(alpha=ee_link.alpha, a=ee_link.a, d=ee_link.d,
                      m=ee_link.m, com=np.zeros(3), inertia=ee_link.inertia)
    m2 = RobotModel(bike=model.bike, links=model.links[:-1] + (stub,), mount=model.mount)
    J_f0 = link_jacobian(m2, q, model.n)
    R0 = (roll_transform(q[0]) @ model.mount)[:3, :3]
    assert np.allclose(J_world[:3, 1:], R0 @ J_f0[:3], atol=1e-10)
    assert np.allclose(J_world[3:, 1:], R0 @ J_f0[3:], atol=1e-10)


def test_system_jacobian_zero_config_known_pattern(toy_model):
    # toy at zero config: end-effector 0.3 m along x from the vertical joint-1
    # axis; joint 2 axis points along -y after the alpha = 90 deg twist
    J = system_jacobian(toy_model, np.zeros(3))
    assert np.allclose(J[:3, 1], [0.0, 0.3, 0.0], atol=1e-12)
    assert np.allclose(J[3:, 1], [0, 0, 1], atol=1e-12)
    assert np.allclose(J[:3, 2], [0.0, 0.0, 0.3], atol=1e-12)
    assert np.allclose(J[3:, 2], [0, -1, 0], atol=1e-12)


def test_pose_round_trip():
    pose = Pose(position=[0.1, -0.2, 0.9], orientation=[0.4, -0.8, 2.0])
    back = Pose.from_transform(pose.transform())
    assert np.allclose(back.vector(), pose.vector(), atol=1e-12)


def test_pose_wraps_angles():
    pose = Pose(position=np.zeros(3), orientation=[3 * np.pi, 0.0, -3 * np.pi])
    assert np.all(pose.orientation <= np.pi + 1e-12)
    assert np.all(pose.orientation > -np.pi - 1e-12)


def test_configuration_round_trip():
    from bikebot.model import Configuration

    c = Configuration(phi_b=0.1, theta=[0.2, 0.3])
    assert np.allclose(Configuration.from_q(c.q).q, c.q)
    assert as_q(c).shape == (3,)


def test_robot_description_round_trip(model, tmp_path):
    path = tmp_path / "robot.json"
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)
    with open(path) as fh:
        again = model_from_dict(json.load(fh))
    assert again.n == model.n
    assert np.isclose(again.bike.epsilon, model.bike.epsilon)
    assert np.allclose(again.mount, model.mount)
    for a, b in zip(again.links, model.links):
        assert np.isclose(a.alpha, b.alpha)
        assert np.allclose(a.com, b.com)
        assert np.allclose(a.inertia, b.inertia)


def test_robot_description_units_are_degrees():
    data = model_to_dict(default_model())
    assert np.isclose(data["bikebot"]["caster_angle_deg"], 20.0)
    assert np.isclose(data["links"][0]["alpha_deg"], 90.0)


def test_robot_description_rejects_unknown_keys():
    data = model_to_dict(default_model())
    data["wheels"] = 2
    with pytest.raises(RobotDescriptionError, match="wheels"):
        model_from_dict(data)
    data2 = model_to_dict(default_model())
    data2["links"][0]["colour"] = "red"
    with pytest.raises(RobotDescriptionError, match="links\\[1\\]"):
        model_from_dict(data2)


def test_invalid_parameters_raise():
    with pytest.raises(ValueError):
        LinkParams(alpha=0.0, a=0.1, d=0.0, m=-1.0)
    with pytest.raises(ValueError):
        LinkParams(alpha=0.0, a=0.1, d=0.0, inertia=np.array([[1, 2, 0], [0, 1, 0], [0, 0, 1.0]]))
    bike = default_model().bike
    mount = np.eye(4)
    mount[0, 0] = 2.0
    with pytest.raises(ValueError):
        RobotModel(bike=bike, links=default_model().links, mount=mount)


def test_default_com_is_midpoint():
    link = LinkParams(alpha=np.pi / 2, a=0.0, d=0.276)
    assert np.allclose(link.com, [0.0, -0.138, 0.0])
