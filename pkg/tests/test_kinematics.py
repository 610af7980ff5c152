import numpy as np
import pytest
from hypothesis import given, strategies as st

from tango.grid import Grid
from tango.kinematics import (
    MetricConfig,
    density,
    density_values,
    forward_kinematics,
    jacobian,
    load_robot,
    manipulability_matrix,
    panda,
    planar_arm,
    riemannian_index,
    robot_from_dict,
    robot_to_dict,
    spd_log_distance,
    yoshikawa,
)

ARMS = {"planar": planar_arm((1.0, 0.7, 0.5)), "panda": panda()}


def fd_jacobian(arm, q, h=1e-6):
    cols = []
    for j in range(len(q)):
        e = np.zeros(len(q))
        e[j] = h
        cols.append((arm.fk(q + e) - arm.fk(q - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.mark.parametrize("name", ARMS)
def test_jacobian_matches_finite_differences(name):
    arm = ARMS[name]
    rng = np.random.default_rng(0)
    lim = arm.active_limits
    qs = rng.uniform(lim[:, 0], lim[:, 1], size=(100, arm.n_active))
    batch = jacobian(arm, qs)
    for q, jac in zip(qs, batch):
        np.testing.assert_allclose(jac, fd_jacobian(arm, q), atol=1e-6)


@pytest.mark.parametrize(
    "q, expected",
    [((0, 0, 0), (3, 0)), ((np.pi / 2, -np.pi / 2, 0), (2, 1)), ((np.pi / 2, 0, 0), (0, 3))],
)
def test_planar_fk(q, expected):
    np.testing.assert_allclose(forward_kinematics(planar_arm(), np.array(q, float)), expected, atol=1e-12)


def test_planar_jacobian_cases():
    arm = planar_arm()
    assert np.linalg.matrix_rank(jacobian(arm, np.zeros(3)), tol=1e-10) == 1
    one = planar_arm((1.7,))
    np.testing.assert_allclose(jacobian(one, np.zeros(1)), [[0.0], [1.7]], atol=1e-15)


def test_panda_home_position():
    np.testing.assert_allclose(panda().fk(np.zeros(4)), [0.088, 0.0, 0.926], atol=1e-12)


def test_panda_fk_agrees_with_frame_chain():
    arm = panda(locked=((4, 0.3), (5, 1.2), (6, -0.4)))
    rng = np.random.default_rng(1)
    lim = arm.active_limits
    qs = rng.uniform(lim[:, 0], lim[:, 1], size=(50, 4))
    np.testing.assert_allclose(arm.fk(qs), arm.frames(qs)[..., -1, :3, 3], atol=1e-12)


def test_yoshikawa_worked_values():
    assert yoshikawa(planar_arm(), np.zeros(3)) == pytest.approx(0.0, abs=1e-7)
    assert yoshikawa(planar_arm((1.0, 1.0)), np.array([0.0, np.pi / 2])) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("q", [(0.3, 0.0, 0.0), (-1.0, np.pi, np.pi), (2.0, 0.0, np.pi), (0.4, np.pi, 0.0)])
def test_yoshikawa_vanishes_iff_rank_deficient(q):
    arm = planar_arm()
    q = np.array(q)
    y = yoshikawa(arm, q)
    deficient = np.linalg.matrix_rank(jacobian(arm, q), tol=1e-8) < 2
    assert (y < 1e-7) == deficient


@given(st.lists(st.floats(-np.pi, np.pi), min_size=3, max_size=3))
def test_yoshikawa_is_singular_value_product(q):
    arm = planar_arm()
    q = np.array(q)
    s = np.linalg.svd(jacobian(arm, q), compute_uv=False)
    assert yoshikawa(arm, q) == pytest.approx(np.prod(s), abs=1e-7)


def test_riemannian_closed_forms():
    assert spd_log_distance(np.eye(2), 1.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    for c in (0.1, 2.0, 7.5):
        assert spd_log_distance(c * np.eye(2), 1.0, 0.0) == pytest.approx(2 * np.log(c) ** 2, rel=1e-12)
        # Sigma = s^2 I: M = c Sigma gives the same value
        s = 1.3
        assert spd_log_distance(c * s**2 * np.eye(2), s, 0.0) == pytest.approx(2 * np.log(c) ** 2, rel=1e-12)


@given(st.lists(st.floats(-np.pi, np.pi), min_size=3, max_size=3), st.floats(0.05, 20.0))
def test_affine_invariance(q, c):
    m = manipulability_matrix(planar_arm(), np.array(q)) + 1e-3 * np.eye(2)
    base = spd_log_distance(m, 1.0, 0.0)
    scaled = spd_log_distance(c * m, np.sqrt(c), 0.0)
    assert scaled == pytest.approx(base, rel=1e-10, abs=1e-10)


def test_riemannian_index_against_eigendecomposition():
    arm = panda()
    cfg = MetricConfig(gamma=0.1, sigma_radius=0.8)
    q = np.array([0.2, -0.5, 0.3, -1.8])
    m = manipulability_matrix(arm, q) + cfg.regularization_eps * np.eye(3)
    lam = np.linalg.eigvalsh(m / 0.64)
    assert riemannian_index(arm, q, cfg) == pytest.approx(np.sum(np.log(lam) ** 2), rel=1e-10)
    assert density_values(arm, cfg, q) == pytest.approx(np.exp(-0.1 * np.sum(np.log(lam) ** 2)), rel=1e-10)


def test_density_endpoints():
    arm = planar_arm((1.0, 1.0))
    # unit 2-link at (0, pi/2): J J^T has eigenvalues (3 +- sqrt 5) / 2
    lam = np.array([(3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2])
    cfg = MetricConfig(regularization_eps=0.0)
    expected = np.exp(-np.sum(np.log(lam) ** 2))
    assert density_values(arm, cfg, np.array([0.0, np.pi / 2])) == pytest.approx(expected, rel=1e-12)
    ycfg = MetricConfig(kind="yoshikawa", gamma=2.0)
    assert density_values(planar_arm(), ycfg, np.zeros(3)) == pytest.approx(0.0, abs=1e-7)
    assert density_values(arm, ycfg, np.array([0.0, np.pi / 2])) == pytest.approx(1 - np.exp(-2.0))


@pytest.mark.parametrize("kind", ["riemannian", "yoshikawa"])
@pytest.mark.parametrize("name", ARMS)
def test_density_in_unit_interval(kind, name):
    arm = ARMS[name]
    cfg = MetricConfig(kind=kind, gamma=0.5)
    lim = arm.active_limits
    qs = np.random.default_rng(2).uniform(lim[:, 0], lim[:, 1], size=(2000, arm.n_active))
    p = density_values(arm, cfg, qs)
    assert np.all((p >= 0) & (p <= 1))


def test_density_field_on_grid():
    arm = planar_arm()
    grid = Grid.uniform(arm.active_limits, 16, [[4, 4]] * 3)
    field = density(arm, MetricConfig(), grid)
    idx = np.array([[1, 2, 3, 0, 2, 1]])
    q = grid.virtual_to_value(idx)
    assert field(idx)[0] == pytest.approx(density_values(arm, MetricConfig(), q)[0])
    with pytest.raises(ValueError):
        density(arm, MetricConfig(), Grid.uniform([[0, 1]] * 2, 4))


def test_metric_config_validation():
    with pytest.raises(ValueError):
        MetricConfig(kind="other")
    with pytest.raises(ValueError):
        MetricConfig(gamma=0.0)


def test_robot_dict_roundtrip(tmp_path):
    import yaml

    for arm in (planar_arm((1.0, 2.0)), panda()):
        again = robot_from_dict(robot_to_dict(arm))
        q = np.random.default_rng(3).uniform(-1, 1, arm.n_active)
        np.testing.assert_allclose(again.fk(q), arm.fk(q), atol=1e-14)
    path = tmp_path / "r.yaml"
    path.write_text(yaml.safe_dump({"kind": "planar", "link_lengths": [1, 1, 1]}))
    assert load_robot(path).n_active == 3


@pytest.mark.parametrize(
    "data, field",
    [({"kind": "planar"}, "link_lengths"), ({"kind": "rover"}, "robot.kind"), ({"kind": "serial"}, "robot.dh"),
     ({"kind": "planar", "link_lengths": [1], "schema_version": 7}, "schema_version")],
)
def test_robot_errors_name_field(data, field):
    with pytest.raises(ValueError, match=field):
        robot_from_dict(data)


def test_locked_joint_handling():
    arm = planar_arm(locked=[(2, 0.5)])
    assert arm.n_active == 2
    np.testing.assert_allclose(arm.fk(np.array([0.1, 0.2])), planar_arm().fk(np.array([0.1, 0.2, 0.5])))
    with pytest.raises(ValueError):
        arm.fk(np.zeros(3))


def test_panda_self_collision_flags_folded_pose():
    arm = panda()
    assert not arm.self_collision(np.zeros(4))
