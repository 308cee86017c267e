import numpy as np
import pytest

from irssim.errors import DegenerateGeometryError
from irssim.geometry import (
    PanelGeometry,
    PathLossModel,
    build_channels,
    direction_cosines,
    effective_angles,
    path_gain_magnitude,
    steering_ula,
    steering_ura,
)
from irssim.scenario import Scenario


class TestSteeringUla:
    def test_zero_angle_identity(self):
        assert np.allclose(steering_ula(0.0, 4), np.ones(4))

    def test_half_turn(self):
        assert np.allclose(steering_ula(np.pi, 2), [1, -1])

    def test_norm(self):
        v = steering_ula(0.37, 8)
        assert abs(np.linalg.norm(v) - np.sqrt(8)) < 1e-12

    def test_zero_elements_rejected(self):
        with pytest.raises(ValueError):
            steering_ula(0.1, 0)


class TestSteeringUra:
    def test_zero_angle_identity(self):
        assert np.allclose(steering_ura(0.0, 0.0, PanelGeometry(2, 2)), np.ones(4))

    def test_kron_order(self):
        # y factor [1, -1] kron z factor [1, 1]
        v = steering_ura(np.pi, 0.0, PanelGeometry(cols_y=2, rows_z=2))
        assert np.allclose(v, [1, 1, -1, -1])

    def test_elementwise_against_double_loop(self):
        geom = PanelGeometry(4, 4)
        u, v = 0.3, 0.7
        vec = steering_ura(u, v, geom)
        for iy in range(4):
            for iz in range(4):
                expected = np.exp(1j * (iy * u + iz * v))
                assert abs(vec[iy * 4 + iz] - expected) < 1e-12

    def test_unit_modulus_and_power(self):
        geom = PanelGeometry(5, 3)
        vec = steering_ura(-1.1, 2.0, geom)
        assert np.allclose(np.abs(vec), 1.0)
        assert abs(np.vdot(vec, vec).real - geom.total) < 1e-12

    def test_zero_dimension_rejected(self):
        with pytest.raises(ValueError):
            PanelGeometry(0, 4)


class TestDirectionCosines:
    def test_broadside(self):
        assert direction_cosines((0, 0, 0), (1, 0, 0)) == (0.0, 0.0)

    def test_3_4_5_triangle(self):
        cy, cz = direction_cosines((0, 0, 0), (0, 3, 4))
        assert abs(cy - 0.6) < 1e-15 and abs(cz - 0.8) < 1e-15

    def test_cosine_budget(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.normal(size=(2, 3))
            cy, cz = direction_cosines(a, b)
            assert cy**2 + cz**2 <= 1 + 1e-12

    def test_antisymmetric(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(2, 3))
        f = direction_cosines(a, b)
        r = direction_cosines(b, a)
        assert abs(f[0] + r[0]) < 1e-12 and abs(f[1] + r[1]) < 1e-12

    def test_coincident_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            direction_cosines((1, 2, 3), (1, 2, 3))

    def test_effective_angle_is_pi_times_cosine(self):
        ang = effective_angles((0, 0, 0), (5, 3, 1))
        assert abs(ang.u - np.pi * ang.cos_y) < 1e-15
        assert abs(ang.v - np.pi * ang.cos_z) < 1e-15


class TestPathGain:
    model = PathLossModel(pl0_db=30.0, d0=1.0)

    def test_reference_distance(self):
        assert abs(path_gain_magnitude(1.0, 2.2, self.model) - 10 ** (-1.5)) < 1e-12

    def test_direct_substitution(self):
        assert abs(path_gain_magnitude(10.0, 2.2, self.model) - 10 ** (-2.6)) < 1e-12

    def test_doubling_ratio(self):
        eps = 2.2
        g1 = path_gain_magnitude(3.0, eps, self.model)
        g2 = path_gain_magnitude(6.0, eps, self.model)
        assert abs(g2 / g1 - 2 ** (-eps / 2)) < 1e-12

    def test_clamped_below_reference(self):
        assert path_gain_magnitude(0.5, 2.2, self.model) == path_gain_magnitude(
            1.0, 2.2, self.model
        )

    def test_nonpositive_distance_rejected(self):
        with pytest.raises(ValueError):
            path_gain_magnitude(0.0, 2.2, self.model)

    def test_invalid_model_rejected(self):
        with pytest.raises(ValueError):
            PathLossModel(d0=0.0)


def small_scenario(**kw):
    defaults = dict(
        k_users=2,
        n_bs=4,
        panel_dims=((4, 4), (3, 3), (3, 3)),
        user_mode="fixed",
        users_fixed=((5.0, 1.0, 0.0), (3.0, -2.0, 0.0)),
    )
    defaults.update(kw)
    return Scenario(**defaults)


class TestBuildChannels:
    def test_zero_elevation_gives_constant_z_factor(self):
        # user at the same height as panel 2: v = 0, z factor all ones
        sc = small_scenario(
            k_users=1, users_fixed=((5.0, -10.0, 7.0),)
        )
        rng = np.random.default_rng(0)
        ch = build_channels(sc, np.array(sc.users_fixed), rng)
        h = ch.h_u2i[1][:, 0].reshape(3, 3)  # (iy, iz)
        for iy in range(3):
            ratio = h[iy] / h[iy, 0]
            assert np.allclose(ratio, 1.0, atol=1e-12)

    def test_channels_are_rank_one(self):
        sc = small_scenario()
        ch = build_channels(sc, np.array(sc.users_fixed), np.random.default_rng(3))
        for mat in (ch.h_i2b[0], ch.h_i2b[1], ch.h_i2i[2], ch.h_i2i[3]):
            s = np.linalg.svd(mat, compute_uv=False)
            assert s[0] / max(s[1], 1e-300) > 1e10

    def test_deterministic_given_seed(self):
        sc = small_scenario()
        users = np.array(sc.users_fixed)
        a = build_channels(sc, users, np.random.default_rng(11))
        b = build_channels(sc, users, np.random.default_rng(11))
        for i in range(3):
            assert np.array_equal(a.h_i2b[i], b.h_i2b[i])
            assert np.array_equal(a.h_u2i[i], b.h_u2i[i])
        for p in (2, 3):
            assert np.array_equal(a.h_i2i[p], b.h_i2i[p])

    def test_gain_magnitudes_follow_path_loss(self):
        sc = small_scenario()
        users = np.array(sc.users_fixed)
        ch = build_channels(sc, users, np.random.default_rng(5))
        model = sc.pathloss
        for i in range(3):
            d = np.linalg.norm(sc.q_bs - sc.q_irs[i])
            expected = path_gain_magnitude(d, model.exp_i2b, model)
            assert abs(abs(ch.alpha_i2b[i]) - expected) < 1e-12 * expected
            for k in range(sc.k_users):
                d = np.linalg.norm(sc.q_irs[i] - users[k])
                expected = path_gain_magnitude(d, model.exp_u2i, model)
                assert abs(abs(ch.alpha_u2i[i, k]) - expected) < 1e-12 * expected

    def test_stacked_shapes(self):
        sc = small_scenario()
        ch = build_channels(sc, np.array(sc.users_fixed), np.random.default_rng(7))
        assert ch.h_i2b_stacked().shape == (sc.n_bs, sc.m_total)
        assert ch.h_u2i_stacked().shape == (sc.m_total, sc.k_users)

    def test_phase_override(self):
        sc = small_scenario(k_users=1, users_fixed=((5.0, 1.0, 0.0),))
        users = np.array(sc.users_fixed)
        phases = np.zeros((3, 1))
        ch = build_channels(sc, users, np.random.default_rng(0), u2i_phases=phases)
        assert np.allclose(np.angle(ch.alpha_u2i), 0.0)
