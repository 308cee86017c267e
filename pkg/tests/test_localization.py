import itertools

import numpy as np
import pytest

from irssim.doa import AoaPairSet
from irssim.errors import (
    DegenerateGeometryError,
    IllConditionedError,
    MatchingFailureError,
)
from irssim.geometry import (
    build_channels,
    effective_angles,
    path_gain_magnitude,
    steering_ura,
)
from irssim.localization import (
    CandidateLocation,
    estimate_path_losses,
    match_aoas,
    path_losses_from_covariance,
    rmse,
    sense_locations,
    triangulate,
)
from irssim.scenario import Scenario
from irssim.signals import PhaseShiftConfig, generate_symbols, receive_at_sub_irs


def floor_scenario(**kw):
    defaults = dict(k_users=1, user_mode="fixed", users_fixed=((5.0, 1.0, 0.0),))
    defaults.update(kw)
    return Scenario(**defaults)


def pair_at(position, panel_q):
    ang = effective_angles(np.asarray(position, float), panel_q)
    return np.array([ang.u, ang.v])


class TestPathLossFromCovariance:
    def test_exact_covariance_oracle(self):
        # K=1 with orthogonal steering columns and the exact covariance
        sc = floor_scenario()
        geom = sc.panels[1]
        b_user = steering_ura(0.5, -0.3, geom)
        b_link = steering_ura(0.5 + 2 * np.pi / geom.cols_y, -0.3, geom)
        b = np.stack([b_user, b_link], axis=1)
        assert abs(np.vdot(b_user, b_link)) < 1e-9  # orthogonal by construction
        alpha, p_aggregate, rho, sigma2 = 3.1e-3, 1.7e-3, 2.0, 1e-6
        r_beta = np.diag([alpha**2, p_aggregate**2])
        r = rho * b @ r_beta @ b.conj().T + sigma2 * np.eye(geom.total)
        mags = path_losses_from_covariance(r, b, rho, sigma2)
        assert abs(mags[0] - alpha) < 1e-10
        assert abs(mags[1] - p_aggregate) < 1e-10

    def test_power_scaling_invariance(self):
        sc = floor_scenario()
        geom = sc.panels[1]
        b = np.stack([steering_ura(0.4, 0.2, geom), steering_ura(-1.0, 1.3, geom)], 1)
        r_beta = np.diag([4e-6, 9e-6])
        for c in (1.0, 7.5):
            r = c * 2.0 * b @ r_beta @ b.conj().T + 1e-6 * np.eye(geom.total)
            mags = path_losses_from_covariance(r, b, c * 2.0, 1e-6)
            assert np.allclose(mags, [2e-3, 3e-3], atol=1e-12)

    def test_zero_signal_clamps_to_zero(self):
        sc = floor_scenario()
        geom = sc.panels[1]
        b = np.stack([steering_ura(0.4, 0.2, geom), steering_ura(-1.0, 1.3, geom)], 1)
        r = 1e-6 * np.eye(geom.total)  # exactly the noise floor
        mags = path_losses_from_covariance(r, b, 1.0, 2e-6)  # over-subtracts
        assert np.all(mags == 0.0)

    def test_rank_deficient_steering_rejected(self):
        sc = floor_scenario()
        geom = sc.panels[1]
        col = steering_ura(0.4, 0.2, geom)
        b = np.stack([col, col], axis=1)
        with pytest.raises(IllConditionedError):
            path_losses_from_covariance(np.eye(geom.total), b, 1.0, 0.0)

    def test_estimate_from_snapshots(self):
        sc = floor_scenario()
        users = np.array(sc.users_fixed)
        ch = build_channels(sc, users, np.random.default_rng(0))
        theta1 = PhaseShiftConfig.random({1: 1024}, sc.bits, np.random.default_rng(1))
        sym = generate_symbols(1, 2000, np.random.default_rng(2))
        snap = receive_at_sub_irs(ch, theta1, sym, sc.rho, sc.sigma2, 2,
                                  np.random.default_rng(3))
        pairs = AoaPairSet(pairs=pair_at(users[0], sc.q_irs[1])[None, :], panel=2, block=1)
        est = estimate_path_losses(snap, pairs, sc)
        true_mag = abs(ch.alpha_u2i[1, 0])
        assert abs(est.user_magnitudes[0] - true_mag) < 0.05 * true_mag
        assert est.passive_aggregate >= 0


class TestTriangulate:
    def test_round_trip_consistency(self):
        sc = floor_scenario()
        user = np.array([5.0, 1.0, 0.0])
        cand = triangulate(pair_at(user, sc.q_irs[1]), pair_at(user, sc.q_irs[2]), sc)
        assert cand.feasible
        assert np.linalg.norm(cand.position - user) < 1e-9

    def test_branch_choice_matches_exhaustive(self):
        sc = floor_scenario()
        rng = np.random.default_rng(0)
        for _ in range(50):
            user = np.array([rng.uniform(0.5, 9), rng.uniform(-5, 5), 0.0])
            p2, p3 = pair_at(user, sc.q_irs[1]), pair_at(user, sc.q_irs[2])
            cand = triangulate(p2, p3, sc)
            # brute force over the four sign-branch combinations
            x2, y2, z2 = sc.q_irs[1]
            x3, y3, z3 = sc.q_irs[2]
            dx2 = np.sqrt(cand.d2**2 - (cand.position[1] - y2) ** 2 - (cand.position[2] - z2) ** 2)
            dx3 = np.sqrt(cand.d3**2 - (cand.position[1] - y3) ** 2 - (cand.position[2] - z3) ** 2)
            combos = [(x2 + s2 * dx2, x3 + s3 * dx3) for s2 in (1, -1) for s3 in (1, -1)]
            diffs = np.array([abs(c[0] - c[1]) for c in combos])
            tied = diffs <= diffs.min() + 1e-12  # larger x wins ties
            best_x = max(c[0] for c, t in zip(combos, tied) if t)
            assert abs(cand.position[0] - best_x) < 1e-9

    def test_swapping_panels_gives_same_position(self):
        sc = floor_scenario()
        q = sc.q_irs_xyz
        swapped = Scenario(
            k_users=1, user_mode="fixed", users_fixed=sc.users_fixed,
            q_irs_xyz=(q[0], q[2], q[1]),
        )
        user = np.array([4.2, -2.0, 0.0])
        a = triangulate(pair_at(user, sc.q_irs[1]), pair_at(user, sc.q_irs[2]), sc)
        b = triangulate(
            pair_at(user, swapped.q_irs[1]), pair_at(user, swapped.q_irs[2]), swapped
        )
        assert np.linalg.norm(a.position - b.position) < 1e-9

    def test_predicted_losses_follow_model(self):
        sc = floor_scenario()
        user = np.array([6.0, 2.0, 0.0])
        cand = triangulate(pair_at(user, sc.q_irs[1]), pair_at(user, sc.q_irs[2]), sc)
        model = sc.pathloss
        for i, panel_q in enumerate((sc.q_irs[1], sc.q_irs[2])):
            d = np.linalg.norm(cand.position - panel_q)
            assert abs(cand.losses[i] - path_gain_magnitude(d, model.exp_u2i, model)) < 1e-12

    def test_parallel_sight_lines_rejected(self):
        sc = floor_scenario()
        with pytest.raises(DegenerateGeometryError):
            triangulate(np.array([0.5, 0.5]), np.array([0.5, 0.5]), sc)

    def test_negative_range_marks_infeasible(self):
        sc = floor_scenario()
        user = np.array([5.0, 1.0, 0.0])
        p2 = pair_at(user, sc.q_irs[1])
        p3 = pair_at(user, sc.q_irs[2])
        cand = triangulate(-p2, p3, sc)  # reversed sight line from panel 2
        assert not cand.feasible and np.all(np.isinf(cand.losses))

    def test_linear_system_residual(self):
        # the closed-form solution satisfies the original 4x4 system
        sc = floor_scenario()
        rng = np.random.default_rng(1)
        for _ in range(20):
            user = np.array([rng.uniform(0.5, 9), rng.uniform(-5, 5), 0.0])
            p2, p3 = pair_at(user, sc.q_irs[1]), pair_at(user, sc.q_irs[2])
            cand = triangulate(p2, p3, sc)
            u2, v2 = p2 / np.pi
            u3, v3 = p3 / np.pi
            a = np.array(
                [[1, 0, u2, 0], [0, 1, v2, 0], [1, 0, 0, u3], [0, 1, 0, v3]]
            )
            z = np.array([cand.position[1], cand.position[2], cand.d2, cand.d3])
            p = np.array([sc.q_irs[1][1], sc.q_irs[1][2], sc.q_irs[2][1], sc.q_irs[2][2]])
            assert np.max(np.abs(a @ z - p)) < 1e-9


def candidate_grid(sc, users):
    k = len(users)
    return [
        [
            triangulate(pair_at(users[l], sc.q_irs[1]), pair_at(users[s], sc.q_irs[2]), sc)
            for s in range(k)
        ]
        for l in range(k)
    ]


def exact_losses(sc, users, panel):
    model = sc.pathloss
    mags = np.array(
        [
            path_gain_magnitude(np.linalg.norm(np.asarray(u) - sc.q_irs[panel - 1]),
                                model.exp_u2i, model)
            for u in users
        ]
    )
    from irssim.localization import PathLossEstimates

    return PathLossEstimates(user_magnitudes=mags, passive_aggregate=0.0, panel=panel)


class TestMatchAoas:
    def test_single_user(self):
        sc = floor_scenario()
        users = np.array(sc.users_fixed)
        est = match_aoas(candidate_grid(sc, users), exact_losses(sc, users, 2),
                         exact_losses(sc, users, 3))
        assert np.linalg.norm(est.positions[0] - users[0]) < 1e-9

    @pytest.mark.parametrize("k", [2, 3])
    def test_matches_brute_force_assignment(self, k):
        rng = np.random.default_rng(10 + k)
        for _ in range(20):
            users = np.column_stack(
                [rng.uniform(1, 9, k), rng.uniform(-5, 5, k), np.zeros(k)]
            )
            if k > 1:
                gaps = np.linalg.norm(users[:, None] - users[None, :], axis=2)
                gaps[np.diag_indices(k)] = np.inf
                if gaps.min() < 3.0:  # keep users distance-separated
                    continue
            sc = floor_scenario(k_users=k, users_fixed=tuple(map(tuple, users)))
            cands = candidate_grid(sc, users)
            l2, l3 = exact_losses(sc, users, 2), exact_losses(sc, users, 3)
            est = match_aoas(cands, l2, l3)
            # brute force over permutations with the same per-step metric
            best_perm, best_cost = None, np.inf
            for perm in itertools.permutations(range(k)):
                cost = sum(
                    np.linalg.norm(
                        cands[l][perm[l]].losses
                        - np.array([l2.user_magnitudes[l], l3.user_magnitudes[perm[l]]])
                    )
                    for l in range(k)
                )
                if cost < best_cost:
                    best_cost, best_perm = cost, perm
            expected = np.array([cands[l][best_perm[l]].position for l in range(k)])
            assert np.allclose(est.positions, expected, atol=1e-9)

    def test_all_infeasible_raises(self):
        bad = CandidateLocation(
            position=np.full(3, np.nan), d2=np.nan, d3=np.nan,
            losses=np.full(2, np.inf), feasible=False,
        )
        losses = exact_losses(floor_scenario(), [(5.0, 1.0, 0.0)], 2)
        with pytest.raises(MatchingFailureError):
            match_aoas([[bad]], losses, losses)


class TestSenseLocations:
    def run_once(self, sc, seed):
        rng_users = np.random.default_rng(seed)
        users = sc.place_users(rng_users)
        ch = build_channels(sc, users, np.random.default_rng(seed + 1))
        theta1 = PhaseShiftConfig.random(
            {1: sc.panels[0].total}, sc.bits, np.random.default_rng(seed + 2)
        )
        sym = generate_symbols(sc.k_users, sc.tau1, np.random.default_rng(seed + 3))
        noise = np.random.default_rng(seed + 4)
        snap2 = receive_at_sub_irs(ch, theta1, sym, sc.rho, sc.sigma2, 2, noise)
        snap3 = receive_at_sub_irs(ch, theta1, sym, sc.rho, sc.sigma2, 3, noise)
        return users, sense_locations(snap2, snap3, sc, block=1)

    def test_near_noiseless_single_user(self):
        sc = floor_scenario(sigma2_dbm=-160.0, tau1=60, t1=120)
        users, est = self.run_once(sc, 0)
        assert rmse(est.positions, users) < 1e-3  # < 1 mm

    def test_defaults_smoke(self):
        sc = Scenario()
        users, est = self.run_once(sc, 7)
        assert np.all(np.isfinite(est.positions))
        assert rmse(est.positions, users) < 0.5

    def test_deterministic(self):
        sc = floor_scenario()
        _, a = self.run_once(sc, 3)
        _, b = self.run_once(sc, 3)
        assert np.array_equal(a.positions, b.positions)


class TestRmse:
    def test_perfect_estimate(self):
        pts = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        assert rmse(pts, pts) == 0.0

    def test_3_4_5_offset(self):
        truth = np.array([[0.0, 0.0, 0.0]])
        est = np.array([[0.03, 0.04, 0.0]])
        assert abs(rmse(est, truth) - 0.05) < 1e-12

    def test_label_swap_corrected(self):
        truth = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
        est = truth[::-1] + 0.01
        assert abs(rmse(est, truth) - rmse(truth + 0.01, truth)) < 1e-12
        assert rmse(est, truth, assign=False) > 1.0

    def test_cardinality_mismatch(self):
        with pytest.raises(ValueError):
            rmse(np.zeros((2, 3)), np.zeros((3, 3)))
