import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phmultibody import (
    ConstraintError,
    ImageRep,
    PhSystem,
    RankError,
    SampleSet,
    assemble_constrained_dirac,
    assemble_unconstrained_dirac,
    check_dim_constancy,
    check_dirac_pointwise,
    check_lagrangian_local,
    check_resistive,
    continuous_kernel_basis,
    verify_system,
)
from phmultibody.models import EXAMPLE_MODELS, diff_drive, get_model, gyroscope, remark_counterexample
from phmultibody.structure import (
    check_local_trivialization,
    intersection_dimension,
    kernel_pivots,
    same_subspace,
    system_samples,
    verify_family,
)


def skew(n, rng):
    X = rng.standard_normal((n, n))
    return X - X.T


seeds = st.integers(0, 2**31 - 1)


class TestDiracPointwise:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), seeds)
    def test_graph_of_skew_map_is_dirac(self, n, seed):
        J = skew(n, np.random.default_rng(seed))
        assert check_dirac_pointwise(ImageRep(J, np.eye(n))).passed

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), seeds)
    def test_change_of_basis_is_harmless(self, n, seed):
        rng = np.random.default_rng(seed)
        J = skew(n, rng)
        T = rng.standard_normal((n, n)) + 3 * n * np.eye(n)
        assert check_dirac_pointwise(ImageRep(J @ T, T)).passed

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), seeds)
    def test_symmetric_part_is_detected(self, n, seed):
        rng = np.random.default_rng(seed)
        S = rng.standard_normal((n, n))
        S = S + S.T
        S *= 1e-3 / np.max(np.abs(S))
        v = check_dirac_pointwise(ImageRep(skew(n, rng) + S, np.eye(n)))
        assert not v.passed and v.magnitude > 1e-9

    def test_too_small_subspace(self):
        v = check_dirac_pointwise(ImageRep(np.array([[1.0, 0.0], [0.0, 0.0]]), np.zeros((2, 2))))
        assert not v.passed
        assert v.detail["rank"] == 1

    def test_flow_only_and_effort_only_spaces(self):
        n = 4
        assert check_dirac_pointwise(ImageRep(np.eye(n), np.zeros((n, n)))).passed
        assert check_dirac_pointwise(ImageRep(np.zeros((n, n)), np.eye(n))).passed

    def test_unconstrained_structure_of_robot(self):
        s = diff_drive()
        rep = assemble_unconstrained_dirac(s, np.array([0.1, 0.2, 0.3]), np.array([1.0, -0.5, 0.2]))
        assert rep.n == 3 + 2 * 3 + 2
        assert check_dirac_pointwise(rep).passed
        np.testing.assert_allclose(rep.K, -rep.K.T)


class TestKernelBasis:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 8), seeds)
    def test_spans_kernel(self, rows, cols, seed):
        rng = np.random.default_rng(seed)
        r = min(rows, cols)
        E = rng.standard_normal((rows, cols))
        J = continuous_kernel_basis(E, r)
        assert J.shape == (cols, cols - r)
        np.testing.assert_allclose(E @ J, 0.0, atol=1e-9)
        if J.size:
            assert np.linalg.matrix_rank(J) == cols - r

    def test_rank_mismatch(self):
        with pytest.raises(RankError):
            continuous_kernel_basis(np.array([[1.0, 2.0], [2.0, 4.0]]), 2)

    def test_zero_rank_gives_identity(self):
        np.testing.assert_array_equal(continuous_kernel_basis(np.zeros((1, 3)), 0), np.eye(3))

    def test_frozen_pivots_are_lipschitz(self):
        rng = np.random.default_rng(3)
        E = rng.standard_normal((2, 5))
        D = rng.standard_normal((2, 5))
        piv = kernel_pivots(E, 2)
        J0 = continuous_kernel_basis(E, 2, pivots=piv)
        diffs = [np.max(np.abs(continuous_kernel_basis(E + d * D, 2, pivots=piv) - J0)) for d in (1e-4, 1e-5)]
        assert diffs[1] < 0.2 * diffs[0]


class TestConstrainedDirac:
    def test_counterexample_restrictions(self):
        fam = remark_counterexample()
        rep = fam.rep_fn(0.0)
        flows_only = np.vstack([np.eye(2), np.zeros((2, 2))])
        for x in (-0.7, 0.3, 1e-3):
            D = assemble_constrained_dirac(rep, fam.E_fn(np.array([x])))
            assert same_subspace(D.stacked, flows_only)
        D0 = assemble_constrained_dirac(rep, fam.E_fn(np.array([0.0])))
        assert same_subspace(D0.stacked, rep.stacked)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 8), st.integers(1, 3), seeds)
    def test_result_is_dirac(self, n, l, seed):
        rng = np.random.default_rng(seed)
        rep = ImageRep(skew(n, rng), np.eye(n))
        E = rng.standard_normal((min(l, n), n))
        D = assemble_constrained_dirac(rep, E)
        assert check_dirac_pointwise(D, 1e-8).passed
        # efforts of the restricted structure lie in ker E
        np.testing.assert_allclose(E @ D.L, 0.0, atol=1e-8)

    def test_empty_constraint_returns_same_space(self):
        rng = np.random.default_rng(0)
        rep = ImageRep(skew(4, rng), np.eye(4))
        D = assemble_constrained_dirac(rep, np.zeros((0, 4)))
        assert same_subspace(D.stacked, rep.stacked)

    def test_non_dirac_input_raises(self):
        with pytest.raises(RankError):
            assemble_constrained_dirac(ImageRep(np.zeros((2, 2)), np.zeros((2, 2))), np.array([[1.0, 0.0]]))


class TestDimensionConstancy:
    def test_counterexample_fails_at_origin(self):
        fam = remark_counterexample()
        s = SampleSet.draw(fam.box, 50, 42, anchors=fam.anchors)
        v = check_dim_constancy(fam.rep_fn, fam.E_fn, s)
        assert not v.passed
        assert v.witness == [0.0]
        assert v.detail["witness_dimension"] == 2 and v.detail["typical_dimension"] == 1

    @pytest.mark.parametrize("box", [(0.1, 1.0), (-1.0, -0.1), (1e-3, 2e-3), (-5.0, -4.0)])
    def test_counterexample_passes_away_from_origin(self, box):
        fam = remark_counterexample()
        v = check_dim_constancy(fam.rep_fn, fam.E_fn, SampleSet.draw([box], 100, 1))
        assert v.passed and v.detail["dimension"] == 1

    def test_intersection_dimension_formula(self):
        fam = remark_counterexample()
        assert intersection_dimension(fam.rep_fn(0), fam.E_fn(np.array([0.5]))) == 1
        assert intersection_dimension(fam.rep_fn(0), fam.E_fn(np.array([0.0]))) == 2

    def test_trivialization_proxy(self):
        fam = remark_counterexample()
        bad = check_local_trivialization(fam.rep_fn, fam.E_fn, [np.array([0.0])])
        good = check_local_trivialization(fam.rep_fn, fam.E_fn, [np.array([0.4]), np.array([-0.9])])
        assert not bad.passed and bad.witness == [0.0]
        assert good.passed


def pendulum_data(m=2.0, g=9.81, l=0.5):
    def H(z):
        return 0.5 * z[2:] @ z[2:] / m + m * g * z[1]

    def grad_H(z):
        return np.array([0.0, m * g, z[2] / m, z[3] / m])

    def d(z):
        return np.array([z[0] ** 2 + z[1] ** 2 - l * l])

    def d_jac(z):
        return np.array([[2 * z[0], 2 * z[1], 0.0, 0.0]])

    return H, grad_H, d, d_jac


class TestLagrangian:
    @pytest.mark.parametrize("angle", [0.0, 0.7, -2.0, math.pi / 2])
    def test_constrained_pendulum(self, angle):
        H, gH, d, dj = pendulum_data()
        z1 = np.array([0.5 * math.cos(angle), 0.5 * math.sin(angle), 0.3, -1.1])
        v = check_lagrangian_local(H, gH, d, dj, z1)
        assert v.passed, v.detail
        assert v.detail["tangent_dimension"] == 4

    def test_nonzero_multiplier_curvature(self):
        H, gH, d, dj = pendulum_data()
        z1 = np.array([0.3, 0.4, 0.0, 0.0])
        assert check_lagrangian_local(H, gH, d, dj, z1, lam=np.array([-7.5])).passed

    def test_non_gradient_field_fails(self):
        v = check_lagrangian_local(None, lambda x: np.array([x[1], -x[0]]), None, None, np.array([0.3, -0.2]))
        assert not v.passed
        assert v.detail["hessian_asymmetry"] > 0.5
        assert v.witness is not None

    def test_rank_deficient_constraint_raises(self):
        with pytest.raises(RankError):
            check_lagrangian_local(
                None,
                lambda x: x,
                lambda x: np.array([x[0], x[0]]),
                lambda x: np.array([[1.0, 0.0], [1.0, 0.0]]),
                np.zeros(2),
            )

    def test_point_off_constraint_raises(self):
        H, gH, d, dj = pendulum_data()
        with pytest.raises(ConstraintError):
            check_lagrangian_local(H, gH, d, dj, np.array([1.0, 0.0, 0.0, 0.0]))

    def test_inconsistent_gradient_fails(self):
        v = check_lagrangian_local(lambda x: float(x @ x), lambda x: x, None, None, np.array([0.5, 0.1]))
        assert not v.passed and v.detail["gradient_mismatch"] > 0.1

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 6), seeds)
    def test_quadratic_energies_pass(self, n, seed):
        rng = np.random.default_rng(seed)
        Q = rng.standard_normal((n, n))
        Q = Q + Q.T
        b = rng.standard_normal(n)
        v = check_lagrangian_local(lambda x: 0.5 * x @ Q @ x + b @ x, lambda x: Q @ x + b, None, None,
                                   rng.standard_normal(n))
        assert v.passed


class TestResistive:
    def test_linear_damping(self):
        pts = [(np.zeros(2), np.array(w)) for w in ([1.0, 0.0], [-1.0, 2.0], [0.0, 0.0])]
        assert check_resistive(lambda z, w: 0.5 * w, pts).passed

    def test_energy_source_is_caught(self):
        pts = [(np.zeros(2), np.array(w)) for w in ([0.0, 0.0], [1.0, -1.0], [2.0, 0.0])]
        v = check_resistive(lambda z, w: -w, pts)
        assert not v.passed
        assert v.witness == [0.0, 0.0, 2.0, 0.0]
        assert v.magnitude == pytest.approx(4.0)


class TestSampleSet:
    def test_deterministic_and_in_box(self):
        box = [(-1.0, 2.0), (0.0, 0.5)]
        a = SampleSet.draw(box, 30, 5)
        b = SampleSet.draw(box, 30, 5)
        np.testing.assert_array_equal(a.points, b.points)
        assert a.points.shape == (30, 2)
        assert np.all(a.points[:, 0] >= -1) and np.all(a.points[:, 0] <= 2)
        assert not np.array_equal(a.points, SampleSet.draw(box, 30, 6).points)

    def test_guard_and_anchors(self):
        s = SampleSet.draw([(-1.0, 1.0)], 20, 0, guard=lambda x: x[0] < 0.5, anchors=[(0.0,)])
        assert s.points[0, 0] == 0.0
        assert np.all(s.points[:, 0] < 0.5)

    def test_nonpositive_count(self):
        with pytest.raises(ValueError):
            SampleSet.draw([(0.0, 1.0)], 0)


class TestVerifySystem:
    @pytest.mark.parametrize("name", EXAMPLE_MODELS)
    def test_example_models_pass(self, name):
        report = verify_system(get_model(name), system_samples(get_model(name), 60, 42))
        assert report.passed, [c.to_dict() for c in report.failures()]

    def test_non_skew_gyroscopic_matrix_fails(self):
        s = PhSystem(n_pot=2, n_kin=2, M=np.eye(2), G=lambda g: np.array([[g[0], 0.0], [0.0, 0.0]]))
        report = verify_system(s, system_samples(s, 30))
        assert not report.passed
        assert not report["gyroscopic_skew_symmetry"].passed
        assert not report["dirac_pointwise"].passed

    def test_wrong_potential_gradient_fails(self):
        s = PhSystem(n_pot=1, n_kin=1, M=np.eye(1), V_pot=lambda z: float(z[0] ** 2), grad_V=lambda z: z)
        report = verify_system(s, system_samples(s, 30))
        assert not report["potential_gradient_consistency"].passed
        assert not report["lagrangian_submanifold"].passed

    def test_varying_constraint_rank_fails(self):
        s = PhSystem(n_pot=1, n_kin=1, M=np.eye(1), l_vel=1, A=lambda z: np.array([[z[0]]]))
        samples = SampleSet.draw([(-1.0, 1.0), (-1.0, 1.0)], 30, 0, anchors=[(0.0, 0.0)])
        report = verify_system(s, samples)
        assert not report["velocity_constraint_constant_rank"].passed
        assert not report["dirac_dimension_constancy"].passed

    def test_semidefinite_mass_is_not_an_axiom_failure(self):
        s = PhSystem(n_pot=2, n_kin=2, M=np.diag([1.0, 0.0]))
        report = verify_system(s, system_samples(s, 20))
        assert report.passed
        assert not report["mass_matrix_positive_definite"].passed

    def test_map_errors_become_error_verdicts(self):
        s = PhSystem(n_pot=1, n_kin=1, M=np.eye(1), m_ports=1, B=lambda z: np.ones((2, 2)))
        report = verify_system(s, system_samples(s, 5))
        assert report["model_evaluation"].status == "error"
        assert not report.passed

    def test_report_json_is_deterministic(self):
        a = verify_system(gyroscope(), system_samples(gyroscope(), 20, 3)).to_json()
        b = verify_system(gyroscope(), system_samples(gyroscope(), 20, 3)).to_json()
        assert a == b
        data = json.loads(a)
        assert data["overall"] == "pass" and data["samples"]["seed"] == 3

    def test_counterexample_family_report(self):
        report = verify_family(remark_counterexample())
        assert not report.passed
        v = report["dirac_dimension_constancy"]
        assert v.witness == [0.0]
        assert report["dirac_pointwise"].passed and report["constrained_dirac_pointwise"].passed


class TestWorkedCases:
    def test_pairing_examples(self):
        J = np.array([[0.0, 1.0], [-1.0, 0.0]])
        assert check_dirac_pointwise(ImageRep(J, np.eye(2))).passed
        v = check_dirac_pointwise(ImageRep(np.eye(2), np.eye(2)))
        assert not v.passed and v.magnitude == pytest.approx(2.0)

    def test_kernel_examples(self):
        J = continuous_kernel_basis(np.array([[1.0, 3.0]]), 1)
        assert J.shape == (2, 1)
        assert abs(J[0, 0] * 1.0 + J[1, 0] * 3.0) < 1e-15 and J[1, 0] != 0
        np.testing.assert_allclose(J[:, 0] / J[1, 0], [-3.0, 1.0])
        K = continuous_kernel_basis(np.array([[1.0, 0, 0], [0, 1.0, 0]]), 2)
        np.testing.assert_allclose(K[:, 0] / K[2, 0], [0, 0, 1])
        with pytest.raises(RankError):
            continuous_kernel_basis(np.zeros((1, 2)), 1)

    def test_effort_only_space_restricted(self):
        D = assemble_constrained_dirac(ImageRep(np.zeros((2, 2)), np.eye(2)), np.array([[1.0, 0.0]]))
        expected = np.array([[1.0, 0], [0, 0], [0, 0], [0, 1.0]])
        assert same_subspace(D.stacked, expected)

    def test_unconstrained_blocks(self):
        s = diff_drive()
        z = np.array([0.0, 0.0, 0.7])
        K = assemble_unconstrained_dirac(s, z, np.zeros(3)).K
        np.testing.assert_array_equal(K[3:6, 3:6], 0.0)
        np.testing.assert_allclose(K[:3, 3:6], s.Z(z))
        g = assemble_unconstrained_dirac(gyroscope(), np.zeros(3), np.array([1.0, 2.0, 3.0])).K
        np.testing.assert_allclose(g[:3, 3:6], np.eye(3))

    def test_no_constraint_family_is_constant(self):
        rep = ImageRep(np.zeros((3, 3)), np.eye(3))
        v = check_dim_constancy(lambda x: rep, lambda x: np.zeros((1, 3)), SampleSet.draw([(-1.0, 1.0)], 20))
        assert v.passed and v.detail["dimension"] == 3

    def test_scalar_quadratic_energy(self):
        assert check_lagrangian_local(lambda x: 0.5 * x @ x, lambda x: x, None, None, np.array([1.0])).passed

    def test_coulomb_friction_is_passive(self):
        mu_f, m, g = 0.3, 2.0, 9.81
        pts = [(np.zeros(1), np.array([v])) for v in np.linspace(-2, 2, 21)]
        assert check_resistive(lambda z, w: mu_f * m * g * np.sign(w), pts).passed

    def test_tampered_models(self):
        import dataclasses

        M = np.array(diff_drive().M)
        M[0, 1] += 0.1
        bad_M = dataclasses.replace(diff_drive(), M=M)
        assert not verify_system(bad_M, system_samples(bad_M, 20))["mass_matrix_symmetric"].passed

        def flipped(gamma):
            G = np.array(gyroscope().G(gamma))
            G[0, 1] = -G[0, 1]
            return G

        bad_G = dataclasses.replace(gyroscope(), G=flipped)
        report = verify_system(bad_G, system_samples(bad_G, 20))
        assert not report["gyroscopic_skew_symmetry"].passed and not report.passed
