import math

import numpy as np
import pytest

from bsi import (
    DimensionMismatch,
    ForwardProblem,
    HyperParams,
    NonFinite,
    NonPositiveHyper,
    NonPositiveVariance,
    SolverState,
    neg_log_posterior,
    validate_problem,
)


def unit_hyper():
    return HyperParams(*(1.0,) * 8)


def scalar_problem(g=0.0):
    return ForwardProblem(g=[g], H=[[1.0]], D=[[1.0]])


def scalar_state(f=0.0, z=0.0, v_eps=1.0, v_xi=1.0, v_z=1.0):
    return SolverState(
        f_hat=np.array([f]), z_hat=np.array([z]),
        v_eps=np.array([v_eps]), v_xi=np.array([v_xi]), v_z=np.array([v_z]),
    )


class TestValidateProblem:
    def test_identity_case_ok(self):
        problem = ForwardProblem(g=[0.0, 0.0], H=np.eye(2))
        validate_problem(problem, unit_hyper())

    def test_shape_mismatch(self):
        problem = ForwardProblem(g=[0.0, 0.0, 0.0], H=np.zeros((2, 3)))
        with pytest.raises(DimensionMismatch):
            validate_problem(problem, unit_hyper())

    def test_nonpositive_hyper(self):
        problem = ForwardProblem(g=[0.0], H=[[1.0]])
        with pytest.raises(NonPositiveHyper):
            validate_problem(problem, HyperParams(alpha_eps=0.0))

    def test_bad_transform_shape(self):
        problem = ForwardProblem(g=[0.0, 0.0], H=np.eye(2), D=np.zeros((2, 3)))
        with pytest.raises(DimensionMismatch):
            validate_problem(problem, unit_hyper())

    def test_nonfinite_entries(self):
        problem = ForwardProblem(g=[np.nan], H=[[1.0]])
        with pytest.raises(NonFinite):
            validate_problem(problem, unit_hyper())
        problem = ForwardProblem(g=[0.0], H=[[np.inf]])
        with pytest.raises(NonFinite):
            validate_problem(problem, unit_hyper())


class TestNegLogPosterior:
    def test_all_unit_state(self):
        # zero residuals, unit variances: only the three beta/v terms remain
        L = neg_log_posterior(scalar_state(), scalar_problem(), unit_hyper())
        assert L == pytest.approx(3.0, abs=1e-14)

    def test_inflated_noise_variance(self):
        # hand-evaluated closed form: 2.5 ln 2 + 0.5 + 2
        L = neg_log_posterior(scalar_state(v_eps=2.0), scalar_problem(), unit_hyper())
        assert L == pytest.approx(2.5 * math.log(2.0) + 2.5, rel=1e-14)
        assert L == pytest.approx(4.232867951399863, rel=1e-12)

    def test_unit_residual(self):
        # residual 2 at v_eps = 1 adds 2^2/2 to the all-unit case
        L = neg_log_posterior(scalar_state(), scalar_problem(g=2.0), unit_hyper())
        assert L == pytest.approx(5.0, abs=1e-14)

    def test_direct_model_drops_z_block(self):
        problem = ForwardProblem(g=[0.0], H=[[1.0]])
        state = SolverState(f_hat=np.zeros(1), v_eps=np.ones(1), v_f=np.ones(1))
        L = neg_log_posterior(state, problem, unit_hyper())
        assert L == pytest.approx(2.0, abs=1e-14)

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(NonPositiveVariance):
            neg_log_posterior(scalar_state(v_xi=0.0), scalar_problem(), unit_hyper())
        with pytest.raises(NonPositiveVariance):
            neg_log_posterior(scalar_state(v_z=-1.0), scalar_problem(), unit_hyper())


def random_instance(rng, n=None, m=None):
    n = n or rng.randint(2, 7)
    m = m or rng.randint(2, 7)
    problem = ForwardProblem(g=rng.randn(n), H=rng.randn(n, m), D=rng.randn(m, m))
    hyper = HyperParams(*rng.uniform(0.5, 3.0, size=8))
    state = SolverState(
        f_hat=rng.randn(m), z_hat=rng.randn(m),
        v_eps=rng.uniform(0.2, 2.0, size=n),
        v_xi=rng.uniform(0.2, 2.0, size=m),
        v_z=rng.uniform(0.2, 2.0, size=m),
    )
    return problem, hyper, state


class TestCriterionProperties:
    def test_row_permutation_invariance(self):
        rng = np.random.RandomState(11)
        for _ in range(20):
            problem, hyper, state = random_instance(rng)
            perm = rng.permutation(problem.n_obs)
            permuted = ForwardProblem(g=problem.g[perm], H=problem.H[perm], D=problem.D)
            pstate = SolverState(
                f_hat=state.f_hat, z_hat=state.z_hat,
                v_eps=state.v_eps[perm], v_xi=state.v_xi, v_z=state.v_z,
            )
            assert neg_log_posterior(state, problem, hyper) == pytest.approx(
                neg_log_posterior(pstate, permuted, hyper), rel=1e-12)

    def test_midpoint_convexity_in_f_z(self):
        # for fixed variances L is a convex quadratic in (f, z)
        rng = np.random.RandomState(12)
        for _ in range(20):
            problem, hyper, state = random_instance(rng)
            f1, z1 = rng.randn(problem.n_coef), rng.randn(problem.n_coef)
            f2, z2 = rng.randn(problem.n_coef), rng.randn(problem.n_coef)

            def at(f, z):
                s = SolverState(f_hat=f, z_hat=z, v_eps=state.v_eps,
                                v_xi=state.v_xi, v_z=state.v_z)
                return neg_log_posterior(s, problem, hyper)

            mid = at(0.5 * (f1 + f2), 0.5 * (z1 + z2))
            assert mid <= 0.5 * at(f1, z1) + 0.5 * at(f2, z2) + 1e-10

    def test_divergence_as_variance_vanishes(self):
        # shrinking any family's variances by 10 with nonzero residual/beta grows L
        rng = np.random.RandomState(13)
        problem, hyper, state = random_instance(rng)
        for family in ("v_eps", "v_xi", "v_z"):
            values = []
            scale = 1.0
            for _ in range(8):
                fields = {
                    "f_hat": state.f_hat, "z_hat": state.z_hat,
                    "v_eps": state.v_eps.copy(), "v_xi": state.v_xi.copy(),
                    "v_z": state.v_z.copy(),
                }
                fields[family] = fields[family] * scale
                values.append(neg_log_posterior(SolverState(**fields), problem, hyper))
                scale /= 10.0
            diffs = np.diff(values)
            assert np.all(diffs[2:] > 0), f"{family}: L not increasing {values}"
            assert values[-1] > values[0]
