import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from gridkalman.errors import ConditioningError, ValidationError
from gridkalman.filters import (
    A_POSTERIORI,
    A_PRIORI,
    FilterState,
    MeasurementFrame,
    dkf_update_gain_form,
    dkf_update_information_form,
    init_state,
    joseph_update,
    predict,
    sdkf_update,
)


def prior(x, P, k=1):
    return FilterState(x=np.asarray(x, dtype=float),
                       P=np.asarray(P, dtype=float), phase=A_PRIORI, k=k)


def random_problem(rng, S, D, diagonal_r=True):
    A = rng.standard_normal((S, S))
    P = A @ A.T + 1e-3 * np.eye(S)
    x = rng.standard_normal(S)
    while True:
        H = rng.standard_normal((D, S))
        if np.linalg.matrix_rank(H) == min(D, S):
            break
    z = rng.standard_normal(D)
    if diagonal_r:
        R = rng.uniform(0.1, 2.0, size=D)
    else:
        B = rng.standard_normal((D, D))
        R = B @ B.T + 0.1 * np.eye(D)
    return prior(x, P), MeasurementFrame(z=z, H=H, R=R)


def state_gap(a, b):
    ref = max(np.abs(a.x).max(), np.abs(a.P).max(), 1e-30)
    return max(np.abs(a.x - b.x).max(), np.abs(a.P - b.P).max()) / ref


class TestInitState:
    def test_single_phase_flat(self):
        st = init_state(2, np.full(2, 1e-6), phases=1)
        assert_allclose(st.x, [1.0, 0.0])
        assert_allclose(st.P, np.diag([1e-6, 1e-6]))
        assert st.phase == A_POSTERIORI and st.k == 0

    def test_three_phase_flat(self):
        st = init_state(6, np.full(6, 1e-6), phases=3)
        s3 = math.sqrt(3.0) / 2.0
        assert_allclose(st.x, [1.0, -0.5, -0.5, 0.0, -s3, +s3], atol=1e-15)

    def test_validation(self):
        with pytest.raises(ValidationError):
            init_state(3, np.ones(3))
        with pytest.raises(ValidationError):
            init_state(4, np.zeros(4))
        with pytest.raises(ValidationError):
            init_state(4, np.ones(4), phases=2)
        with pytest.raises(ValidationError):
            init_state(4, np.ones(3))


class TestPredict:
    def test_adds_q_to_diagonal(self):
        st = FilterState(x=np.array([1.0, 2.0]), P=np.eye(2), phase=A_POSTERIORI, k=0)
        out = predict(st, np.full(2, 1e-6))
        assert_allclose(out.P, np.diag([1.000001, 1.000001]))
        assert_allclose(out.x, st.x)
        assert out.phase == A_PRIORI and out.k == 1

    def test_zero_q_degenerate(self):
        st = FilterState(x=np.zeros(2), P=np.eye(2), phase=A_POSTERIORI, k=0)
        out = predict(st, np.zeros(2))
        assert_allclose(out.P, np.eye(2))

    def test_phase_bookkeeping_enforced(self):
        st = prior([0.0], [[1.0]])
        with pytest.raises(ValidationError, match="predict expects"):
            predict(st, np.ones(1))
        post = FilterState(x=np.zeros(1), P=np.eye(1), phase=A_POSTERIORI, k=0)
        with pytest.raises(ValidationError, match="update expects"):
            dkf_update_gain_form(post, MeasurementFrame(
                z=np.ones(1), H=np.ones((1, 1)), R=np.ones(1)))


class TestBatchUpdates:
    def test_scalar_gain(self):
        st = prior([0.0], [[1.0]])
        frame = MeasurementFrame(z=np.array([1.0]), H=np.array([[1.0]]),
                                 R=np.array([1.0]))
        out, diag = dkf_update_gain_form(st, frame)
        assert out.x[0] == pytest.approx(0.5)
        assert out.P[0, 0] == pytest.approx(0.5)
        assert diag.gain[0, 0] == pytest.approx(0.5)
        assert diag.innovation[0] == pytest.approx(1.0)
        assert diag.innovation_cov[0, 0] == pytest.approx(2.0)

    def test_huge_r_leaves_state(self):
        st = prior([0.3, -0.1], np.eye(2))
        frame = MeasurementFrame(z=np.array([5.0]), H=np.array([[1.0, 0.0]]),
                                 R=np.array([1e12]))
        out, _ = dkf_update_gain_form(st, frame)
        assert_allclose(out.x, st.x, atol=1e-10)

    def test_identity_h_r_equals_p_halves_covariance(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((4, 4))
        P = A @ A.T + np.eye(4)
        st = prior(rng.standard_normal(4), P)
        frame = MeasurementFrame(z=rng.standard_normal(4), H=np.eye(4), R=P.copy())
        out, _ = dkf_update_information_form(st, frame)
        assert_allclose(out.P, P / 2.0, rtol=1e-9)

    def test_gain_vs_information_form(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            S = int(rng.integers(1, 13))
            D = int(rng.integers(1, 25))
            dense = bool(rng.integers(0, 2))
            st, frame = random_problem(rng, S, D, diagonal_r=not dense)
            a, _ = dkf_update_gain_form(st, frame)
            b, _ = dkf_update_information_form(st, frame)
            assert state_gap(a, b) < 1e-9

    def test_joseph_matches_gain_form(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            st, frame = random_problem(rng, 6, 9)
            a, _ = dkf_update_gain_form(st, frame)
            j = joseph_update(st, frame)
            assert state_gap(a, j) < 1e-9
            # Joseph form is symmetric without help
            assert np.abs(j.P - j.P.T).max() < 1e-12 * np.abs(j.P).max()

    def test_singular_innovation_covariance(self):
        st = prior([0.0, 0.0], np.eye(2))
        H = np.array([[1.0, 0.0], [1.0, 0.0]])  # duplicate row, exact sensors
        frame = MeasurementFrame(z=np.zeros(2), H=H, R=np.zeros(2))
        with pytest.raises(ConditioningError):
            dkf_update_gain_form(st, frame)

    def test_shape_validation(self):
        st = prior([0.0, 0.0], np.eye(2))
        with pytest.raises(ValidationError):
            dkf_update_gain_form(st, MeasurementFrame(
                z=np.ones(2), H=np.ones((2, 3)), R=np.ones(2)))
        with pytest.raises(ValidationError):
            dkf_update_gain_form(st, MeasurementFrame(
                z=np.ones(2), H=np.ones((2, 2)), R=np.ones(3)))


class TestSequentialUpdate:
    def hand_case(self):
        st = prior([0.0], [[1.0]])
        frame = MeasurementFrame(z=np.array([1.0, 1.0]),
                                 H=np.array([[1.0], [1.0]]),
                                 R=np.array([1.0, 1.0]))
        return st, frame

    @pytest.mark.parametrize("formulation", ["A", "B"])
    def test_two_scalar_measurements_by_hand(self, formulation):
        st, frame = self.hand_case()
        out, diag = sdkf_update(st, frame, formulation=formulation)
        # after the first scalar measurement: (0.5, 0.5); then 2/3, 1/3
        assert out.x[0] == pytest.approx(2.0 / 3.0, rel=1e-12)
        assert out.P[0, 0] == pytest.approx(1.0 / 3.0, rel=1e-12)
        assert diag.innovation_cov[0] == pytest.approx(2.0)
        assert diag.innovation_cov[1] == pytest.approx(1.5)

    def test_matches_batch(self):
        st, frame = self.hand_case()
        batch, _ = dkf_update_gain_form(st, frame)
        seq, _ = sdkf_update(st, frame)
        assert state_gap(batch, seq) < 1e-12

    @pytest.mark.parametrize("formulation", ["A", "B"])
    def test_equivalence_random(self, formulation):
        rng = np.random.default_rng(13)
        for _ in range(30):
            S = int(rng.integers(1, 11))
            D = int(rng.integers(1, 21))
            st, frame = random_problem(rng, S, D)
            batch, _ = dkf_update_gain_form(st, frame)
            seq, _ = sdkf_update(st, frame, formulation=formulation)
            assert state_gap(batch, seq) < 1e-8

    def test_measurement_order_irrelevant(self):
        rng = np.random.default_rng(17)
        st, frame = random_problem(rng, 5, 12)
        base, _ = sdkf_update(st, frame)
        for _ in range(5):
            perm = rng.permutation(12)
            shuffled = MeasurementFrame(z=frame.z[perm], H=frame.H[perm],
                                        R=frame.R[perm])
            out, _ = sdkf_update(st, shuffled)
            assert state_gap(base, out) < 1e-8

    def test_intermediate_states_do_depend_on_order(self):
        rng = np.random.default_rng(19)
        st, frame = random_problem(rng, 4, 6)
        _, d1 = sdkf_update(st, frame)
        perm = np.array([5, 4, 3, 2, 1, 0])
        shuffled = MeasurementFrame(z=frame.z[perm], H=frame.H[perm], R=frame.R[perm])
        _, d2 = sdkf_update(st, shuffled)
        assert not np.allclose(d1.innovation_cov, d2.innovation_cov)

    def test_dense_r_rejected(self):
        st = prior([0.0], [[1.0]])
        frame = MeasurementFrame(z=np.ones(1), H=np.ones((1, 1)), R=np.eye(1))
        with pytest.raises(ValidationError, match="vector R"):
            sdkf_update(st, frame)

    def test_nonpositive_variance_guard(self):
        st = prior([0.0], [[0.0]])  # degenerate prior
        frame = MeasurementFrame(z=np.ones(1), H=np.ones((1, 1)),
                                 R=np.zeros(1))
        with pytest.raises(ConditioningError):
            sdkf_update(st, frame)

    def test_formulation_b_requires_positive_r(self):
        st = prior([0.0], [[1.0]])
        frame = MeasurementFrame(z=np.ones(1), H=np.ones((1, 1)),
                                 R=np.zeros(1))
        with pytest.raises(ConditioningError):
            sdkf_update(st, frame, formulation="B")

    def test_unknown_formulation(self):
        st, frame = self.hand_case()
        with pytest.raises(ValidationError):
            sdkf_update(st, frame, formulation="C")


VARIANTS = {
    "gain": lambda st, fr: dkf_update_gain_form(st, fr)[0],
    "information": lambda st, fr: dkf_update_information_form(st, fr)[0],
    "joseph": lambda st, fr: joseph_update(st, fr),
    "sequential": lambda st, fr: sdkf_update(st, fr)[0],
}


@pytest.mark.parametrize("variant", sorted(VARIANTS))
def test_covariance_stays_spd_over_long_runs(variant):
    # trimmed version of the 1000-step acceptance chain
    rng = np.random.default_rng(23)
    S, D = 6, 10
    _, frame = random_problem(rng, S, D)
    q = np.full(S, 1e-6)
    st = init_state(S, q, phases=3)
    update = VARIANTS[variant]
    for _ in range(200):
        st = predict(st, q)
        fr = MeasurementFrame(z=rng.standard_normal(D), H=frame.H, R=frame.R)
        st = update(st, fr)
        sym_err = np.abs(st.P - st.P.T).max() / np.abs(st.P).max()
        assert sym_err < 1e-8
        assert np.linalg.eigvalsh(st.P).min() > 0.0


@pytest.mark.parametrize("variant", sorted(VARIANTS))
def test_update_never_inflates_variances(variant):
    rng = np.random.default_rng(29)
    for _ in range(10):
        st, frame = random_problem(rng, 5, 8)
        out = VARIANTS[variant](st, frame)
        assert (np.diag(out.P) <= np.diag(st.P) + 1e-12).all()
