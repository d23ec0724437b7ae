import numpy as np
import pytest
from numpy.testing import assert_allclose

from gridkalman.errors import ValidationError
from gridkalman.filters import MeasurementFrame, FilterState, A_PRIORI, predict, sdkf_update, A_POSTERIORI
from gridkalman.opcounts import (
    DKF,
    SDKF,
    OpCount,
    closed_form_op_count,
    gauss_jordan_inversion,
    instrumented_sdkf_counts,
    instrumented_sdkf_step,
)


class TestClosedForm:
    def test_sequential_two_by_two(self):
        # S = D = 2: 8 + 10 + 8 + 8 multiplications, 26 additions with
        # the prediction included
        c = closed_form_op_count(SDKF, 2, 2)
        assert c.mul_div == 34
        assert c.add_sub == 26
        assert c.inversion_add == 0 and c.inversion_mul == 0

    def test_batch_scalar_with_unit_inversion(self):
        c = closed_form_op_count(DKF, 1, 1, inversion_model=lambda d: (1, 1))
        assert c.mul_div == 7

    def test_batch_reports_inversion_terms(self):
        c = closed_form_op_count(DKF, 4, 6)
        m, n = gauss_jordan_inversion(6)
        assert c.inversion_add == m == 216
        assert c.inversion_mul == n == 216

    def test_sequential_formulas(self):
        for S in (1, 3, 8):
            for D in (1, 5, 16):
                c = closed_form_op_count(SDKF, S, D)
                assert c.add_sub == 2 * D * S * S + 2 * D * S + S
                assert c.mul_div == 2 * D * S * S + 4 * D * S + D

    def test_validation(self):
        with pytest.raises(ValidationError):
            closed_form_op_count(SDKF, 0, 1)
        with pytest.raises(ValidationError):
            closed_form_op_count("other", 2, 2)


class TestInstrumentedCounter:
    def test_matches_closed_form_exhaustively(self):
        for S in range(1, 13):
            for D in range(1, 13):
                got = instrumented_sdkf_counts(S, D)
                want = closed_form_op_count(SDKF, S, D)
                assert got == OpCount(want.add_sub, want.mul_div), (S, D)

    def test_computes_the_same_values_as_the_fast_path(self):
        rng = np.random.default_rng(31)
        S, D = 5, 9
        A = rng.standard_normal((S, S))
        P = A @ A.T + np.eye(S)
        x = rng.standard_normal(S)
        H = rng.standard_normal((D, S))
        z = rng.standard_normal(D)
        r = rng.uniform(0.5, 1.5, size=D)
        q = rng.uniform(0.1, 0.2, size=S)
        x_slow, P_slow, _ = instrumented_sdkf_step(x, P, q, z, H, r)
        st = FilterState(x=x, P=P, phase=A_POSTERIORI, k=0)
        st = predict(st, q)
        fast, _ = sdkf_update(st, MeasurementFrame(z=z, H=H, R=r))
        assert_allclose(x_slow, fast.x, rtol=1e-10)
        # the loop path skips the final re-symmetrization
        assert_allclose(0.5 * (P_slow + P_slow.T), fast.P, rtol=1e-9, atol=1e-12)


class TestScalingShape:
    def test_sequential_linear_in_measurements(self):
        # second difference in D vanishes for every S
        for S in (2, 6, 12):
            f = lambda D: closed_form_op_count(SDKF, S, D).mul_div
            for D in (1, 4, 9):
                assert f(D + 2) - 2 * f(D + 1) + f(D) == 0

    def test_batch_cubic_in_measurements(self):
        for S in (2, 6):
            f = lambda D: closed_form_op_count(DKF, S, D).mul_div
            third = lambda D: f(D + 3) - 3 * f(D + 2) + 3 * f(D + 1) - f(D)
            assert third(4) == 6  # leading D^3 coefficient is 1
            assert third(4) == third(9)

    def test_sequential_never_needs_inversion(self):
        for D in (1, 10, 50):
            c = closed_form_op_count(SDKF, 4, D)
            assert c.inversion_add == 0 and c.inversion_mul == 0
