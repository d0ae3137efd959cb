import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from symcrtl.sysmodel import (Box, KLBound, LinearSystem, LyapunovSampleCertificate,
                              NonlinearSystem, PowerFunction, ValidationError, check_dgas_samples,
                              dc_motor, linear_beta, validate_parameters, validate_system)

from oracles import expm_series, inf_norm_loops


def test_dc_motor_matrices():
    s = dc_motor()
    rep = validate_system(s)
    np.testing.assert_allclose(s.A, [[-4, -0.02], [2.5, -0.5]])
    np.testing.assert_allclose(s.B, [[0.2], [0.0]])
    np.testing.assert_allclose(s.G, [[0.0], [2.5]])
    assert rep.warnings == []


def test_degenerate_box_rejected():
    with pytest.raises(ValidationError):
        Box([1.0], [0.0])
    with pytest.raises(ValidationError):
        dc_motor(u_box=((0.7,), (0.3,)))


def test_dimension_mismatch_rejected():
    s = LinearSystem([[-1.0]], [[1.0], [2.0]], [[1.0]], Box([0], [1]), Box([0], [1]), Box([0], [1]))
    with pytest.raises(ValidationError, match="B has 2 rows"):
        validate_system(s)


def test_scalar_bilinear_system_accepted():
    s = NonlinearSystem(1, lambda x, u, v: -2 * x + u * v, 2.0, Box([1], [2]), Box([0.4], [1]),
                        Box([0], [2]), True, KLBound("exponential", c=1, lam=2))
    validate_system(s)
    assert (s.n, s.m, s.s) == (1, 1, 1)


def test_missing_beta_warns():
    s = NonlinearSystem(1, lambda x, u, v: -x, 1.0, Box([0], [1]), Box([0], [0]), Box([0], [1]))
    assert "no KL bound declared" in validate_system(s).warnings


def test_unstable_linear_warns():
    s = LinearSystem([[1.0]], [[1.0]], [[1.0]], Box([0], [1]), Box([0], [1]), Box([0], [1]))
    assert any("Hurwitz" in w for w in validate_system(s).warnings)


def test_linear_beta_values():
    assert linear_beta(np.zeros((3, 3)), 2.7) == 1.0
    assert linear_beta([[-1.0]], 1.0) == pytest.approx(math.exp(-1), abs=1e-15)
    A = dc_motor().A
    assert linear_beta(A, 5.0) == pytest.approx(inf_norm_loops(expm_series(A, 5.0)), abs=1e-10)


def test_validate_parameters_dc_motor():
    chk = validate_parameters(dc_motor().beta, 0.5, 5.0, 0.3, 0.15)
    assert chk.satisfied
    assert chk.margin == pytest.approx(0.5 - (0.5 * 0.13174 + 0.375), abs=1e-4)


def test_validate_parameters_mu_equal_eps_fails():
    assert not validate_parameters(dc_motor().beta, 0.5, 5.0, 0.5, 0.15).satisfied


def test_validate_parameters_exponential():
    chk = validate_parameters(KLBound("exponential", c=1, lam=1), 1.0, 3.0, 0.5, 0.5)
    assert chk.satisfied
    assert chk.lhs == pytest.approx(math.exp(-3) + 0.75, abs=1e-15)


def test_validate_parameters_rejects_nonpositive():
    with pytest.raises(ValidationError):
        validate_parameters(dc_motor().beta, 0.5, 0.0, 0.3, 0.15)


def test_kl_bound_json_roundtrip():
    b = KLBound("exponential", c=2.0, lam=0.5)
    assert KLBound.from_dict(b.to_dict()) == b


@settings(max_examples=60, deadline=None)
@given(r1=st.floats(0, 10), r2=st.floats(0, 10), t1=st.floats(0, 5), t2=st.floats(0, 5),
       which=st.sampled_from(["lin", "exp"]))
def test_kl_bound_monotone(r1, r2, t1, t2, which):
    b = KLBound("linear-norm", A=dc_motor().A) if which == "lin" else KLBound("exponential", c=1.5, lam=0.7)
    lo, hi = sorted((r1, r2))
    ta, tb = sorted((t1, t2))
    assert b(lo, ta) <= b(hi, ta) + 1e-15
    assert b(0.0, ta) == 0.0
    if which == "exp":
        assert b(hi, tb) <= b(hi, ta) + 1e-15


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(0.01, 0.4), eta=st.floats(0.01, 0.4), shrink=st.floats(0.1, 1.0))
def test_validate_parameters_monotone(mu, eta, shrink):
    beta = dc_motor().beta
    if validate_parameters(beta, 0.5, 5.0, mu, eta).satisfied:
        assert validate_parameters(beta, 0.5, 5.0, mu * shrink, eta * shrink).satisfied


def _sq():
    return PowerFunction(1.0, 2.0)


def test_dgas_stable_scalar_passes():
    s = LinearSystem([[-1.0]], [[0.0]], [[0.0]], Box([0], [0]), Box([0], [0]), Box([-1], [1]))
    cert = LyapunovSampleCertificate([[1.0]], _sq(), _sq(), _sq(), per_axis=7)
    assert check_dgas_samples(s, cert).passed


def test_dgas_unstable_scalar_fails():
    s = LinearSystem([[1.0]], [[0.0]], [[0.0]], Box([0], [0]), Box([0], [0]), Box([-1], [1]))
    rep = check_dgas_samples(s, LyapunovSampleCertificate([[1.0]], _sq(), _sq(), _sq(), per_axis=7))
    assert not rep.passed and rep.worst_decrease > 0 and rep.witness is not None


def test_dgas_dc_motor_lyapunov_pair():
    s = dc_motor()
    P = scipy.linalg.solve_continuous_lyapunov(s.A.T, -np.eye(2))
    # bounds in the max norm: lambda_min r^2 <= e'Pe <= 2 lambda_max r^2
    ev = np.linalg.eigvalsh(P)
    # decrease: dV = -|e|_2^2 <= -r^2
    cert = LyapunovSampleCertificate(P, PowerFunction(ev[0], 2), PowerFunction(2 * ev[-1], 2),
                                     PowerFunction(0.5, 2), per_axis=10)
    rep = check_dgas_samples(s, cert)
    assert rep.passed
    assert rep.samples == 100 * 99 * 2 * 2
