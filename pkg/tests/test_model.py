import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oparch.errors import FourthMomentDiverges, InvalidParams, NonStationaryMean
from oparch.model import (
    CccParams,
    lyapunov_mc,
    mean_sigma,
    mean_sigma_fixed_point,
    population_cov_diag,
    sufficient_margin_value,
    sufficient_stationarity_margin,
    validate,
)

# E log chi^2_1 = digamma(1/2) + log 2, evaluated by quadrature of log(x) against the chi^2_1 density
E_LOG_CHI2 = -1.2703628454614782


def test_validate_reports_all(ou50):
    p = CccParams(1, ou50, [-1.0, 1.0], [[0.0, 0.0]])
    errs = validate(p)
    assert any("Δ" in e for e in errs) and any("α_p" in e for e in errs)


def test_from_arrays_raises(ou50):
    with pytest.raises(InvalidParams) as exc:
        CccParams.from_arrays("ou", [1.0], [[-0.1]])
    assert exc.value.violations


def test_json_roundtrip(tmp_path, low_dim):
    low_dim.to_json(tmp_path / "p.json")
    back = CccParams.from_json(tmp_path / "p.json")
    assert np.array_equal(back.delta, low_dim.delta) and np.array_equal(back.alpha, low_dim.alpha)
    assert json.loads((tmp_path / "p.json").read_text())["K_model"] == 2


def test_from_dict_checks_dimensions():
    with pytest.raises(InvalidParams):
        CccParams.from_dict({"kernel": "bm", "delta": [1.0], "alpha": [[0.1]], "p": 2})


@pytest.mark.parametrize("a,ok", [(0.55, True), (0.56, False)])
def test_margin_flip_p3_bm(a, ok):
    p = CccParams.from_arrays("bm", [1.0], [[a / 3], [a / 3], [a / 3]])
    assert sufficient_stationarity_margin(p).satisfied is ok


def test_margin_value_by_hand():
    # x = 0.5 * 0.5 = 0.25 ; p = 2: x * (1 * x + 2) = 0.5625
    assert sufficient_margin_value(0.5, 0.5, 2) == pytest.approx(0.5625)


@given(st.floats(0.01, 2.0), st.floats(0.01, 2.0), st.integers(1, 4))
def test_margin_monotone_in_norm(b1, b2, p):
    lo, hi = sorted((b1, b2))
    assert sufficient_margin_value(lo, 0.5, p) <= sufficient_margin_value(hi, 0.5, p) + 1e-15


def test_lyapunov_p1_oracle(bm50):
    p = CccParams.from_arrays("bm", [1.0], [[2.0]])
    g, se = lyapunov_mc(p, steps=2000, reps=50, seed=0)
    assert g == pytest.approx(np.log(2 * bm50.eigenvalues[0]) + E_LOG_CHI2, abs=0.1)
    assert se < 0.05


def test_lyapunov_seeded_reproducible(low_dim):
    assert lyapunov_mc(low_dim, 200, 10, 3) == lyapunov_mc(low_dim, 200, 10, 3)


def test_mean_sigma_and_fixed_point(low_dim):
    mu = mean_sigma(low_dim)
    assert np.allclose(mean_sigma_fixed_point(low_dim, mu), mu)


def test_mean_sigma_nonstationary():
    with pytest.raises(NonStationaryMean):
        mean_sigma(CccParams.from_arrays("bm", [1.0], [[3.0]]))


def test_population_cov_diag_formula(bm50):
    p = CccParams.from_arrays("bm", bm50.eigenvalues[:2], [[0.4, 0.4]])
    lam, d, a = bm50.eigenvalues[:2], bm50.eigenvalues[:2], 0.4
    expect = lam**2 * 2 * d**2 / ((1 - lam * a) ** 2 * (1 - 3 * lam**2 * a**2))
    assert np.allclose(population_cov_diag(p), expect)


def test_fourth_moment_diverges(low_dim):
    with pytest.raises(FourthMomentDiverges):
        population_cov_diag(low_dim)


def test_params_immutable(low_dim):
    with pytest.raises(ValueError):
        low_dim.alpha[0, 0] = 1.0
