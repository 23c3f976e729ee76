import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oparch import io
from oparch.errors import FormatError, NonPositivePrice


def test_flat_prices_give_zero():
    p = io.PricePanel(["d1", "d2"], [[99.0, 100.0], [100.0, 100.0]])
    assert np.allclose(io.build_ocidr(p), 0)


def test_exponential_prices_give_time():
    t = np.array([0.25, 0.75])
    p = io.PricePanel(["a", "b"], [[1.0, 50.0], 50.0 * np.exp(t / 100)])
    assert np.allclose(io.build_ocidr(p)[0], t, atol=1e-12)


def test_two_day_example():
    p = io.PricePanel(["2020-01-01", "2020-01-02"], [[99.0, 100.0], [101.0, 102.0]])
    # 100 * log(1.01), 100 * log(1.02)
    assert np.allclose(io.build_ocidr(p)[0], [0.9950330853168092, 1.980262729617973], atol=1e-9)


def test_nonpositive_price():
    p = io.PricePanel(["a", "b"], [[1.0, 1.0], [1.0, 0.0]])
    with pytest.raises(NonPositivePrice):
        io.build_ocidr(p)


def test_days_must_increase():
    with pytest.raises(FormatError):
        io.PricePanel(["b", "a"], [[1.0], [1.0]])


def test_price_csv_roundtrip(tmp_path):
    p = io.PricePanel(["2020-01-02", "2020-01-03"], [[1.5, 2.25, 3.0], [4.0, 5.0, 6.125]])
    io.write_prices(tmp_path / "p.csv", p)
    q = io.read_prices(tmp_path / "p.csv")
    assert q.days == p.days and np.array_equal(q.prices, p.prices)


def test_missing_point_rejected(tmp_path):
    (tmp_path / "p.csv").write_text("day,time_index,price\nA,1,1\nA,2,1\nB,1,1\n")
    with pytest.raises(FormatError):
        io.read_prices(tmp_path / "p.csv")


@given(st.sampled_from(["bm", "ou"]), st.integers(1, 5), st.floats(0.05, 0.95))
def test_run_config_roundtrip(kernel, p, tve):
    cfg = io.RunConfig(kernel=kernel, p=p, tve=tve)
    assert io.RunConfig.from_dict(cfg.to_dict()) == cfg


def test_run_config_validation():
    with pytest.raises(ValueError):
        io.RunConfig(split=1.5)
    with pytest.raises(ValueError):
        io.RunConfig.from_dict({"bogus": 1})


def test_svg_writer(tmp_path):
    io.write_svg_lines(tmp_path / "a.svg", {"x": ([0, 1], [0, 2])}, title="t")
    assert (tmp_path / "a.svg").read_text().startswith("<svg")
