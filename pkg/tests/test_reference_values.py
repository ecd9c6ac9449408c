"""Closed-form constants checked against the source text they were taken from."""
import math
from pathlib import Path

import pytest

from optexperts.games import horizon_for
from optexperts.instances import parity_value
from optexperts.leaders import leaders_params
from optexperts.optimizable import main_params

SOURCE = Path(__file__).resolve().parents[1] / "paper.md"


@pytest.fixture(scope="module")
def text():
    if not SOURCE.exists():
        pytest.skip("reference text not shipped with this checkout")
    return SOURCE.read_text()


@pytest.mark.parametrize("snippet", [
    r"25\sqrt{LT \log(2LT)}",
    r"\frac{2\log(NT)}{\eta} + \eta T",
    r"\frac{4\log(kT)}{\eta} + \eta kT",
    r"\frac{4\log(NT)}{\eta} + \eta NT",
    r"\eta_0 = \sqrt{\log(2LT)}",
    r"\nu = 2\eta_0 \sqrt{L/T}",
    r"\eta = 2/(N^{1/4} \sqrt{T})",
    r"\nu = 2\sqrt{\log(2T)/T}",
    r"\floor{2\sqrt{N}\log{T}}",
    r"240^2 \sqrt{N}",
    r"40 N^{1/4}\log(NT)/\sqrt{T}",
    r"{\frac{1}{4}}{if $k$ is even,}",
    r"{\frac{3}{4}}{if $k$ is odd.}",
])
def test_formula_present(text, snippet):
    assert snippet in text


@pytest.mark.parametrize("L,T", [(1, 1), (4, 100), (16, 2 ** 14)])
def test_leaders_constants(L, T):
    p = leaders_params(L, T)
    eta0 = math.sqrt(math.log(2 * L * T))
    assert p["eta0"] == eta0
    assert p["nu"] == 2 * eta0 * math.sqrt(L / T)
    assert p["gamma"] == 1 / T


@pytest.mark.parametrize("N,T,R", [(256, 4096, 266), (64, 1000, 110), (4, 16, 11), (1, 1, 1)])
def test_main_constants(N, T, R):
    p = main_params(N, T)
    assert p["eta"] == pytest.approx(2 / (N ** 0.25 * math.sqrt(T)), rel=1e-15)
    assert p["nu"] == pytest.approx(2 * math.sqrt(math.log(2 * T) / T), rel=1e-15)
    assert p["R"] == R
    assert p["L"] == math.isqrt(N)


def test_horizon_constant():
    # 240^2 sqrt(N) / eps^2 * log^2(240 N / (eps delta))
    assert horizon_for(1, 0.5, 0.5) == math.ceil(57600 / 0.25 * math.log(960) ** 2)


def test_parity_values():
    assert [parity_value(k) for k in range(4)] == [0.25, 0.75, 0.25, 0.75]
