import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaussholes import IndexedCovariance, IsotropicKernel, TabulatedKernel, check_psd, eval_kernel, gram
from gaussholes.errors import DomainError, NumericalError
from gaussholes.kernels import kernel_from_config, psd_factor


def test_closed_form_values(se, ou):
    assert eval_kernel(se, 0.0) == 1.0
    assert eval_kernel(ou, math.log(2)) == pytest.approx(0.5, abs=1e-15)
    assert eval_kernel(se, 1.0) == pytest.approx(math.exp(-1), abs=1e-15)


def test_scale_and_variance():
    k = IsotropicKernel("se", scale=2.0, variance=3.0)
    assert k(0.5) == pytest.approx(3 * math.exp(-1))
    assert IsotropicKernel("exp", 0.5)(2.0) == pytest.approx(math.exp(-1))
    assert k.variance == 3.0


def test_negative_distance_rejected(se):
    with pytest.raises(DomainError):
        eval_kernel(se, -0.1)


def test_unknown_family():
    with pytest.raises(DomainError):
        IsotropicKernel("matern")


def test_gram_examples(ou):
    assert gram(ou, [[0.0, 0.0]]).entries.tolist() == [[1.0]]
    g = gram(ou, [[1.0, 2.0], [1.0, 2.0]]).entries
    assert np.all(g == 1.0)
    assert np.linalg.matrix_rank(g) == 1
    g = gram(ou, [0.0, 1.0]).entries
    np.testing.assert_allclose(g, [[1, math.exp(-1)], [math.exp(-1), 1]], atol=1e-15)


def test_gram_rejects_empty(se):
    with pytest.raises(DomainError):
        gram(se, np.zeros((0, 2)))


def test_check_psd_rejects_indefinite():
    with pytest.raises(NumericalError):
        check_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_psd_factor_rank_deficient():
    m = np.ones((3, 3))
    F = psd_factor(m)
    np.testing.assert_allclose(F @ F.T, m, atol=1e-14)


@given(st.integers(1, 25), st.sampled_from(["se", "exp"]), st.integers(0, 10_000))
def test_gram_symmetric_psd(n, fam, seed):
    pts = np.random.default_rng(seed).uniform(-2, 2, (n, 2))
    g = gram(IsotropicKernel(fam), pts).entries
    assert np.array_equal(g, g.T)
    assert np.all(np.diag(g) == 1.0)
    lam = np.linalg.eigvalsh(g)
    assert lam[0] >= -1e-10 * lam[-1]


@pytest.mark.parametrize("fam", ["se", "exp"])
def test_monotone_and_bounded(fam):
    k = IsotropicKernel(fam, 1.3, 2.0)
    t = np.linspace(0, 20, 2001)
    v = k(t)
    assert np.all(np.diff(v) <= 0)
    assert np.all((v >= 0) & (v <= k(0.0)))


def test_tabulated_matches_function():
    f = lambda t: (1 + t) ** -1.5
    k = TabulatedKernel.from_function(f, 100.0)
    t = np.array([0.0, 0.3, 1.7, 10.0, 49.5, 100.0])
    np.testing.assert_allclose(k(t), f(t), rtol=1e-6)
    assert k.monotone
    with pytest.raises(DomainError):
        k(101.0)


def test_tabulated_validation(tmp_path):
    with pytest.raises(DomainError):
        TabulatedKernel([0.1, 1.0], [1.0, 0.5])
    with pytest.raises(DomainError):
        TabulatedKernel([0.0, 1.0, 1.0], [1.0, 0.5, 0.4])
    p = tmp_path / "k.csv"
    p.write_text("distance,value\n0,1\n1,0.5\n2,0.25\n")
    k = TabulatedKernel.from_csv(p)
    assert k(1.0) == pytest.approx(0.5)
    cfg = kernel_from_config({"family": "tabulated", "path": str(p)})
    assert cfg(2.0) == pytest.approx(0.25)


def test_indexed_covariance_labels():
    c = IndexedCovariance(np.array([[1.0, 0.2], [0.2, 2.0]]))
    assert c.cov([1], [0]).tolist() == [[0.2]]
    with pytest.raises(DomainError):
        c.cov([2])
    with pytest.raises(DomainError):
        IndexedCovariance(np.array([[1.0, 0.1], [0.2, 1.0]]))
