import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgmc.errors import ResourceCapError, UnsupportedKernelError
from fgmc.exact import (
    brute_force_summary,
    exact_summary,
    summaries_agree,
    transfer_matrix_summary,
)
from fgmc.graph import EXACT_BINS, MINUS, PLUS, GridModel, PairwiseKernel, cplx15i, neg13, pm

from oracle import CPLX15I, NEG13, enumerate_bins

# Regression constants from the naive enumeration in oracle.py.
NEG13_3X3_ZPLUS = 690.6960143320824
NEG13_3X3_ZMINUS = -684.1834555720009
CPLX_3X3 = {0: 1267.801025390625, 1: 784.34375j, 2: -558.53125, 3: -285j}
CPLX_3X3_COUNTS = {0: 144, 1: 128, 2: 144, 3: 96}


def check_invariants(s):
    n = s.n
    assert sum(s.counts.values()) + s.zero_count == 2**n
    zf = sum((s.z(b) for b in s.bins), 0j)
    assert s.z_f == pytest.approx(zf, rel=1e-12, abs=1e-12)
    assert s.z_abs == pytest.approx(sum(abs(s.z(b)) for b in s.bins), rel=1e-12)
    assert s.z_plus >= 0 and s.z_minus <= 0
    if all(s.count(b) == 0 for b in EXACT_BINS if b.turn % 2):
        assert s.z_abs == pytest.approx(s.z_plus - s.z_minus, rel=1e-12)


def test_pm1_2x2_all_positive():
    s = brute_force_summary(GridModel(2, 2, pm(1)))
    assert s.z_f == 16 and s.z_minus == 0
    assert s.count(PLUS) == 16


def test_pm1_3x3_cancels():
    for s in (brute_force_summary(GridModel(3, 3, pm(1))), transfer_matrix_summary(GridModel(3, 3, pm(1)))):
        assert s.z_f == 0
        assert s.count(PLUS) == s.count(MINUS) == 256
        assert s.z_plus == 256


def test_neg13_3x3_regression_and_oracle():
    s = brute_force_summary(GridModel(3, 3, neg13()))
    sums, counts, zero = enumerate_bins(NEG13, 3, 3)
    assert s.z_plus == pytest.approx(NEG13_3X3_ZPLUS, rel=1e-12)
    assert s.z_minus == pytest.approx(NEG13_3X3_ZMINUS, rel=1e-12)
    assert s.z_plus == pytest.approx(sums[0].real, rel=1e-12)
    assert s.count(PLUS) == counts[0] == 256 and zero == 0
    check_invariants(s)


def test_cplx15i_3x3_four_bins():
    s = brute_force_summary(GridModel(3, 3, cplx15i()))
    sums, counts, _ = enumerate_bins(CPLX15I, 3, 3)
    for b in EXACT_BINS:
        assert s.count(b) == counts[b.turn] == CPLX_3X3_COUNTS[b.turn]
        assert s.z(b) == pytest.approx(CPLX_3X3[b.turn], rel=1e-12)
        assert s.z(b) == pytest.approx(sums[b.turn], rel=1e-12)
    assert sum(s.counts.values()) == 512
    check_invariants(s)


@pytest.mark.parametrize("kernel", [neg13(), cplx15i(), pm(1), pm(-2.5), pm(1j)], ids=lambda k: k.name)
@pytest.mark.parametrize("shape", [(1, 1), (1, 6), (2, 2), (3, 3), (3, 4), (4, 3), (2, 5)])
def test_brute_equals_transfer(kernel, shape):
    model = GridModel(*shape, kernel)
    a = brute_force_summary(model)
    b = transfer_matrix_summary(model)
    assert summaries_agree(a, b)
    assert a.counts == b.counts and a.zero_count == b.zero_count
    check_invariants(a)
    check_invariants(b)


def test_zero_entry_kernel_counts_zero_bin():
    k = PairwiseKernel.from_values([[1, 0], [-1, 2]])
    model = GridModel(3, 3, k)
    a = brute_force_summary(model)
    b = transfer_matrix_summary(model)
    assert a.zero_count > 0
    assert summaries_agree(a, b) and a.zero_count == b.zero_count
    check_invariants(a)


def test_neg13_6x6_exact_target():
    s = transfer_matrix_summary(GridModel(6, 6, neg13()))
    assert s.log2_z(PLUS) / 36 == pytest.approx(1.18004, abs=5e-5)


def test_pm1_12x12_counts_are_exact_integers():
    s = transfer_matrix_summary(GridModel(12, 12, pm(1)))
    assert s.count(PLUS) == s.count(MINUS) == 2**143
    assert isinstance(s.count(PLUS), int)
    assert abs(s.z_f) <= 1e-9 * s.z_abs


@pytest.mark.parametrize("a", [1.0, -1.0, 2.5, 0.3, 1j, -2j])
@pytest.mark.parametrize("m", [3, 4, 5])
def test_pm_kernels_cancel(a, m):
    s = transfer_matrix_summary(GridModel(m, m, pm(a)))
    assert abs(s.z_f) <= 1e-9 * s.z_abs
    n = m * m
    if complex(a).imag == 0:
        assert s.count(PLUS) == s.count(MINUS) == 2 ** (n - 1)
        assert s.z_plus == pytest.approx(-s.z_minus, rel=1e-12)
        assert s.z_plus == pytest.approx(s.z_abs / 2, rel=1e-12)
    if a in (1.0, -1.0):
        assert s.z_plus == 2 ** (n - 1)


@pytest.mark.parametrize("m", [3, 4, 5])
def test_neg13_sign_counts_match_pm1(m):
    s = transfer_matrix_summary(GridModel(m, m, neg13()))
    assert s.count(PLUS) == s.count(MINUS) == 2 ** (m * m - 1)


@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from([neg13(), cplx15i(), pm(-2.5)]),
    st.floats(0.2, 3.0),
    st.integers(1, 3),
    st.integers(1, 4),
)
def test_kernel_scaling(kernel, c, rows, cols):
    model = GridModel(rows, cols, kernel)
    base = transfer_matrix_summary(model)
    scaled = transfer_matrix_summary(GridModel(rows, cols, kernel.scaled(c)))
    e = model.n_edges
    assert scaled.counts == base.counts
    for b in base.bins:
        if base.count(b):
            assert scaled.log2_z(b) == pytest.approx(base.log2_z(b) + e * math.log2(c), abs=1e-9)


def test_caps():
    with pytest.raises(ResourceCapError):
        brute_force_summary(GridModel(5, 5, neg13()))
    with pytest.raises(ResourceCapError):
        transfer_matrix_summary(GridModel(2, 15, neg13()))
    with pytest.raises(UnsupportedKernelError):
        transfer_matrix_summary(GridModel(2, 2, PairwiseKernel.from_values([[1, 1 + 1j], [1, 1]])))


def test_general_phase_kernel_brute_force():
    k = PairwiseKernel.from_values([[1, 0.5 + 0.5j], [2, -1]])
    s = brute_force_summary(GridModel(2, 2, k))
    assert sum(s.counts.values()) + s.zero_count == 16
    total = sum((s.z(b) for b in s.bins), 0j)
    assert s.z_f == pytest.approx(total)


def test_exact_summary_auto():
    assert exact_summary(GridModel(3, 3, neg13())).method == "transfer"
    k = PairwiseKernel.from_values([[1, 0.5 + 0.5j], [2, -1]])
    assert exact_summary(GridModel(2, 2, k)).method == "brute"


def test_summary_json_shape():
    doc = transfer_matrix_summary(GridModel(3, 3, cplx15i())).to_json()
    json.dumps(doc)
    assert set(doc["bins"]) >= {"plus", "minus", "plus_i", "minus_i"}
    assert doc["bins"]["plus"]["count"] == "144"
    assert doc["bins"]["plus"]["sum"] == pytest.approx([1267.801025390625, 0.0])
