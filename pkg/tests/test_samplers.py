import itertools

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fgmc.errors import EmptyBinError, PreconditionError
from fgmc.exact import brute_force_summary
from fgmc.graph import (
    MINUS,
    MINUS_I,
    PLUS,
    GridModel,
    PairwiseKernel,
    classify_phase,
    cplx15i,
    evaluate_batch,
    evaluate_f,
    neg13,
    pm,
    unpack_assignment,
)
from fgmc.samplers import (
    SCHEMES,
    SampleBlock,
    SamplerConfig,
    gibbs_sample_abs,
    iter_samples,
    read_sample_dump,
    sample_row_conditional,
    single_site_weights,
    take_bin,
    uniform_bin_sample,
    uniform_sample,
    write_sample_dump,
)

from oracle import NEG13, all_values


def collect(blocks):
    blocks = list(blocks)
    return (
        np.concatenate([b.bits for b in blocks]),
        np.concatenate([b.log2_abs for b in blocks]),
        np.concatenate([b.code for b in blocks]),
    )


def state_index(bits):
    return bits.astype(np.int64) @ (1 << np.arange(bits.shape[1], dtype=np.int64))


def all_weights(model):
    n = model.n
    allb = np.array([unpack_assignment(v, n) for v in range(1 << n)], dtype=np.uint8)
    log2, code, _ = evaluate_batch(model, allb)
    return 2.0**log2, code


# -- config and determinism -----------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(burn_in=-1)
    with pytest.raises(ValueError):
        SamplerConfig(thinning=0)
    with pytest.raises(ValueError):
        SamplerConfig(scheme="random-site")


@pytest.mark.parametrize("scheme", SCHEMES)
def test_gibbs_is_deterministic(scheme):
    g = GridModel(4, 5, neg13())
    cfg = SamplerConfig(seed=11, chain_id=3, scheme=scheme)
    a = collect(gibbs_sample_abs(g, cfg, 500, block_size=128))
    b = collect(gibbs_sample_abs(g, cfg, 500, block_size=77))
    assert np.array_equal(a[0], b[0])
    c = collect(gibbs_sample_abs(g, cfg.for_chain(4), 500))
    assert not np.array_equal(a[0], c[0])


def test_uniform_is_deterministic_and_chains_differ():
    g = GridModel(3, 3, neg13())
    a = collect(uniform_sample(g, SamplerConfig(seed=5), 1000))[0]
    b = collect(uniform_sample(g, SamplerConfig(seed=5), 1000))[0]
    c = collect(uniform_sample(g, SamplerConfig(seed=5, chain_id=1), 1000))[0]
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_binned_samples_carry_value_and_bin():
    g = GridModel(3, 3, cplx15i())
    for s in itertools.islice(iter_samples(uniform_sample(g, SamplerConfig(seed=1), 50)), 50):
        v = evaluate_f(g, s.x)
        assert s.value.turn == v.turn
        assert s.value.magnitude == pytest.approx(v.magnitude, rel=1e-12)
        assert s.bin == classify_phase(v)


# -- uniform and rejection ------------------------------------------------------

def test_uniform_plus_fraction_pm1():
    g = GridModel(3, 3, pm(1))
    _, _, code = collect(uniform_sample(g, SamplerConfig(seed=2), 10**5))
    assert abs((code == 0).mean() - 0.5) < 0.005


def test_rejection_acceptance_rate_pm1():
    g = GridModel(3, 3, pm(1))
    sampler = uniform_bin_sample(g, SamplerConfig(seed=3), PLUS, 10**5)
    _, _, code = collect(sampler)
    assert (code == 0).all() and len(code) == 10**5
    assert abs(sampler.acceptance_rate - 0.5) < 0.005


def test_rejection_is_uniform_on_bin():
    # 2x2 cplx15i has 8 assignments in the plus bin.
    g = GridModel(2, 2, cplx15i())
    bits, _, code = collect(uniform_bin_sample(g, SamplerConfig(seed=4), PLUS, 40000))
    _, all_code = all_weights(g)
    members = np.flatnonzero(all_code == 0)
    obs = np.bincount(state_index(bits), minlength=16)
    assert obs[all_code != 0].sum() == 0
    assert stats.chisquare(obs[members]).pvalue > 0.01


def test_rejection_empty_bin_raises():
    g = GridModel(2, 2, neg13())
    with pytest.raises(EmptyBinError):
        list(uniform_bin_sample(g, SamplerConfig(), MINUS_I, 1, max_draws=1000, block_size=256))


# -- Gibbs on |f| -----------------------------------------------------------------

def test_gibbs_rejects_zero_entries():
    g = GridModel(2, 2, PairwiseKernel.from_values([[1, 0], [1, 1]]))
    with pytest.raises(PreconditionError):
        next(gibbs_sample_abs(g, SamplerConfig(), 10))


def test_gibbs_log2_and_code_match_evaluation():
    for kernel in (neg13(), cplx15i(), PairwiseKernel.from_values([[1, 0.5 + 0.5j], [2, -1]])):
        g = GridModel(3, 4, kernel)
        bits, log2, code = collect(gibbs_sample_abs(g, SamplerConfig(seed=9), 300))
        ref_log2, ref_code, _ = evaluate_batch(g, bits)
        assert np.allclose(log2, ref_log2, atol=1e-12)
        assert np.array_equal(code, ref_code)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_gibbs_bin_masses_3x3(scheme):
    """Bin frequencies under p_|f| match |Z+|/Z_|f| within 3 standard errors across chains."""
    g = GridModel(3, 3, neg13())
    s = brute_force_summary(g)
    target = s.z_plus / s.z_abs
    fracs = []
    for c in range(20):
        _, _, code = collect(gibbs_sample_abs(g, SamplerConfig(seed=21, chain_id=c, scheme=scheme), 5000))
        fracs.append((code == 0).mean())
    fracs = np.array(fracs)
    se = fracs.std(ddof=1) / np.sqrt(len(fracs))
    assert abs(fracs.mean() - target) < 3 * se + 1e-12


def test_schemes_agree_on_marginals():
    g = GridModel(3, 3, neg13())
    w, _ = all_weights(g)
    p = w / w.sum()
    allb = np.array([unpack_assignment(v, 9) for v in range(512)])
    exact_marg = p @ allb
    for scheme in SCHEMES:
        per_chain = []
        for c in range(10):
            bits, _, _ = collect(gibbs_sample_abs(g, SamplerConfig(seed=33, chain_id=c, scheme=scheme), 4000))
            per_chain.append(bits.mean(axis=0))
        per_chain = np.array(per_chain)
        se = per_chain.std(axis=0, ddof=1) / np.sqrt(len(per_chain))
        assert np.all(np.abs(per_chain.mean(axis=0) - exact_marg) < 3 * se + 1e-3)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_restriction_property(scheme):
    """Gibbs samples on |f| kept only in one sign bin are distributed as f / Z_b on that bin."""
    g = GridModel(3, 3, neg13())
    w, code = all_weights(g)
    bits, _, got_code = collect(gibbs_sample_abs(g, SamplerConfig(seed=7, scheme=scheme, thinning=10), 60000))
    idx = state_index(bits)
    for c in (0, 2):
        sel = code == c
        obs = np.bincount(idx[got_code == c], minlength=512)[sel]
        exp = w[sel] / w[sel].sum() * obs.sum()
        assert stats.chisquare(obs, exp).pvalue > 0.001


def test_take_bin_stops_at_count():
    g = GridModel(3, 3, neg13())
    blocks = list(take_bin(gibbs_sample_abs(g, SamplerConfig(seed=1), None, block_size=64), MINUS, 1000))
    code = np.concatenate([b.code for b in blocks])
    assert len(code) == 1000 and (code == 2).all()


# -- exactness of the local updates ------------------------------------------------

def test_single_site_detailed_balance_symbolic():
    a, b, c, d = sympy.symbols("a b c d", positive=True)
    tab = [[a, b], [c, d]]
    rows, cols = 1, 2

    def weight(x):
        return tab[x[0]][x[1]]

    states = list(itertools.product((0, 1), repeat=2))
    Z = sum(weight(x) for x in states)
    for x in states:
        for i in range(2):
            y = list(x)
            y[i] ^= 1
            w_x = single_site_weights(tab, rows, cols, list(x), i)
            w_y = single_site_weights(tab, rows, cols, y, i)
            p_xy = w_x[y[i]] / (w_x[0] + w_x[1])
            p_yx = w_y[x[i]] / (w_y[0] + w_y[1])
            lhs = weight(x) / Z * p_xy
            rhs = weight(tuple(y)) / Z * p_yx
            assert sympy.simplify(lhs - rhs) == 0


def test_single_site_weights_symbolic_grid():
    # Interior site of a 3x3 grid: the weight is the product of its four incident factors.
    syms = sympy.symbols("k00 k01 k10 k11", positive=True)
    tab = [[syms[0], syms[1]], [syms[2], syms[3]]]
    x = [0, 1, 0, 1, 0, 1, 1, 0, 0]
    w0, w1 = single_site_weights(tab, 3, 3, x, 4)
    assert sympy.simplify(w0 - tab[1][0] * tab[0][1] * tab[1][0] * tab[0][0]) == 0
    assert sympy.simplify(w1 - tab[1][1] * tab[1][1] * tab[1][1] * tab[1][0]) == 0


@pytest.mark.parametrize("r", [0, 1, 2])
def test_row_conditional_is_exact(r):
    g = GridModel(3, 4, neg13())
    rng = np.random.default_rng(100 + r)
    env = rng.integers(0, 2, size=g.n).astype(np.uint8)
    cols = g.cols
    # Enumerated conditional over the 16 row configurations.
    weights = []
    for v in range(1 << cols):
        x = env.copy()
        x[r * cols:(r + 1) * cols] = unpack_assignment(v, cols)
        weights.append(abs(evaluate_f(g, x).to_complex()))
    weights = np.array(weights)
    draws = 20000
    obs = np.zeros(1 << cols)
    for _ in range(draws):
        y = sample_row_conditional(g, env, r, rng)
        assert np.array_equal(np.delete(y, range(r * cols, (r + 1) * cols)),
                              np.delete(env, range(r * cols, (r + 1) * cols)))
        obs[int(state_index(y[None, r * cols:(r + 1) * cols])[0])] += 1
    exp = weights / weights.sum() * draws
    assert stats.chisquare(obs, exp).pvalue > 0.001


# -- binary dump -------------------------------------------------------------------

@settings(max_examples=10, deadline=None)
@given(rows=st.integers(1, 4), cols=st.integers(1, 5), seed=st.integers(0, 2**64 - 1), chain=st.integers(0, 1000))
def test_dump_round_trip(tmp_path_factory, rows, cols, seed, chain):
    g = GridModel(rows, cols, neg13())
    cfg = SamplerConfig(seed=seed, chain_id=chain, scheme="row-blocked")
    blocks = list(gibbs_sample_abs(g, cfg, 37, block_size=10))
    path = tmp_path_factory.mktemp("dump") / "s.bin"
    assert write_sample_dump(path, g, cfg, blocks) == 37
    header, bits = read_sample_dump(path)
    assert header == {"n": g.n, "seed": seed, "chain_id": chain, "scheme": "row-blocked"}
    assert np.array_equal(bits, np.concatenate([b.bits for b in blocks]))


def test_dump_layout_is_little_endian_bits(tmp_path):
    g = GridModel(1, 10, neg13())
    bits = np.zeros((1, 10), dtype=np.uint8)
    bits[0, [0, 9]] = 1
    block = SampleBlock.from_bits(g, bits)
    path = tmp_path / "d.bin"
    write_sample_dump(path, g, SamplerConfig(seed=1), [block], scheme="uniform")
    raw = path.read_bytes()
    assert raw[:8] == b"FGMCDUMP" and len(raw) == 32 + 2
    assert raw[32:] == bytes([0b00000001, 0b00000010])


def test_oracle_weights_agree():
    g = GridModel(2, 2, neg13())
    w, _ = all_weights(g)
    ref = [abs(v) for _, v in sorted(all_values(NEG13, 2, 2), key=lambda t: sum(b << j for j, b in enumerate(t[0])))]
    assert np.allclose(w, ref, rtol=1e-12)
