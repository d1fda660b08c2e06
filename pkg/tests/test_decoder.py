import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdarecon.channel import channel_llrs, simulate_frame
from mdarecon.decoder import DecoderConfig, Termination, inherit_llrs, spa_decode
from mdarecon.pcm import SparsePCM, generate_raptor_family, syndrome, window
from oracles import dense_spa, exhaustive_ml


def _noisy_problem(w, sigma, seed):
    rng = np.random.default_rng(seed)
    fr = simulate_frame(w.n + (w.n % 2), 0, sigma, rng)
    key = fr.raw_key[:w.n]
    llr = channel_llrs(fr.alice_symbols, fr.magnitudes, sigma)[:w.n]
    return key, llr, syndrome(w, key)


def test_config_validation():
    with pytest.raises(ValueError):
        DecoderConfig(l_max=0)
    with pytest.raises(ValueError):
        DecoderConfig(et_window=1)
    with pytest.raises(ValueError):
        DecoderConfig(llr_clamp=0)
    with pytest.raises(ValueError):
        DecoderConfig(check_rule="bp")


def test_noiseless_converges_at_first_iteration(mid_raptor, rng):
    w = window(mid_raptor, 0)
    key = rng.integers(0, 2, w.n, dtype=np.uint8)
    llr = np.where(key == 0, 25.0, -25.0)
    out = spa_decode(w, llr, syndrome(w, key), DecoderConfig(l_max=10))
    assert out.success and out.iterations_used == 1
    assert out.termination is Termination.CONVERGED
    assert np.array_equal(out.decoded_bits, key)


def test_toy_single_corrupted_bit_matches_exhaustive(toy_pcm):
    w = window(toy_pcm, 0)
    key = np.array([1, 0, 1, 1, 0, 1], dtype=np.uint8)
    llr = np.where(key == 0, 8.0, -8.0)
    llr[1] = -1.5  # wrong sign, weak
    target = syndrome(w, key)
    out = spa_decode(w, llr, target, DecoderConfig(l_max=20))
    ml, margin = exhaustive_ml(toy_pcm.to_dense(), llr, target)
    assert margin > np.log(10)
    assert out.success and np.array_equal(out.decoded_bits, ml)
    assert np.array_equal(ml, key)


def test_zero_llrs_do_not_converge(mid_raptor):
    w = window(mid_raptor, 0)
    target = np.zeros(w.m, dtype=np.uint8)
    target[::7] = 1
    out = spa_decode(w, np.zeros(w.n), target, DecoderConfig(l_max=15))
    assert not out.success and out.termination is Termination.MAX_ITERATIONS
    assert out.iterations_used == 15
    out = spa_decode(w, np.zeros(w.n), target, DecoderConfig(l_max=50, et_enabled=True))
    assert out.termination is Termination.EARLY_TERMINATED
    assert out.iterations_used == 5 and not out.success


def test_zero_llrs_zero_syndrome_is_the_tie_break_codeword(mid_raptor):
    # LLR 0 decodes to bit 0, which satisfies an all-zero syndrome
    w = window(mid_raptor, 0)
    out = spa_decode(w, np.zeros(w.n), np.zeros(w.m, dtype=np.uint8), DecoderConfig(l_max=5))
    assert out.success and not out.decoded_bits.any()


def test_length_and_finiteness_errors(mid_raptor):
    w = window(mid_raptor, 0)
    cfg = DecoderConfig(l_max=2)
    tgt = np.zeros(w.m, dtype=np.uint8)
    with pytest.raises(ValueError):
        spa_decode(w, np.zeros(w.n - 1), tgt, cfg)
    with pytest.raises(ValueError):
        spa_decode(w, np.zeros(w.n), tgt[:-1], cfg)
    with pytest.raises(ValueError):
        spa_decode(w, np.zeros(w.n), tgt, cfg, initial_llrs=np.zeros(3))
    bad = np.zeros(w.n)
    bad[4] = np.nan
    with pytest.raises(ValueError):
        spa_decode(w, bad, tgt, cfg)


def test_success_implies_syndrome_and_budget(mid_raptor):
    w = window(mid_raptor, 0)
    for seed in range(20):
        key, llr, tgt = _noisy_problem(w, 1 / np.sqrt(0.9), seed)
        out = spa_decode(w, llr, tgt, DecoderConfig(l_max=60))
        assert out.iterations_used <= 60
        assert out.success == (out.termination is Termination.CONVERGED)
        if out.success:
            assert np.array_equal(syndrome(w, out.decoded_bits), tgt)


def test_determinism(mid_raptor):
    w = window(mid_raptor, 0)
    key, llr, tgt = _noisy_problem(w, 1 / np.sqrt(0.7), 3)
    a = spa_decode(w, llr, tgt, DecoderConfig(l_max=80))
    b = spa_decode(w, llr, tgt, DecoderConfig(l_max=80))
    assert a.iterations_used == b.iterations_used
    assert np.array_equal(a.posterior_llrs, b.posterior_llrs)
    assert np.array_equal(a.edge_messages, b.edge_messages)


def test_monotone_budget(mid_raptor):
    w = window(mid_raptor, 0)
    for seed in range(15):
        _, llr, tgt = _noisy_problem(w, 1 / np.sqrt(0.7), 100 + seed)
        small = spa_decode(w, llr, tgt, DecoderConfig(l_max=30))
        if small.success:
            big = spa_decode(w, llr, tgt, DecoderConfig(l_max=200))
            assert big.success and big.iterations_used == small.iterations_used
            assert np.array_equal(big.decoded_bits, small.decoded_bits)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.1, 1e6))
def test_saturation_safety(seed, scale):
    pcm = generate_raptor_family(seed % 50, 60, 40, 10, 2)
    w = window(pcm, seed % 11)
    rng = np.random.default_rng(seed)
    llr = rng.standard_normal(w.n) * scale
    tgt = rng.integers(0, 2, w.m, dtype=np.uint8)
    out = spa_decode(w, llr, tgt, DecoderConfig(l_max=20, llr_clamp=30.0))
    assert np.all(np.isfinite(out.posterior_llrs)) and np.all(np.isfinite(out.edge_messages))
    assert np.abs(out.posterior_llrs).max() <= 30.0
    assert np.abs(out.edge_messages).max() <= 30.0


def test_minsum_variant_decodes_easy_frames(mid_raptor):
    w = window(mid_raptor, 0)
    key, llr, tgt = _noisy_problem(w, 1 / np.sqrt(1.5), 9)
    out = spa_decode(w, llr, tgt, DecoderConfig(l_max=100, check_rule="minsum"))
    assert out.success and np.array_equal(out.decoded_bits, key)


def test_degree_one_check_forces_bit():
    pcm = SparsePCM.from_rows([[0, 1, 2], [1, 2, 3], [3]], 4, base_n=4, base_m=3)
    w = window(pcm, 0)
    llr = np.array([2.0, 2.0, 2.0, 3.0])
    tgt = syndrome(w, np.array([0, 0, 0, 1], dtype=np.uint8))
    out = spa_decode(w, llr, tgt, DecoderConfig(l_max=10))
    assert out.success and out.decoded_bits.tolist() == [0, 0, 0, 1]


def test_initial_llrs_replace_channel(mid_raptor):
    w = window(mid_raptor, 0)
    key, llr, tgt = _noisy_problem(w, 1 / np.sqrt(0.5), 4)
    truth = np.where(key == 0, 20.0, -20.0)
    out = spa_decode(w, llr, tgt, DecoderConfig(l_max=5), initial_llrs=truth)
    assert out.success and out.iterations_used == 1


def test_initial_messages_resume(mid_raptor):
    # resuming from exported edge state continues the same trajectory
    w = window(mid_raptor, 0)
    _, llr, tgt = _noisy_problem(w, 1 / np.sqrt(0.75), 21)
    full = spa_decode(w, llr, tgt, DecoderConfig(l_max=200))
    first = spa_decode(w, llr, tgt, DecoderConfig(l_max=10))
    if first.success:
        pytest.skip("frame converged within 10 iterations")
    resumed = spa_decode(w, llr, tgt, DecoderConfig(l_max=190), initial_messages=first.edge_messages)
    assert resumed.success == full.success
    if full.success:
        assert resumed.iterations_used + 10 == full.iterations_used
        assert np.array_equal(resumed.decoded_bits, full.decoded_bits)


def test_inherit_llrs_contract():
    from mdarecon.decoder import DecodeOutcome
    prev = DecodeOutcome(False, 3, Termination.MAX_ITERATIONS, np.zeros(6, np.uint8),
                         np.arange(6, dtype=float))
    assert np.array_equal(inherit_llrs(prev, 6, []), prev.posterior_llrs)
    out = inherit_llrs(prev, 8, [7.5, -1.0])
    assert out[:6].tolist() == list(range(6)) and out[6:].tolist() == [7.5, -1.0]
    with pytest.raises(ValueError):
        inherit_llrs(prev, 8, [1.0])
    with pytest.raises(ValueError):
        inherit_llrs(prev, 5, [])


def test_kernel_matches_dense_reference():
    """Iteration-by-iteration agreement with a textbook dense SPA."""
    for code_seed, (bn, bm, md) in enumerate([(12, 6, 4), (16, 8, 0), (10, 5, 6)]):
        pcm = generate_raptor_family(code_seed, bn, bm, md, 2)
        H = pcm.to_dense()
        for trial in range(60):
            w = window(pcm, trial % (md + 1))
            _, llr, tgt = _noisy_problem(w, 1 / np.sqrt(0.5 + (trial % 5) * 0.4), 1000 * code_seed + trial)
            out = spa_decode(w, llr, tgt, DecoderConfig(l_max=30))
            ref = dense_spa(H[:w.m, :w.n], llr, tgt, 30)
            assert out.iterations_used == len(ref)
            assert np.array_equal(out.decoded_bits, ref[-1])
