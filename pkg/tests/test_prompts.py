"""Prompt machinery: sequence layout, entropy weighting, intra-frame
gathering/overlay, frame-token sampling, inter-frame spreading, slot insertion."""

import numpy as np
import pytest

from sspvideo import autograd as ag
from sspvideo.autograd import Tensor, grad_check
from sspvideo.errors import ConfigError, DimensionError
from sspvideo.prompting import (
    STRATEGIES,
    TokenSequence,
    entropy_profile,
    entropy_weights,
    ifg_forward,
    ifs_forward,
    init_ifg,
    init_ifs,
    insert_inter,
    overlay_intra,
    sample_frame_token,
    sample_positions,
    spread_prompts,
)


def make_seq(T=3, N=4, d=5, seed=0, slots=False):
    S = 1 + T * (N + (1 if slots else 0))
    tokens = np.random.default_rng(seed).normal(size=(S, d))
    return TokenSequence(Tensor(tokens, requires_grad=True), T, N, has_slots=slots)


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------

class TestTokenSequence:
    def test_lengths(self):
        assert make_seq(T=3, N=4).length == 13
        assert make_seq(T=3, N=4, slots=True).length == 16

    def test_frame_addressing_without_slots(self):
        seq = make_seq(T=3, N=4)
        assert seq.frame_start(0) == 1
        assert seq.frame_start(2) == 9
        np.testing.assert_array_equal(seq.frame_positions(1), [5, 6, 7, 8])
        assert len(seq.all_frame_positions()) == 12

    def test_frame_addressing_with_slots(self):
        seq = make_seq(T=3, N=4, slots=True)
        assert seq.frame_start(1) == 6
        assert seq.slot_position(0) == 5
        assert seq.slot_position(2) == 15
        # frame positions never include slot rows
        all_pos = set(seq.all_frame_positions().tolist())
        for i in range(3):
            assert seq.slot_position(i) not in all_pos

    def test_slot_position_requires_slots(self):
        with pytest.raises(DimensionError):
            make_seq().slot_position(0)

    def test_wrong_row_count_rejected(self):
        with pytest.raises(DimensionError):
            TokenSequence(Tensor(np.zeros((10, 5))), frames=3, tokens_per_frame=4)

    def test_non_2d_rejected(self):
        with pytest.raises(DimensionError):
            TokenSequence(Tensor(np.zeros((13, 5, 1))), frames=3, tokens_per_frame=4)


# ---------------------------------------------------------------------------
# entropy weights
# ---------------------------------------------------------------------------

class TestEntropyWeights:
    def test_zero_prompts_split_alpha_evenly(self):
        w = entropy_weights(Tensor(np.zeros((2, 3, 4))), alpha=0.8)
        np.testing.assert_allclose(w.data, np.full((2, 4), 0.4), atol=1e-12)

    def test_single_frame_gets_all_of_alpha(self):
        w = entropy_weights(Tensor(np.random.default_rng(0).normal(size=(1, 3, 4))),
                            alpha=0.7)
        np.testing.assert_allclose(w.data, np.full((1, 4), 0.7), atol=1e-12)

    def test_mixed_entropy_worked_values(self):
        # frame A: one decisive token plus one flat token; frame B: two flat
        # tokens. Mean confidences [~0.5, 0] put the weight split at
        # softmax([0.5, 0]).
        p_s = np.zeros((2, 2, 8))
        p_s[0, 0, 0] = 30.0
        w = entropy_weights(Tensor(p_s), alpha=1.0)
        np.testing.assert_allclose(w.data[:, 0], [0.622459, 0.377541], atol=1e-6)

    def test_sum_is_alpha_and_positive_on_random_input(self):
        rng = np.random.default_rng(1)
        p_s = Tensor(rng.normal(size=(5, 4, 6)) * 3.0)
        for alpha in (0.31, 1.0, 2.5):
            w = entropy_weights(p_s, alpha=alpha).data
            assert np.all(w > 0)
            np.testing.assert_allclose(w.sum(axis=0), np.full(6, alpha), atol=1e-10)

    def test_confidence_bounded_and_flattest_token_at_zero(self):
        rng = np.random.default_rng(2)
        _, E, e_bar = entropy_profile(Tensor(rng.normal(size=(4, 5, 7)) * 2.0))
        assert np.all(E.data >= 0.0) and np.all(E.data <= 1.0)
        # the max-entropy token of each frame defines its zero
        assert np.all(np.isclose(E.data.min(axis=1), 0.0, atol=1e-12))
        np.testing.assert_allclose(e_bar.data, E.data.mean(axis=1), atol=1e-14)

    def test_decisive_frame_outweighs_flat_frame(self):
        p_s = np.zeros((2, 3, 6))
        p_s[1, :, 2] = 25.0   # frame 1 entirely decisive... but its own max
        p_s[1, 0, :] = 0.0    # keep one flat token to anchor the denominator
        w = entropy_weights(Tensor(p_s), alpha=1.0).data
        assert w[1, 0] > w[0, 0]

    def test_shape_guard(self):
        with pytest.raises(DimensionError):
            entropy_profile(Tensor(np.zeros((3, 4))))

    def test_gradient_flows(self):
        p_s = Tensor(np.random.default_rng(3).normal(size=(2, 4, 3)), requires_grad=True)
        alpha = Tensor(np.asarray(0.9), requires_grad=True)
        pick = np.random.default_rng(4).normal(size=(2, 3))
        assert grad_check(
            lambda: ag.reduce_sum(entropy_weights(p_s, alpha) * Tensor(pick)),
            [p_s, alpha]) < 1e-5


# ---------------------------------------------------------------------------
# intra-frame gathering
# ---------------------------------------------------------------------------

class TestIFG:
    def test_fresh_params_are_neutral(self):
        params = init_ifg(np.random.default_rng(0), d=6, d_s=3)
        x = Tensor(np.random.default_rng(1).normal(size=(2, 4, 6)))
        p_s, w, v = ifg_forward(x, params)
        np.testing.assert_array_equal(p_s.data, np.zeros((2, 4, 6)))
        np.testing.assert_array_equal(v.data, np.zeros((2, 6)))
        # zero prompts -> uniform weights
        np.testing.assert_allclose(w.data, np.full((2, 6), 0.5), atol=1e-12)

    def test_shapes(self):
        params = init_ifg(np.random.default_rng(2), d=6, d_s=3)
        params.w_up_prompt.data[:] = 0.01
        params.w_up_var.data[:] = 0.02
        x = Tensor(np.random.default_rng(3).normal(size=(3, 9, 6)))
        p_s, w, v = ifg_forward(x, params)
        assert p_s.shape == (3, 9, 6) and w.shape == (3, 6) and v.shape == (3, 6)
        assert not np.array_equal(p_s.data, np.zeros_like(p_s.data))
        assert not np.array_equal(v.data, np.zeros_like(v.data))

    def test_non_square_frame_rejected(self):
        params = init_ifg(np.random.default_rng(4), d=6, d_s=3)
        with pytest.raises(ConfigError):
            ifg_forward(Tensor(np.zeros((2, 5, 6))), params)

    def test_bottleneck_must_be_narrow(self):
        with pytest.raises(ConfigError):
            init_ifg(np.random.default_rng(5), d=4, d_s=4)

    def test_gradient(self):
        params = init_ifg(np.random.default_rng(6), d=5, d_s=2)
        params.w_up_prompt.data[:] = np.random.default_rng(7).normal(size=(2, 5)) * 0.1
        params.w_up_var.data[:] = np.random.default_rng(8).normal(size=(2, 5)) * 0.1
        x = Tensor(np.random.default_rng(9).normal(size=(2, 4, 5)), requires_grad=True)
        leaves = [x] + [t for _, t in params.named("g")]
        rng = np.random.default_rng(10)
        pick = [Tensor(rng.normal(size=(2, 4, 5))), Tensor(rng.normal(size=(2, 5))),
                Tensor(rng.normal(size=(2, 5)))]

        def f():
            p_s, w, v = ifg_forward(x, params)
            return (ag.reduce_sum(p_s * pick[0]) + ag.reduce_sum(w * pick[1])
                    + ag.reduce_sum(v * pick[2]))

        assert grad_check(f, leaves, step=1e-4) < 1e-4


class TestOverlay:
    def test_only_frame_rows_change(self):
        seq = make_seq(T=2, N=4, d=3, slots=True)
        p_s = Tensor(np.random.default_rng(11).normal(size=(2, 4, 3)))
        out = overlay_intra(seq, p_s)
        assert out.has_slots and out.length == seq.length
        np.testing.assert_array_equal(out.tokens.data[0], seq.tokens.data[0])  # cls
        for i in range(2):
            sp = seq.slot_position(i)
            np.testing.assert_array_equal(out.tokens.data[sp], seq.tokens.data[sp])
            fp = seq.frame_positions(i)
            np.testing.assert_allclose(out.tokens.data[fp],
                                       seq.tokens.data[fp] + p_s.data[i], atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            overlay_intra(make_seq(T=2, N=4, d=3), Tensor(np.zeros((2, 3, 3))))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

class TestSampling:
    def test_last_forward_picks_frame_ends(self):
        seq = make_seq(T=3, N=4)
        np.testing.assert_array_equal(sample_positions(seq, "last_forward"), [4, 8, 12])

    def test_middle_picks_center(self):
        seq = make_seq(T=3, N=4)
        np.testing.assert_array_equal(sample_positions(seq, "middle"), [3, 7, 11])

    def test_paired_strategies_pick_span_ends(self):
        seq = make_seq(T=2, N=4)
        for strat in ("bidirection", "bi_independent"):
            pos = sample_positions(seq, strat)
            np.testing.assert_array_equal(pos, [[4, 1], [8, 5]])

    def test_slotted_layout_skips_slots(self):
        seq = make_seq(T=2, N=4, slots=True)
        pos = sample_positions(seq, "last_forward")
        np.testing.assert_array_equal(pos, [4, 9])
        for p in pos:
            assert p != seq.slot_position(0) and p != seq.slot_position(1)

    def test_unknown_strategy(self):
        with pytest.raises(ConfigError):
            sample_positions(make_seq(), "every_other")

    def test_gathered_rows_match_manual_indexing(self):
        seq = make_seq(T=3, N=4, d=5, seed=20)
        got = sample_frame_token(seq, "last_forward")
        np.testing.assert_array_equal(got.data, seq.tokens.data[[4, 8, 12]])
        paired = sample_frame_token(seq, "bidirection")
        assert paired.shape == (3, 2, 5)
        np.testing.assert_array_equal(paired.data[:, 1], seq.tokens.data[[1, 5, 9]])


# ---------------------------------------------------------------------------
# inter-frame spreading
# ---------------------------------------------------------------------------

def live_ifs(seed, d, d_t, beta=0.3):
    """IFS params with the up-projection un-zeroed so the path is active."""
    p = init_ifs(np.random.default_rng(seed), d=d, d_t=d_t, beta_init=beta)
    p.w_up.data[:] = np.random.default_rng(seed + 1).normal(size=(d_t, d)) * 0.2
    return p


class TestIFS:
    def test_fresh_params_give_zero_prompt(self):
        p = init_ifs(np.random.default_rng(0), d=6, d_t=3, beta_init=0.5)
        T, d = 3, 6
        rng = np.random.default_rng(1)
        sampled = Tensor(rng.normal(size=(T, d)))
        w = Tensor(np.abs(rng.normal(size=(T, d))))
        v = Tensor(np.zeros((T, d)))   # fresh gathering gives v = 0
        out = ifs_forward(sampled, w, v, p)
        np.testing.assert_array_equal(out.data, np.zeros((T, d)))

    def test_zero_beta_gives_zero_prompt(self):
        p = live_ifs(2, d=6, d_t=3, beta=0.0)
        rng = np.random.default_rng(3)
        out = ifs_forward(Tensor(rng.normal(size=(3, 6))),
                          Tensor(np.abs(rng.normal(size=(3, 6)))),
                          Tensor(rng.normal(size=(3, 6))), p)
        np.testing.assert_array_equal(out.data, np.zeros((3, 6)))

    def test_active_path_produces_nonzero_output(self):
        p = live_ifs(4, d=6, d_t=3)
        rng = np.random.default_rng(5)
        out = ifs_forward(Tensor(rng.normal(size=(3, 6))),
                          Tensor(np.abs(rng.normal(size=(3, 6)))),
                          Tensor(rng.normal(size=(3, 6))), p)
        assert out.shape == (3, 6)
        assert not np.array_equal(out.data, np.zeros((3, 6)))

    def test_paired_input_averages_to_frame_rows(self):
        p = live_ifs(6, d=6, d_t=3)
        rng = np.random.default_rng(7)
        out = ifs_forward(Tensor(rng.normal(size=(4, 2, 6))),
                          Tensor(np.abs(rng.normal(size=(4, 6)))),
                          Tensor(rng.normal(size=(4, 6))), p)
        assert out.shape == (4, 6)

    def test_bad_pair_extent(self):
        p = live_ifs(8, d=6, d_t=3)
        with pytest.raises(DimensionError):
            ifs_forward(Tensor(np.zeros((4, 3, 6))), Tensor(np.zeros((4, 6))),
                        Tensor(np.zeros((4, 6))), p)

    def test_frames_mix_through_attention(self):
        # changing frame 2's summary moves frame 0's prompt
        p = live_ifs(9, d=6, d_t=3)
        rng = np.random.default_rng(10)
        sampled = rng.normal(size=(3, 6))
        w = Tensor(np.abs(rng.normal(size=(3, 6))))
        v = Tensor(rng.normal(size=(3, 6)))
        a = ifs_forward(Tensor(sampled), w, v, p).data
        bumped = sampled.copy()
        bumped[2] += 1.0
        b = ifs_forward(Tensor(bumped), w, v, p).data
        assert not np.array_equal(a[0], b[0])

    def test_bottleneck_must_be_narrow(self):
        with pytest.raises(ConfigError):
            init_ifs(np.random.default_rng(11), d=4, d_t=5)

    def test_gradient(self):
        p = live_ifs(12, d=5, d_t=2)
        rng = np.random.default_rng(13)
        sampled = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        w = Tensor(np.abs(rng.normal(size=(3, 5))), requires_grad=True)
        v = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        leaves = [sampled, w, v] + [t for _, t in p.named("s")]
        pick = Tensor(rng.normal(size=(3, 5)))
        assert grad_check(
            lambda: ag.reduce_sum(ifs_forward(sampled, w, v, p) * pick),
            leaves, step=1e-4) < 1e-4


class TestSpreadPrompts:
    def setup_method(self):
        self.seq = make_seq(T=3, N=4, d=6, seed=30)
        rng = np.random.default_rng(31)
        self.w = Tensor(np.abs(rng.normal(size=(3, 6))))
        self.v = Tensor(rng.normal(size=(3, 6)))

    def test_single_module_strategies(self):
        for strat in ("last_forward", "middle", "bidirection"):
            out = spread_prompts(self.seq, self.w, self.v, strat, (live_ifs(32, 6, 3),))
            assert out.shape == (3, 6)

    def test_bi_independent_needs_two_modules(self):
        with pytest.raises(ConfigError):
            spread_prompts(self.seq, self.w, self.v, "bi_independent",
                           (live_ifs(33, 6, 3),))
        out = spread_prompts(self.seq, self.w, self.v, "bi_independent",
                             (live_ifs(34, 6, 3), live_ifs(35, 6, 3)))
        assert out.shape == (3, 6)

    def test_strategies_disagree_in_general(self):
        mods = (live_ifs(36, 6, 3),)
        outs = {s: spread_prompts(self.seq, self.w, self.v, s, mods).data
                for s in ("last_forward", "middle")}
        assert not np.array_equal(outs["last_forward"], outs["middle"])


# ---------------------------------------------------------------------------
# slot insertion
# ---------------------------------------------------------------------------

class TestInsertInter:
    def test_grows_layout_and_places_prompts(self):
        seq = make_seq(T=2, N=4, d=3, seed=40)
        p_t = Tensor(np.random.default_rng(41).normal(size=(2, 3)))
        out = insert_inter(seq, p_t)
        assert out.has_slots and out.length == 1 + 2 * 5
        np.testing.assert_array_equal(out.tokens.data[0], seq.tokens.data[0])
        for i in range(2):
            np.testing.assert_array_equal(out.tokens.data[out.frame_positions(i)],
                                          seq.tokens.data[seq.frame_positions(i)])
            np.testing.assert_array_equal(out.tokens.data[out.slot_position(i)],
                                          p_t.data[i])

    def test_reinsertion_replaces_not_accumulates(self):
        seq = make_seq(T=2, N=4, d=3, seed=42)
        rng = np.random.default_rng(43)
        first = Tensor(rng.normal(size=(2, 3)))
        second = Tensor(rng.normal(size=(2, 3)))
        once = insert_inter(seq, first)
        twice = insert_inter(once, second)
        assert twice.length == once.length
        for i in range(2):
            np.testing.assert_array_equal(twice.tokens.data[twice.slot_position(i)],
                                          second.data[i])
            np.testing.assert_array_equal(twice.tokens.data[twice.frame_positions(i)],
                                          seq.tokens.data[seq.frame_positions(i)])

    def test_shape_guard(self):
        with pytest.raises(DimensionError):
            insert_inter(make_seq(T=2, N=4, d=3), Tensor(np.zeros((3, 3))))
