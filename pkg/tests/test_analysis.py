"""Propagation analyses: transmission closed forms and log-additivity,
decay curves, connectivity-graph path lengths, update-gate maps, exports."""

import csv

import numpy as np
import pytest

from sspvideo import analysis as an
from sspvideo.errors import ContractError
from sspvideo.model import LayerTrace, ModelConfig, ModelTrace, build_model
from sspvideo.ssm import BlockTrace


@pytest.fixture(scope="module")
def traced():
    """One reference-geometry model with a recorded forward pass."""
    cfg = ModelConfig()
    model = build_model(cfg, seed=3)
    video = np.random.default_rng(0).random(
        (cfg.frames, cfg.channels, cfg.height, cfg.width))
    _, trace = model.forward(video, collect_trace=True)
    return cfg, model, video, trace


# ---------------------------------------------------------------------------
# transmission
# ---------------------------------------------------------------------------

class TestTransmission:
    def test_unit_steps_closed_form(self):
        # three unit steps at decay rate -1 attenuate by exactly e^-3
        deltas = np.ones((6, 3))
        a_log = np.zeros((3, 2))
        got = an.transmission(deltas, a_log, 1, 4, channel=0, state=0)
        assert abs(got - np.exp(-3.0)) <= 1e-15

    def test_mixed_steps_closed_form(self):
        deltas = np.zeros((3, 1))
        deltas[1, 0], deltas[2, 0] = 0.5, 0.25
        a_log = np.full((1, 1), np.log(2.0))   # rate -2
        got = an.transmission(deltas, a_log, 0, 2, channel=0, state=0)
        assert abs(got - np.exp(-1.5)) <= 1e-15

    def test_same_position_is_unity(self):
        assert an.transmission(np.ones((4, 2)), np.zeros((2, 2)), 2, 2, 1, 1) == 1.0

    def test_reversed_interval_rejected(self):
        with pytest.raises(ContractError):
            an.transmission(np.ones((4, 2)), np.zeros((2, 2)), 3, 1, 0, 0)

    def test_out_of_range_indices_rejected(self):
        deltas, a_log = np.ones((4, 2)), np.zeros((2, 3))
        with pytest.raises(ContractError):
            an.transmission(deltas, a_log, 0, 4, 0, 0)
        with pytest.raises(ContractError):
            an.transmission(deltas, a_log, 0, 1, 2, 0)
        with pytest.raises(ContractError):
            an.transmission(deltas, a_log, 0, 1, 0, 3)


class TestTransmissionRecord:
    def test_log_additivity_through_waypoints(self, traced):
        _, _, _, trace = traced
        rec = an.transmission_record(trace, layer=1, channel=5, state=2)
        for (i, j, k) in [(3, 40, 101), (0, 1, 2), (10, 50, 128)]:
            lhs = np.log(rec.value(i, k))
            rhs = np.log(rec.value(i, j)) + np.log(rec.value(j, k))
            assert abs(lhs - rhs) <= 1e-12

    def test_diagonal_is_exactly_one(self, traced):
        _, _, _, trace = traced
        rec = an.transmission_record(trace, layer=0, channel=0, state=0)
        for i in (0, 17, 77, 128):
            assert rec.value(i, i) == 1.0

    def test_values_in_unit_interval(self, traced):
        _, _, _, trace = traced
        rec = an.transmission_record(trace, layer=2, channel=9, state=1)
        vals = np.exp(rec.log_values[np.triu_indices(rec.log_values.shape[0])])
        assert np.all(vals > 0) and np.all(vals <= 1.0)

    def test_matches_scalar_transmission(self, traced):
        _, _, _, trace = traced
        layer, ch, st = 1, 7, 3
        rec = an.transmission_record(trace, layer, ch, st)
        deltas = trace.layers[layer].block.delta_fwd
        a_log = trace.layers[layer].block.a_log_fwd
        for (i, j) in [(0, 5), (10, 10), (3, 120)]:
            direct = an.transmission(deltas, a_log, i, j, ch, st)
            np.testing.assert_allclose(rec.value(i, j), direct, rtol=1e-12)

    def test_backward_direction_uses_its_own_deltas(self, traced):
        _, _, _, trace = traced
        fwd = an.transmission_record(trace, 0, 3, 1, direction="forward")
        bwd = an.transmission_record(trace, 0, 3, 1, direction="backward")
        assert not np.allclose(fwd.log_values[0, 1:], bwd.log_values[0, 1:],
                               equal_nan=True)

    def test_guards(self, traced):
        _, _, _, trace = traced
        with pytest.raises(ContractError):
            an.transmission_record(None, 0, 0, 0)
        with pytest.raises(ContractError):
            an.transmission_record(trace, 99, 0, 0)
        with pytest.raises(ContractError):
            an.transmission_record(trace, 0, 0, 0, direction="sideways")


# ---------------------------------------------------------------------------
# decay curves
# ---------------------------------------------------------------------------

class TestDecayCurve:
    def test_every_channel_starts_at_one_and_decays(self, traced):
        cfg, _, _, trace = traced
        for ch in range(0, cfg.d_inner, 17):
            curve = an.decay_curve(trace, layer=2, channel=ch)
            assert curve[0, 0] == 0 and curve[0, 1] == 1.0
            assert np.all(np.diff(curve[:, 1]) <= 0), f"channel {ch} not monotone"

    def test_single_state_curve(self, traced):
        cfg, _, _, trace = traced
        curve = an.decay_curve(trace, layer=1, channel=4, state=2)
        assert curve.shape[1] == 2
        assert np.all(np.diff(curve[:, 1]) <= 0)

    def test_distance_column_is_0_to_smax(self, traced):
        _, _, _, trace = traced
        curve = an.decay_curve(trace, layer=0, channel=0)
        np.testing.assert_array_equal(curve[:, 0], np.arange(len(curve)))

    def test_bad_layer_and_missing_trace(self, traced):
        _, _, _, trace = traced
        with pytest.raises(ContractError):
            an.decay_curve(trace, layer=99, channel=0)
        with pytest.raises(ContractError):
            an.decay_curve(None, layer=0, channel=0)


# ---------------------------------------------------------------------------
# connectivity graph and path lengths
# ---------------------------------------------------------------------------

class TestPathLength:
    def test_promptless_distance_is_token_count(self):
        cfg = ModelConfig(frames=4, height=20, width=20, use_ifg=False)
        assert cfg.tokens_per_frame == 25
        assert an.path_length(cfg, 1, 4, with_ifs=False) == 3 * 25

    def test_prompt_slots_shorten_long_hauls(self):
        cfg = ModelConfig(frames=4, height=20, width=20, use_ifg=False)
        short = an.path_length(cfg, 1, 4, with_ifs=True)
        assert short < 75 and short <= 2 * 25 + 2

    def test_same_frame_is_zero_hops(self):
        cfg = ModelConfig(use_ifg=False)
        assert an.path_length(cfg, 2, 2, with_ifs=True) == 0

    def test_slope_exactly_n_without_prompts(self):
        for T in (4, 8, 16):
            cfg = ModelConfig(frames=T, use_ifg=False)
            N = cfg.tokens_per_frame
            hops = [an.path_length(cfg, i, i + 1, with_ifs=False)
                    for i in range(1, T)]
            assert hops == [N] * (T - 1)

    def test_bounded_by_2n_plus_2_with_prompts(self):
        for T in (4, 8, 16):
            cfg = ModelConfig(frames=T, use_ifg=False)
            N = cfg.tokens_per_frame
            worst = max(an.path_length(cfg, i, j, with_ifs=True)
                        for i in range(1, T + 1) for j in range(i, T + 1))
            assert worst <= 2 * N + 2

    def test_bound_holds_for_every_strategy(self):
        for strategy in ("last_forward", "middle", "bidirection", "bi_independent"):
            cfg = ModelConfig(strategy=strategy, use_ifg=False)
            N = cfg.tokens_per_frame
            worst = max(an.path_length(cfg, i, j, with_ifs=True)
                        for i in range(1, cfg.frames + 1)
                        for j in range(i, cfg.frames + 1))
            assert worst <= 2 * N + 2

    def test_frame_indices_one_based_and_ordered(self):
        cfg = ModelConfig(use_ifg=False)
        with pytest.raises(ContractError):
            an.path_length(cfg, 3, 1, with_ifs=False)
        with pytest.raises(ContractError):
            an.path_length(cfg, 0, 2, with_ifs=False)
        with pytest.raises(ContractError):
            an.path_length(cfg, 1, cfg.frames + 1, with_ifs=False)

    def test_graph_node_counts(self):
        cfg = ModelConfig(frames=4, use_ifg=False)
        bare = an.build_graph(cfg, with_ifs=False)
        slotted = an.build_graph(cfg, with_ifs=True)
        assert bare.n_nodes == 1 + 4 * 16
        assert slotted.n_nodes == 1 + 4 * 17 + cfg.effective_regenerate_depth


# ---------------------------------------------------------------------------
# update gates
# ---------------------------------------------------------------------------

class TestUpdateGates:
    def test_row_count_and_normalization(self, traced):
        cfg, _, _, trace = traced
        rows = an.update_gate_rows(trace, layer=0)
        assert len(rows) == cfg.frames * cfg.tokens_per_frame
        per_frame = {}
        for frame, r, c, val in rows:
            assert 0.0 <= val <= 1.0
            per_frame.setdefault(frame, []).append(val)
        for frame, vals in per_frame.items():
            assert abs(max(vals) - 1.0) < 1e-15

    def test_grid_coordinates_cover_the_frame(self, traced):
        cfg, _, _, trace = traced
        rows = an.update_gate_rows(trace, layer=1)
        coords = {(r, c) for frame, r, c, _ in rows if frame == 0}
        g = int(np.sqrt(cfg.tokens_per_frame))
        assert coords == {(r, c) for r in range(g) for c in range(g)}

    def test_constant_field_normalizes_to_ones(self):
        cfg = ModelConfig()
        S = 1 + cfg.frames * cfg.tokens_per_frame
        const = ModelTrace(layers=[LayerTrace(
            block=BlockTrace(
                delta_fwd=np.ones((S, cfg.d_inner)),
                delta_bwd=np.ones((S, cfg.d_inner)),
                b_bar_fwd=np.full((S, cfg.d_inner, cfg.d_state), 0.37),
                a_log_fwd=np.zeros((cfg.d_inner, cfg.d_state))),
            frames=cfg.frames, tokens_per_frame=cfg.tokens_per_frame,
            had_slots=False)])
        rows = an.update_gate_rows(const, layer=0)
        assert all(val == 1.0 for _, _, _, val in rows)

    def test_prompts_move_the_gates(self, traced):
        cfg, model, video, trace = traced
        bare_cfg = ModelConfig(use_ifg=False, use_ifs=False)
        bare = build_model(bare_cfg, seed=3)
        state = {k: v for k, v in model.state_dict().items()
                 if not k.startswith(("ifg.", "ifs."))}
        bare.load_state_dict(state)
        _, bare_trace = bare.forward(video, collect_trace=True)
        on = np.array([v for *_, v in an.update_gate_rows(trace, 2)])
        off = np.array([v for *_, v in an.update_gate_rows(bare_trace, 2)])
        assert np.max(np.abs(on - off)) > 0.0


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

class TestExports:
    def test_decay_export(self, traced, tmp_path):
        _, _, _, trace = traced
        path = an.export_decay(trace, layer=1, channel=0, out_dir=tmp_path)
        assert path.name == "decay_layer1_ch0.csv"
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["distance", "value"]
        values = np.array([float(r[1]) for r in rows[1:]])
        assert values[0] == 1.0 and np.all(np.diff(values) <= 0)

    def test_gates_export(self, traced, tmp_path):
        cfg, _, _, trace = traced
        path = an.export_update_gates(trace, layer=0, out_dir=tmp_path)
        assert path.name == "gates_layer0.csv"
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["frame", "row", "col", "value"]
        assert len(rows) - 1 == cfg.frames * cfg.tokens_per_frame

    def test_paths_export(self, traced, tmp_path):
        cfg, _, _, _ = traced
        path = an.export_paths(cfg, out_dir=tmp_path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["from_frame", "to_frame", "hops_scan_only",
                           "hops_with_prompts"]
        T = cfg.frames
        n = cfg.tokens_per_frame
        assert len(rows) - 1 == T * (T + 1) // 2
        # The slot chain bounds every pair by 2N+2 hops regardless of the
        # frame gap; without slots the longest haul costs N hops per frame.
        for _, _, scan_only, with_prompts in rows[1:]:
            assert int(with_prompts) <= 2 * n + 2
        by_pair = {(int(r[0]), int(r[1])): (int(r[2]), int(r[3])) for r in rows[1:]}
        longest_scan, longest_slot = by_pair[(1, T)]
        assert longest_scan == (T - 1) * n
        assert longest_slot < longest_scan

    def test_prompt_summary_export(self, traced, tmp_path):
        cfg, _, _, trace = traced
        path = an.export_prompt_summary(trace, layer=1, out_dir=tmp_path)
        assert path.name == "layer1_prompts.csv"
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "frame" and rows[0][1] == "w"
        assert len(rows) - 1 == cfg.frames
