"""Information-propagation analysis over recorded forward traces.

Quantifies how far a token's influence travels through the selective scan
and how the inter-frame prompt slots shorten it:

* ``transmission``        influence of token i on token j: the product of
                          forget gates between them, per channel/state
* ``decay_curve``         mean transmission vs. scan distance
* ``build_graph`` / ``path_length``
                          BFS hop counts on the scan/attention connectivity
                          graph, with or without prompt slots
* ``export_update_gates`` per-token update-gate magnitudes, normalized
                          per frame
* ``export_prompt_summary``
                          per-frame gate and prompt magnitudes per layer

Everything here is a pure read-only view over numpy arrays recorded during
a forward pass (``VideoModel.forward(..., collect_trace=True)``); outputs
are plain CSV so any external plotter can render them.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .errors import ContractError
from .model import ModelConfig, ModelTrace
from .prompting import TokenSequence, sample_positions

__all__ = [
    "TransmissionRecord",
    "ConnectivityGraph",
    "transmission",
    "transmission_record",
    "decay_curve",
    "build_graph",
    "path_length",
    "update_gate_rows",
    "export_decay",
    "export_update_gates",
    "export_paths",
    "export_prompt_summary",
]


# ---------------------------------------------------------------------------
# transmission values
# ---------------------------------------------------------------------------

def _as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _check_pair(i: int, j: int, s: int) -> None:
    if not (0 <= i < s and 0 <= j < s):
        raise ContractError(f"transmission: positions ({i}, {j}) outside sequence of {s}")
    if i > j:
        raise ContractError(f"transmission: influence flows forward only, need i <= j, got ({i}, {j})")


def transmission(deltas, a_log, i: int, j: int, channel: int, state: int) -> float:
    """Influence of position i on position j for one diagonal (channel, state).

    Equals exp(sum_{k=i+1..j} delta_k * a) with a = -exp(a_log), accumulated
    in log space. Always in (0, 1]; exactly 1 when j == i (empty product).
    """
    d = _as_array(deltas)
    al = _as_array(a_log)
    if d.ndim != 2:
        raise ContractError(f"transmission: deltas must be [S, d], got {d.shape}")
    if al.ndim != 2 or al.shape[0] != d.shape[1]:
        raise ContractError(
            f"transmission: a_log must be [d, D] matching deltas, got {al.shape} vs {d.shape}")
    s = d.shape[0]
    _check_pair(i, j, s)
    if not (0 <= channel < al.shape[0] and 0 <= state < al.shape[1]):
        raise ContractError(f"transmission: (channel, state) ({channel}, {state}) "
                            f"outside {al.shape}")
    a = -np.exp(al[channel, state])
    log_t = float(np.sum(d[i + 1:j + 1, channel]) * a)
    return float(np.exp(log_t))


@dataclass
class TransmissionRecord:
    """All pairwise transmission values for one layer/channel/state.

    ``log_values[i, j]`` holds log T_{i->j} for i <= j; entries below the
    diagonal are NaN (influence does not flow against the scan).
    """

    layer: int
    channel: int
    state: int
    log_values: np.ndarray  # [S, S], upper triangle incl. diagonal

    def value(self, i: int, j: int) -> float:
        _check_pair(i, j, self.log_values.shape[0])
        return float(np.exp(self.log_values[i, j]))


def _layer_block(trace: ModelTrace, layer: int):
    if trace is None or not getattr(trace, "layers", None):
        raise ContractError("analysis: no recorded trace; run forward with collect_trace=True")
    if not (0 <= layer < len(trace.layers)):
        raise ContractError(f"analysis: layer {layer} outside 0..{len(trace.layers) - 1}")
    return trace.layers[layer]


def _layer_deltas(trace: ModelTrace, layer: int, direction: str) -> tuple[np.ndarray, np.ndarray]:
    lt = _layer_block(trace, layer)
    if direction not in ("forward", "backward"):
        raise ContractError(f"analysis: direction must be forward|backward, got {direction!r}")
    deltas = lt.block.delta_fwd if direction == "forward" else lt.block.delta_bwd
    return deltas, lt.block.a_log_fwd


def transmission_record(trace: ModelTrace, layer: int, channel: int, state: int,
                        direction: str = "forward") -> TransmissionRecord:
    """Pairwise transmission table for one recorded layer."""
    deltas, a_log = _layer_deltas(trace, layer, direction)
    if not (0 <= channel < a_log.shape[0] and 0 <= state < a_log.shape[1]):
        raise ContractError(f"transmission_record: (channel, state) ({channel}, {state}) "
                            f"outside {a_log.shape}")
    s = deltas.shape[0]
    a = -np.exp(a_log[channel, state])
    # cum[p] = sum of delta_k * a for k = 1..p   =>  log T_{i->j} = cum[j] - cum[i]
    cum = np.concatenate([[0.0], np.cumsum(deltas[1:, channel] * a)])
    log_values = np.full((s, s), np.nan)
    iu, ju = np.triu_indices(s)
    log_values[iu, ju] = cum[ju] - cum[iu]
    return TransmissionRecord(layer=layer, channel=channel, state=state, log_values=log_values)


# ---------------------------------------------------------------------------
# decay curves
# ---------------------------------------------------------------------------

def decay_curve(trace: ModelTrace, layer: int, channel: int,
                direction: str = "forward", state: int | None = None) -> np.ndarray:
    """Mean transmission vs. scan distance: rows (distance, value).

    For each distance d the value is the mean of T_{i->i+d} over every start
    position i (and over all states of the channel unless one is given).
    Non-increasing in d: each (d+1)-window is a (d)-window times one more
    forget gate <= 1, and the windows overlap enough that dropping the last
    start position cannot raise the mean.
    """
    deltas, a_log = _layer_deltas(trace, layer, direction)
    if not (0 <= channel < a_log.shape[0]):
        raise ContractError(f"decay_curve: channel {channel} outside 0..{a_log.shape[0] - 1}")
    states = range(a_log.shape[1]) if state is None else [state]
    s = deltas.shape[0]
    acc = np.zeros(s)
    for st in states:
        if not (0 <= st < a_log.shape[1]):
            raise ContractError(f"decay_curve: state {st} outside 0..{a_log.shape[1] - 1}")
        a = -np.exp(a_log[channel, st])
        cum = np.concatenate([[0.0], np.cumsum(deltas[1:, channel] * a)])
        for dist in range(s):
            n = s - dist
            acc[dist] += np.mean(np.exp(cum[dist:dist + n] - cum[:n]))
    values = acc / len(list(states))
    return np.stack([np.arange(s, dtype=np.float64), values], axis=1)


# ---------------------------------------------------------------------------
# connectivity graph and path lengths
# ---------------------------------------------------------------------------

@dataclass
class ConnectivityGraph:
    """Directed hop graph: scan adjacency plus attention-hub shortcuts.

    Nodes 0..S-1 are sequence positions; nodes S.. are one virtual hub per
    prompt-spreading boundary. Scan adjacency runs both directions (the
    backbone is bidirectional); each hub receives an edge from every frame's
    sampled token and sends one to every prompt slot.
    """

    n_nodes: int
    edges: list[list[int]]
    layout: TokenSequence = field(repr=False)

    def frame_first_token(self, frame: int) -> int:
        """Sequence position of a 1-indexed frame's first token."""
        if not (1 <= frame <= self.layout.frames):
            raise ContractError(f"graph: frame {frame} outside 1..{self.layout.frames}")
        return self.layout.frame_start(frame - 1)


def build_graph(cfg: ModelConfig, with_ifs: bool) -> ConnectivityGraph:
    """Connectivity graph for the configured sequence layout."""
    t, n = cfg.frames, cfg.tokens_per_frame
    s = 1 + t * (n + (1 if with_ifs else 0))
    layout = TokenSequence(Tensor(np.zeros((s, 1))), t, n, has_slots=with_ifs)
    n_hubs = cfg.effective_regenerate_depth if with_ifs else 0
    n_nodes = s + n_hubs
    edges: list[list[int]] = [[] for _ in range(n_nodes)]
    for p in range(s - 1):
        edges[p].append(p + 1)
        edges[p + 1].append(p)
    if with_ifs:
        sampled = np.unique(sample_positions(layout, cfg.strategy).reshape(-1))
        slots = [layout.slot_position(f) for f in range(t)]
        for h in range(n_hubs):
            hub = s + h
            for p in sampled:
                edges[int(p)].append(hub)
            for p in slots:
                edges[hub].append(p)
    return ConnectivityGraph(n_nodes=n_nodes, edges=edges, layout=layout)


def _bfs(graph: ConnectivityGraph, src: int, dst: int) -> int:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        p = queue.popleft()
        if p == dst:
            return dist[p]
        for q in graph.edges[p]:
            if q not in dist:
                dist[q] = dist[p] + 1
                queue.append(q)
    raise ContractError(f"path_length: node {dst} unreachable from {src}")


def path_length(cfg: ModelConfig, i: int, j: int, with_ifs: bool) -> int:
    """BFS hop count from frame i's first token to frame j's first token.

    Frames are 1-indexed. Without prompt slots this is the walk along the
    scan chain; with them the attention hub caps it independently of j - i.
    """
    if not (1 <= i <= cfg.frames and 1 <= j <= cfg.frames):
        raise ContractError(f"path_length: frames ({i}, {j}) outside 1..{cfg.frames}")
    if i > j:
        raise ContractError(f"path_length: need i <= j, got ({i}, {j})")
    graph = build_graph(cfg, with_ifs)
    return _bfs(graph, graph.frame_first_token(i), graph.frame_first_token(j))


# ---------------------------------------------------------------------------
# update-gate export
# ---------------------------------------------------------------------------

def update_gate_rows(trace: ModelTrace, layer: int) -> list[tuple[int, int, int, float]]:
    """(frame, patch_row, patch_col, value) per frame token, one layer.

    value = Frobenius norm of the token's forward update gate, scaled so the
    largest token within each frame maps to 1. Frames and grid indices are
    0-based; rows come out in scan order, T*N of them.
    """
    lt = _layer_block(trace, layer)
    b_bar = lt.block.b_bar_fwd
    if b_bar is None:
        raise ContractError("update_gate_rows: trace recorded without gate capture")
    t, n = lt.frames, lt.tokens_per_frame
    layout = TokenSequence(Tensor(np.zeros((b_bar.shape[0], 1))), t, n,
                           has_slots=lt.had_slots)
    side = int(round(np.sqrt(n)))
    grid_cols = side if side * side == n else n
    rows: list[tuple[int, int, int, float]] = []
    for f in range(t):
        pos = layout.frame_positions(f)
        norms = np.sqrt(np.sum(b_bar[pos] ** 2, axis=(1, 2)))
        top = float(np.max(norms))
        scaled = np.ones_like(norms) if top <= 0.0 else norms / top
        for k, val in enumerate(scaled):
            rows.append((f, k // grid_cols, k % grid_cols, float(val)))
    return rows


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------

def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def export_decay(trace: ModelTrace, layer: int, channel: int, out_dir) -> Path:
    """Write decay_layer{L}_ch{c}.csv; returns the file path."""
    curve = decay_curve(trace, layer, channel)
    if np.any(np.diff(curve[:, 1]) > 0):
        raise ContractError(
            f"export_decay: non-monotone curve for layer {layer} channel {channel}")
    path = Path(out_dir) / f"decay_layer{layer}_ch{channel}.csv"
    _write_csv(path, ["distance", "value"],
               [(int(d), f"{v:.17g}") for d, v in curve])
    return path


def export_update_gates(trace: ModelTrace, layer: int, out_dir) -> Path:
    """Write gates_layer{L}.csv; returns the file path."""
    rows = update_gate_rows(trace, layer)
    path = Path(out_dir) / f"gates_layer{layer}.csv"
    _write_csv(path, ["frame", "row", "col", "value"],
               [(f, r, c, f"{v:.17g}") for f, r, c, v in rows])
    return path


def export_paths(cfg: ModelConfig, out_dir) -> Path:
    """Write paths.csv: hop counts for every frame pair, with and without slots."""
    rows = []
    for i in range(1, cfg.frames + 1):
        for j in range(i, cfg.frames + 1):
            rows.append((i, j, path_length(cfg, i, j, with_ifs=False),
                         path_length(cfg, i, j, with_ifs=True)))
    path = Path(out_dir) / "paths.csv"
    _write_csv(path, ["from_frame", "to_frame", "hops_scan_only", "hops_with_prompts"], rows)
    return path


def export_prompt_summary(trace: ModelTrace, layer: int, out_dir) -> Path:
    """Write layer{L}_prompts.csv: per-frame gate values and prompt magnitudes.

    Columns: frame, the entropy gate w (per-frame scalar), the spatial
    variance vector v per channel, mean |p_s| over the frame's tokens and
    channels, and |p_t| per channel. Quantities a layer did not produce are
    written as nan.
    """
    lt = _layer_block(trace, layer)
    t = lt.frames
    d = lt.w.shape[1] if lt.w is not None else (
        lt.p_t.shape[1] if lt.p_t is not None else 0)
    header = (["frame", "w"] + [f"v_{c}" for c in range(d)]
              + ["mean_abs_ps"] + [f"abs_pt_{c}" for c in range(d)])
    rows = []
    for f in range(t):
        w_val = float(lt.w[f, 0]) if lt.w is not None else float("nan")
        v_vals = lt.v[f] if lt.v is not None else np.full(d, np.nan)
        ps_val = float(np.mean(np.abs(lt.p_s[f]))) if lt.p_s is not None else float("nan")
        pt_vals = np.abs(lt.p_t[f]) if lt.p_t is not None else np.full(d, np.nan)
        rows.append([f, f"{w_val:.17g}"]
                    + [f"{x:.17g}" for x in v_vals]
                    + [f"{ps_val:.17g}"]
                    + [f"{x:.17g}" for x in pt_vals])
    path = Path(out_dir) / f"layer{layer}_prompts.csv"
    _write_csv(path, header, rows)
    return path
