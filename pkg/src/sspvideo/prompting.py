"""Trainable prompts for a frozen video state-space backbone.

Two cooperating modules act at every layer boundary:

  * intra-frame gathering: a low-rank conv bottleneck over each frame's
    patch grid produces an additive prompt p_s per token, a per-frame
    spatial gate v, and an entropy-derived frame weight w,
  * inter-frame spreading: one token sampled per frame, gated by w, is
    mixed across frames by a small single-head attention and written back
    into dedicated prompt slots interleaved with the frames, gated by v.

The slot layout is [cls, frame_1 tokens, slot_1, ..., frame_T tokens,
slot_T]; the sequential scans then cross frame boundaries through slots
that sit one hop away from every frame, which is what collapses the
token-to-token propagation distance measured in analysis.py.

Sampling strategies: "last_forward" (default) takes each frame's final
token; "middle" takes the center token; "bidirection" takes the
(last, first) pair and feeds both through one spreading module jointly;
"bi_independent" routes the same pair through two separate modules and
averages their prompts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ConfigError, DimensionError

EPS = 1e-8        # inside the entropy logarithm
EPS_DIV = 1e-8    # floor for the per-frame max-entropy denominator

STRATEGIES = ("last_forward", "middle", "bidirection", "bi_independent")


# ---------------------------------------------------------------------------
# sequence layout
# ---------------------------------------------------------------------------

@dataclass
class TokenSequence:
    """A flat token matrix plus the layout needed to address it.

    Without slots the layout is [cls, T*N frame tokens]; with slots each
    frame is followed by one prompt slot. All position helpers return
    absolute row indices into ``tokens``.
    """

    tokens: Tensor        # [S, d]
    frames: int           # T
    tokens_per_frame: int  # N
    has_slots: bool = False

    def __post_init__(self):
        if self.tokens.ndim != 2:
            raise DimensionError(f"TokenSequence: tokens must be [S, d], got {self.tokens.shape}")
        if self.tokens.shape[0] != self.expected_length():
            raise DimensionError(
                f"TokenSequence: {self.tokens.shape[0]} rows, layout needs "
                f"{self.expected_length()} (T={self.frames}, N={self.tokens_per_frame}, "
                f"slots={self.has_slots})"
            )

    def expected_length(self) -> int:
        stride = self.tokens_per_frame + (1 if self.has_slots else 0)
        return 1 + self.frames * stride

    @property
    def length(self) -> int:
        return self.tokens.shape[0]

    def _stride(self) -> int:
        return self.tokens_per_frame + (1 if self.has_slots else 0)

    def frame_start(self, i: int) -> int:
        return 1 + i * self._stride()

    def frame_positions(self, i: int) -> np.ndarray:
        s = self.frame_start(i)
        return np.arange(s, s + self.tokens_per_frame)

    def all_frame_positions(self) -> np.ndarray:
        return np.concatenate([self.frame_positions(i) for i in range(self.frames)])

    def slot_position(self, i: int) -> int:
        if not self.has_slots:
            raise DimensionError("TokenSequence: no prompt slots in this layout")
        return self.frame_start(i) + self.tokens_per_frame


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class IfgParams:
    """Intra-frame gathering: shared across layers, recomputed per layer."""

    w_down: Tensor       # [d, d_s]
    b_down: Tensor       # [d_s]
    conv_prompt: Tensor  # [3, 3, d_s]
    w_up_prompt: Tensor  # [d_s, d], zero at init
    b_up_prompt: Tensor  # [d], zero at init
    conv_var: Tensor     # [3, 3, d_s]
    w_up_var: Tensor     # [d_s, d], zero at init
    b_up_var: Tensor     # [d], zero at init
    alpha: Tensor        # scalar

    def named(self, prefix: str):
        for f in ("w_down", "b_down", "conv_prompt", "w_up_prompt", "b_up_prompt",
                  "conv_var", "w_up_var", "b_up_var", "alpha"):
            yield f"{prefix}.{f}", getattr(self, f)


@dataclass
class IfsParams:
    """Inter-frame spreading: one instance per regenerating layer boundary."""

    w_down: Tensor   # [d, d_t]
    b_down: Tensor   # [d_t]
    w_q: Tensor      # [d_t, d_t]
    b_q: Tensor      # [d_t]
    w_k: Tensor      # [d_t, d_t]
    b_k: Tensor      # [d_t]
    w_v: Tensor      # [d_t, d_t]
    b_v: Tensor      # [d_t]
    w_o: Tensor      # [d_t, d_t]
    b_o: Tensor      # [d_t]
    w_up: Tensor     # [d_t, d], zero at init
    b_up: Tensor     # [d]; small random by default, see init_ifs
    beta: Tensor     # scalar

    def named(self, prefix: str):
        for f in ("w_down", "b_down", "w_q", "b_q", "w_k", "b_k", "w_v", "b_v",
                  "w_o", "b_o", "w_up", "b_up", "beta"):
            yield f"{prefix}.{f}", getattr(self, f)


@dataclass
class PromptState:
    """One layer boundary's prompt quantities (tape tensors)."""

    p_s: Tensor   # [T, N, d]
    w: Tensor     # [T, d]
    v: Tensor     # [T, d]
    p_t: Tensor | None = None   # [T, d] once spreading has run


def init_ifg(rng: np.random.Generator, d: int, d_s: int) -> IfgParams:
    """Bottleneck randomly initialized; both up-projections exactly zero.

    Zero up-projections make p_s = 0 and v = 0 for any input, so a fresh
    model computes the bare backbone function.
    """
    if d_s >= d:
        raise ConfigError(f"init_ifg: bottleneck d_s={d_s} must be smaller than d={d}")
    return IfgParams(
        w_down=Tensor(rng.normal(0.0, d ** -0.5, (d, d_s)), requires_grad=True),
        b_down=Tensor(np.zeros(d_s), requires_grad=True),
        conv_prompt=Tensor(rng.normal(0.0, 1.0 / 3.0, (3, 3, d_s)), requires_grad=True),
        w_up_prompt=Tensor(np.zeros((d_s, d)), requires_grad=True),
        b_up_prompt=Tensor(np.zeros(d), requires_grad=True),
        conv_var=Tensor(rng.normal(0.0, 1.0 / 3.0, (3, 3, d_s)), requires_grad=True),
        w_up_var=Tensor(np.zeros((d_s, d)), requires_grad=True),
        b_up_var=Tensor(np.zeros(d), requires_grad=True),
        alpha=Tensor(np.asarray(1.0), requires_grad=True),
    )


def init_ifs(rng: np.random.Generator, d: int, d_t: int, beta_init: float = 0.0) -> IfsParams:
    """Attention path randomly initialized; the up-projection weight is zero.

    The up bias is drawn small instead of zeroed: p_t = beta * up(attn) * v
    starts as a triple product of zeros whose partial derivatives all vanish,
    and gradient descent can never leave that point. A nonzero up bias (with
    a nonzero beta) un-gates the variance path while the initial prompts
    stay exactly zero because v = 0.
    """
    if d_t >= d:
        raise ConfigError(f"init_ifs: bottleneck d_t={d_t} must be smaller than d={d}")
    s = d_t ** -0.5

    def lin(shape):
        return Tensor(rng.normal(0.0, s, shape), requires_grad=True)

    return IfsParams(
        w_down=Tensor(rng.normal(0.0, d ** -0.5, (d, d_t)), requires_grad=True),
        b_down=Tensor(np.zeros(d_t), requires_grad=True),
        w_q=lin((d_t, d_t)), b_q=Tensor(np.zeros(d_t), requires_grad=True),
        w_k=lin((d_t, d_t)), b_k=Tensor(np.zeros(d_t), requires_grad=True),
        w_v=lin((d_t, d_t)), b_v=Tensor(np.zeros(d_t), requires_grad=True),
        w_o=lin((d_t, d_t)), b_o=Tensor(np.zeros(d_t), requires_grad=True),
        w_up=Tensor(np.zeros((d_t, d)), requires_grad=True),
        b_up=Tensor(rng.normal(0.0, 0.1, d), requires_grad=True),
        beta=Tensor(np.asarray(float(beta_init)), requires_grad=True),
    )


# ---------------------------------------------------------------------------
# entropy weights
# ---------------------------------------------------------------------------

def entropy_profile(p_s: Tensor, epsilon: float = EPS) -> tuple[Tensor, Tensor, Tensor]:
    """Per-token entropy H [T,N], confidence E [T,N], per-frame mean Ebar [T].

    P = softmax over channels of p_s; H = -sum P log(P + eps);
    E = 1 - H / max(max_token H, eps_div), so within each frame the flattest
    token sits at E = 0 and near-one-hot tokens approach E = 1.
    """
    if p_s.ndim != 3:
        raise DimensionError(f"entropy_profile: p_s must be [T, N, d], got {p_s.shape}")
    P = ag.softmax(p_s, axis=-1)
    H = ag.neg(ag.reduce_sum(P * ag.log(P + epsilon), axis=-1))        # [T, N]
    h_max = ag.clamp_min(ag.reduce_max(H, axis=1, keepdims=True), EPS_DIV)
    E = 1.0 + ag.neg(H * ag.power(h_max, -1.0))                        # [T, N]
    e_bar = ag.mean(E, axis=1)                                         # [T]
    return H, E, e_bar


def entropy_weights(p_s: Tensor, alpha: Tensor | float, epsilon: float = EPS) -> Tensor:
    """Frame weights w [T, d]: alpha times a softmax over per-frame mean confidence.

    Along any channel the weights sum to alpha; frames whose prompts look
    decisive (low entropy) get a larger share.
    """
    _, _, e_bar = entropy_profile(p_s, epsilon)
    T = p_s.shape[0]
    d = p_s.shape[2]
    w = ag.softmax(e_bar, axis=0) * alpha                              # [T]
    return ag.reshape(w, (T, 1)) * Tensor(np.ones(d))                  # broadcast to [T, d]


# ---------------------------------------------------------------------------
# intra-frame gathering
# ---------------------------------------------------------------------------

def ifg_forward(frame_tokens: Tensor, params: IfgParams,
                epsilon: float = EPS) -> tuple[Tensor, Tensor, Tensor]:
    """Produce (p_s [T,N,d], w [T,d], v [T,d]) from frame tokens [T,N,d].

    Each frame's tokens are projected to the bottleneck, laid out on their
    sqrt(N) x sqrt(N) patch grid and convolved depthwise; the result feeds
    the additive prompt through one up-projection and, after a second conv,
    the spatial gate v through the other (mean-pooled over the frame).
    """
    if frame_tokens.ndim != 3:
        raise DimensionError(f"ifg_forward: want [T, N, d], got {frame_tokens.shape}")
    T, N, d = frame_tokens.shape
    g = math.isqrt(N)
    if g * g != N:
        raise ConfigError(f"ifg_forward: N={N} is not a perfect square, cannot form the grid")

    d_s = params.w_down.shape[1]
    flat = ag.reshape(frame_tokens, (T * N, d))
    low = ag.matmul(flat, params.w_down) + params.b_down               # [T*N, d_s]
    grid = ag.reshape(low, (T, g, g, d_s))
    l = ag.conv2d_depthwise(grid, params.conv_prompt)                  # [T, g, g, d_s]
    l_flat = ag.reshape(l, (T * N, d_s))

    p_s = ag.reshape(ag.matmul(l_flat, params.w_up_prompt) + params.b_up_prompt, (T, N, d))

    c2 = ag.conv2d_depthwise(l, params.conv_var)
    v_map = ag.matmul(ag.reshape(c2, (T * N, d_s)), params.w_up_var) + params.b_up_var
    v = ag.mean(ag.reshape(v_map, (T, N, d)), axis=1)                  # [T, d]

    w = entropy_weights(p_s, params.alpha, epsilon)
    return p_s, w, v


def overlay_intra(seq: TokenSequence, p_s: Tensor) -> TokenSequence:
    """Add p_s onto the frame-token rows; cls and slot rows are untouched."""
    T, N, d = p_s.shape
    if T != seq.frames or N != seq.tokens_per_frame or d != seq.tokens.shape[1]:
        raise DimensionError(
            f"overlay_intra: p_s {p_s.shape} does not match sequence layout "
            f"(T={seq.frames}, N={seq.tokens_per_frame}, d={seq.tokens.shape[1]})"
        )
    positions = seq.all_frame_positions()
    add = ag.scatter_rows(ag.reshape(p_s, (T * N, d)), positions, seq.length)
    return TokenSequence(seq.tokens + add, seq.frames, seq.tokens_per_frame, seq.has_slots)


# ---------------------------------------------------------------------------
# frame-token sampling
# ---------------------------------------------------------------------------

def sample_positions(seq: TokenSequence, strategy: str) -> np.ndarray:
    """Absolute row indices sampled per frame: [T] or [T, 2] for paired strategies."""
    if strategy not in STRATEGIES:
        raise ConfigError(f"sample_positions: unknown strategy {strategy!r}, "
                          f"choose from {STRATEGIES}")
    N = seq.tokens_per_frame
    starts = np.array([seq.frame_start(i) for i in range(seq.frames)])
    if strategy == "last_forward":
        return starts + (N - 1)
    if strategy == "middle":
        return starts + N // 2
    return np.stack([starts + (N - 1), starts], axis=1)   # (end of forward span, start)


def sample_frame_token(seq: TokenSequence, strategy: str) -> Tensor:
    """Gather the per-frame summary tokens: [T, d] or [T, 2, d]."""
    pos = sample_positions(seq, strategy)
    rows = ag.gather_rows(seq.tokens, pos.reshape(-1))
    if pos.ndim == 2:
        return ag.reshape(rows, (seq.frames, 2, seq.tokens.shape[1]))
    return rows


# ---------------------------------------------------------------------------
# inter-frame spreading
# ---------------------------------------------------------------------------

def _attention(z: Tensor, p: IfsParams) -> Tensor:
    """Single-head scaled dot-product self-attention over the rows of z."""
    d_t = p.w_q.shape[0]
    q = ag.matmul(z, p.w_q) + p.b_q
    k = ag.matmul(z, p.w_k) + p.b_k
    vv = ag.matmul(z, p.w_v) + p.b_v
    scores = ag.matmul(q, ag.transpose(k, (1, 0))) * (d_t ** -0.5)
    mix = ag.matmul(ag.softmax(scores, axis=-1), vv)
    return ag.matmul(mix, p.w_o) + p.b_o


def ifs_forward(sampled: Tensor, w: Tensor, v: Tensor, params: IfsParams) -> Tensor:
    """Spread per-frame summaries across frames: p_t [T, d].

    sampled is [T, d], or [T, 2, d] when a paired strategy feeds both span
    ends jointly (the pair shares the attention and its outputs are
    averaged per frame). The entropy weight gates the input, the spatial
    gate scales the output, and beta scales the whole prompt:

        p_t = beta * up(attn(down(sampled * w))) * v
    """
    paired = sampled.ndim == 3
    if paired:
        T, two, d = sampled.shape
        if two != 2:
            raise DimensionError(f"ifs_forward: paired input must be [T, 2, d], got {sampled.shape}")
        g = sampled * ag.reshape(w, (T, 1, d))
        z = ag.matmul(ag.reshape(g, (2 * T, d)), params.w_down) + params.b_down
    else:
        T, d = sampled.shape
        g = sampled * w
        z = ag.matmul(g, params.w_down) + params.b_down

    out = _attention(z, params)
    y = ag.matmul(out, params.w_up) + params.b_up
    if paired:
        y = ag.mean(ag.reshape(y, (T, 2, d)), axis=1)
    return params.beta * y * v


def spread_prompts(seq: TokenSequence, w: Tensor, v: Tensor, strategy: str,
                   modules: tuple[IfsParams, ...]) -> Tensor:
    """Run the configured sampling strategy through its spreading module(s)."""
    sampled = sample_frame_token(seq, strategy)
    if strategy == "bi_independent":
        if len(modules) != 2:
            raise ConfigError("spread_prompts: bi_independent needs two module instances")
        T, _, d = sampled.shape
        first = ag.reshape(ag.slice_axis(sampled, 1, 0, 1), (T, d))
        second = ag.reshape(ag.slice_axis(sampled, 1, 1, 2), (T, d))
        return (ifs_forward(first, w, v, modules[0])
                + ifs_forward(second, w, v, modules[1])) * 0.5
    return ifs_forward(sampled, w, v, modules[0])


# ---------------------------------------------------------------------------
# slot insertion
# ---------------------------------------------------------------------------

def insert_inter(seq: TokenSequence, p_t: Tensor) -> TokenSequence:
    """Interleave one prompt slot after each frame: S goes to 1 + T*(N+1).

    If the sequence already carries slots their rows are replaced by the
    fresh prompts (the old slot values are dropped, not accumulated).
    """
    T, N = seq.frames, seq.tokens_per_frame
    if p_t.shape != (T, seq.tokens.shape[1]):
        raise DimensionError(
            f"insert_inter: p_t {p_t.shape} does not match (T={T}, d={seq.tokens.shape[1]})"
        )
    parts = [ag.slice_axis(seq.tokens, 0, 0, 1)]   # cls
    for i in range(T):
        s = seq.frame_start(i)
        parts.append(ag.slice_axis(seq.tokens, 0, s, s + N))
        parts.append(ag.slice_axis(p_t, 0, i, i + 1))
    return TokenSequence(ag.concat(parts, axis=0), T, N, has_slots=True)
