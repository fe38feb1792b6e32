"""Bidirectional selective state-space core.

The recurrence implemented here is the diagonal input-dependent one:

    delta_i = softplus(x_i W_delta + b_delta)          per token, per channel
    B_i = x_i W_B,  C_i = x_i W_C                      per token
    A = -exp(a_log)                                    fixed sign, [d x D]
    Abar_i = exp(delta_i A)                            zero-order hold
    Bbar_i = (delta_i A)^-1 (exp(delta_i A) - 1) delta_i B_i
    h_i = Abar_i * h_{i-1} + Bbar_i * x_i              h: [d x D], h_{-1} = 0
    y_i = sum_D C_i * h_i

``scan_recurrence`` runs the loop as one fused autograd op: the forward is
the literal sequential recurrence and the backward is the adjoint
recurrence, both plain numpy. A block wires two scans, one per direction,
each direction owning its own causal conv and selective projections; the
backward direction is computed entirely on the reversed sequence and
flipped back, so reversing the input and swapping direction parameter sets
reverses the result exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import DimensionError, DomainError, NumericError

EPS = 1e-8
CONV_WIDTH = 4   # causal conv receptive field; fixed by construction


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class SelectiveParams:
    """One scan direction's parameters (d channels, D states each)."""

    a_log: Tensor        # [d, D]; A = -exp(a_log) keeps every pole stable
    w_delta: Tensor      # [d, d]
    b_delta: Tensor      # [d]
    w_b: Tensor          # [d, D]
    w_c: Tensor          # [d, D]
    conv_kernel: Tensor  # [CONV_WIDTH, d]
    conv_bias: Tensor    # [d]

    def named(self, prefix: str):
        yield f"{prefix}.a_log", self.a_log
        yield f"{prefix}.w_delta", self.w_delta
        yield f"{prefix}.b_delta", self.b_delta
        yield f"{prefix}.w_b", self.w_b
        yield f"{prefix}.w_c", self.w_c
        yield f"{prefix}.conv_kernel", self.conv_kernel
        yield f"{prefix}.conv_bias", self.conv_bias


@dataclass
class BlockParams:
    """Pre-norm bidirectional block: shared in/out projections, two scan paths."""

    norm_gain: Tensor    # [d_model]
    w_in: Tensor         # [d_model, 2 * d_inner] -> (main, gate)
    forward: SelectiveParams
    backward: SelectiveParams
    w_out: Tensor        # [d_inner, d_model]

    def named(self, prefix: str):
        yield f"{prefix}.norm_gain", self.norm_gain
        yield f"{prefix}.w_in", self.w_in
        yield from self.forward.named(f"{prefix}.fwd")
        yield from self.backward.named(f"{prefix}.bwd")
        yield f"{prefix}.w_out", self.w_out


def _softplus_inv(y: np.ndarray) -> np.ndarray:
    return np.log(np.expm1(y))


def init_selective(rng: np.random.Generator, d: int, D: int) -> SelectiveParams:
    """Random direction parameters with log-spaced state decay rates.

    a_log starts at log(1..D) per channel, so the states of one channel
    cover time constants from slow to fast. b_delta is set so initial
    step sizes are log-uniform in [1e-3, 1e-1] (diverse memory lengths).
    """
    a_log = np.tile(np.log(np.arange(1, D + 1, dtype=np.float64)), (d, 1))
    dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=d))
    return SelectiveParams(
        a_log=Tensor(a_log, requires_grad=True),
        w_delta=Tensor(rng.normal(0.0, d ** -0.5, size=(d, d)), requires_grad=True),
        b_delta=Tensor(_softplus_inv(dt), requires_grad=True),
        w_b=Tensor(rng.normal(0.0, d ** -0.5, size=(d, D)), requires_grad=True),
        w_c=Tensor(rng.normal(0.0, d ** -0.5, size=(d, D)), requires_grad=True),
        conv_kernel=Tensor(
            rng.normal(0.0, CONV_WIDTH ** -0.5, size=(CONV_WIDTH, d)), requires_grad=True
        ),
        conv_bias=Tensor(np.zeros(d), requires_grad=True),
    )


def init_block(rng: np.random.Generator, d_model: int, d_inner: int, D: int) -> BlockParams:
    return BlockParams(
        norm_gain=Tensor(np.ones(d_model), requires_grad=True),
        w_in=Tensor(
            rng.normal(0.0, d_model ** -0.5, size=(d_model, 2 * d_inner)), requires_grad=True
        ),
        forward=init_selective(rng, d_inner, D),
        backward=init_selective(rng, d_inner, D),
        w_out=Tensor(
            rng.normal(0.0, d_inner ** -0.5, size=(d_inner, d_model)), requires_grad=True
        ),
    )


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def zoh_discretize(A: Tensor, B: Tensor, delta: Tensor) -> tuple[Tensor, Tensor]:
    """Zero-order-hold discretization of a diagonal continuous system.

    Shapes: A [d, D] with strictly negative entries, delta [S, d] strictly
    positive, B [S, D]. Returns per-position Abar, Bbar, both [S, d, D]:

        Abar = exp(delta A)
        Bbar = (delta A)^-1 (exp(delta A) - 1) * delta B

    The quotient goes through its series limit for |delta A| < 1e-8, where
    Bbar -> delta B (1 + delta A / 2).
    """
    if A.ndim != 2 or delta.ndim != 2 or B.ndim != 2:
        raise DimensionError(
            f"zoh_discretize: want A [d,D], delta [S,d], B [S,D]; "
            f"got {A.shape}, {delta.shape}, {B.shape}"
        )
    S, d = delta.shape
    if A.shape[0] != d or B.shape != (S, A.shape[1]):
        raise DimensionError(
            f"zoh_discretize: inconsistent extents A{A.shape} delta{delta.shape} B{B.shape}"
        )
    if np.any(delta.data <= 0.0):
        raise DomainError("zoh_discretize: delta must be strictly positive")
    u_check = delta.data[:, :, None] * A.data[None, :, :]
    if np.any(u_check >= 0.0):
        raise DomainError("zoh_discretize: delta*A must be strictly negative everywhere")

    D = A.shape[1]
    delta_e = ag.reshape(delta, (S, d, 1))
    u = delta_e * A                              # [S, d, D]
    a_bar = ag.exp(u)
    b_bar = ag.expm1_over(u) * delta_e * ag.reshape(B, (S, 1, D))
    _require_finite(a_bar.data, "Abar")
    _require_finite(b_bar.data, "Bbar")
    return a_bar, b_bar


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        idx = np.argwhere(~np.isfinite(arr))[0]
        raise NumericError(f"{what}: non-finite value at index {tuple(int(i) for i in idx)}")


# ---------------------------------------------------------------------------
# realization and scan
# ---------------------------------------------------------------------------

@dataclass
class ScanRealization:
    """Per-position realized scan inputs (all tape tensors)."""

    delta: Tensor   # [S, d]
    b: Tensor       # [S, D]
    c: Tensor       # [S, D]
    a_bar: Tensor   # [S, d, D]
    b_bar: Tensor   # [S, d, D]


def realize_selective(x: Tensor, params: SelectiveParams) -> ScanRealization:
    """Input-dependent step sizes, input/output maps, and their ZOH forms."""
    if x.ndim != 2:
        raise DimensionError(f"realize_selective: x must be [S, d], got {x.shape}")
    delta = ag.softplus(ag.matmul(x, params.w_delta) + params.b_delta)
    b = ag.matmul(x, params.w_b)
    c = ag.matmul(x, params.w_c)
    A = ag.neg(ag.exp(params.a_log))
    a_bar, b_bar = zoh_discretize(A, b, delta)
    return ScanRealization(delta=delta, b=b, c=c, a_bar=a_bar, b_bar=b_bar)


def scan_recurrence(a_bar: Tensor, bx: Tensor, c: Tensor) -> Tensor:
    """h_i = Abar_i * h_{i-1} + bx_i;  y_i = sum_D c_i * h_i. One fused op.

    a_bar, bx: [S, d, D]; c: [S, D]; returns y [S, d]. The hidden states from
    the forward loop are kept for the adjoint pass, which walks the same
    recurrence in reverse:

        dL/dh_i = gy_i c_i^T + Abar_{i+1} * dL/dh_{i+1}
        dL/dAbar_i = dL/dh_i * h_{i-1};  dL/dbx_i = dL/dh_i
        dL/dc_i = sum_d h_i * gy_i
    """
    if a_bar.ndim != 3 or bx.shape != a_bar.shape or c.ndim != 2:
        raise DimensionError(
            f"scan_recurrence: want a_bar/bx [S,d,D] and c [S,D], "
            f"got {a_bar.shape}, {bx.shape}, {c.shape}"
        )
    S, d, D = a_bar.shape
    if S == 0:
        raise DimensionError("scan_recurrence: empty sequence")
    if c.shape != (S, D):
        raise DimensionError(f"scan_recurrence: c is {c.shape}, want {(S, D)}")

    def run(ad, bd, cd):
        hs = np.empty((S, d, D), dtype=np.float64)
        y = np.empty((S, d), dtype=np.float64)
        h = np.zeros((d, D), dtype=np.float64)
        for i in range(S):
            h = ad[i] * h + bd[i]
            hs[i] = h
            y[i] = h @ cd[i]
        return y, hs

    y_data, hs = run(a_bar.data, bx.data, c.data)
    ad, cd = a_bar.data, c.data

    def backward(gy):
        gh = np.zeros((d, D), dtype=np.float64)
        ga = np.empty((S, d, D), dtype=np.float64)
        gbx = np.empty((S, d, D), dtype=np.float64)
        gc = np.empty((S, D), dtype=np.float64)
        for i in range(S - 1, -1, -1):
            gh += gy[i][:, None] * cd[i][None, :]
            gc[i] = hs[i].T @ gy[i]
            ga[i] = gh * (hs[i - 1] if i > 0 else 0.0)
            gbx[i] = gh
            gh = gh * ad[i]
        return ga, gbx, gc

    return ag.record_op(
        "selective_scan", (a_bar, bx, c), y_data, backward,
        lambda: run(a_bar.data, bx.data, c.data)[0],
    )


def _flip(x: Tensor) -> Tensor:
    return ag.gather_rows(x, np.arange(x.shape[0] - 1, -1, -1))


def selective_scan(x: Tensor, params: SelectiveParams, direction: str = "forward") -> Tensor:
    """Run one direction's selective scan over x [S, d] and return y [S, d].

    direction="backward" processes the reversed sequence and flips the
    result back, so backward(x) == reverse(forward(reverse(x))) exactly.
    """
    if direction not in ("forward", "backward"):
        raise DomainError(f"selective_scan: unknown direction {direction!r}")
    if x.ndim != 2:
        raise DimensionError(f"selective_scan: x must be [S, d], got {x.shape}")
    if x.shape[0] == 0:
        raise DimensionError("selective_scan: empty sequence")
    xe = _flip(x) if direction == "backward" else x
    real = realize_selective(xe, params)
    S, d = xe.shape
    bx = real.b_bar * ag.reshape(xe, (S, d, 1))
    y = scan_recurrence(real.a_bar, bx, real.c)
    return _flip(y) if direction == "backward" else y


# ---------------------------------------------------------------------------
# normalization and the block
# ---------------------------------------------------------------------------

def rmsnorm(x: Tensor, gain: Tensor, eps: float = EPS) -> Tensor:
    """x / sqrt(mean(x^2) + eps) * gain along the channel axis."""
    ms = ag.mean(x * x, axis=-1, keepdims=True)
    return x * ag.power(ms + eps, -0.5) * gain


@dataclass
class BlockTrace:
    """Recorded per-direction quantities for the propagation analyses."""

    delta_fwd: np.ndarray    # [S, d_inner], forward-direction step sizes
    delta_bwd: np.ndarray    # [S, d_inner], in backward (reversed) order
    b_bar_fwd: np.ndarray    # [S, d_inner, D]
    a_log_fwd: np.ndarray    # [d_inner, D]


def _direction_path(main: Tensor, dp: SelectiveParams, reverse: bool,
                    trace: list | None) -> Tensor:
    m = _flip(main) if reverse else main
    m = ag.silu(ag.causal_conv1d(m, dp.conv_kernel, dp.conv_bias))
    real = realize_selective(m, dp)
    S, d = m.shape
    bx = real.b_bar * ag.reshape(m, (S, d, 1))
    y = scan_recurrence(real.a_bar, bx, real.c)
    if trace is not None:
        trace.append(real)
    return _flip(y) if reverse else y


def mamba_block(x: Tensor, params: BlockParams,
                collect_trace: bool = False) -> tuple[Tensor, BlockTrace | None]:
    """Pre-norm residual bidirectional block over a token sequence x [S, d].

    Returns (x + mix, trace). The two directions are averaged before the
    gate; with w_out all zero the block is exactly the identity.
    """
    if x.ndim != 2:
        raise DimensionError(f"mamba_block: x must be [S, d], got {x.shape}")
    u = rmsnorm(x, params.norm_gain)
    z = ag.matmul(u, params.w_in)
    d_inner = z.shape[1] // 2
    main = ag.slice_axis(z, 1, 0, d_inner)
    gate = ag.slice_axis(z, 1, d_inner, 2 * d_inner)

    reals: list | None = [] if collect_trace else None
    y_f = _direction_path(main, params.forward, reverse=False, trace=reals)
    y_b = _direction_path(main, params.backward, reverse=True, trace=reals)
    mixed = (y_f + y_b) * 0.5
    out = ag.matmul(mixed * ag.silu(gate), params.w_out)

    trace = None
    if collect_trace:
        trace = BlockTrace(
            delta_fwd=reals[0].delta.data.copy(),
            delta_bwd=reals[1].delta.data.copy(),
            b_bar_fwd=reals[0].b_bar.data.copy(),
            a_log_fwd=params.forward.a_log.data.copy(),
        )
    return x + out, trace
