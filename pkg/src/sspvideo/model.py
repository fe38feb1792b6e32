"""Video classifier: patch embedding, stacked bidirectional scan blocks,
layer-wise prompting, and a linear head on the cls token.

The prompting schedule per layer i (1-based):

    overlay:   recompute intra-frame prompts from the layer's own frame
               tokens and add them in place (cls and slots are skipped),
    block:     bidirectional selective scan,
    boundary:  for i <= regenerate_depth, sample one token per frame from
               the block output, spread across frames, and write the
               result into the interleaved prompt slots (inserting them
               after the first boundary, overwriting afterwards).

Freeze policies: "ssp_peft" trains prompts + head on a frozen backbone,
"head_only" trains just the head, "full" trains everything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autograd as ag
from . import prompting as pr
from . import ssm
from .autograd import Tensor
from .errors import ConfigError, DimensionError, FormatError
from .storage import load_checkpoint, save_checkpoint

POLICIES = ("ssp_peft", "full", "head_only")

# Position-embedding init scale; see the note in VideoModel.__init__.
POS_INIT_STD = 0.5

# name prefixes that stay trainable under the parameter-efficient policy
_PEFT_PREFIXES = ("ifg.", "ifs.", "head.")


@dataclass
class ModelConfig:
    frames: int = 8
    channels: int = 1
    height: int = 16
    width: int = 16
    patch_h: int = 4
    patch_w: int = 4
    d_model: int = 32
    d_state: int = 8
    n_layers: int = 4
    d_ifg: int = 16
    d_ifs: int = 8
    n_ifs: int = 3
    regenerate_depth: int | None = None   # None -> n_ifs
    strategy: str = "last_forward"
    n_classes: int = 6
    use_ifg: bool = True
    use_ifs: bool = True
    use_entropy_gate: bool = True
    use_variance_gate: bool = True
    beta_init: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.height % self.patch_h or self.width % self.patch_w:
            raise ConfigError(
                f"ModelConfig: frame {self.height}x{self.width} not divisible by "
                f"patch {self.patch_h}x{self.patch_w}"
            )
        n = self.tokens_per_frame
        if self.use_ifg and math.isqrt(n) ** 2 != n:
            raise ConfigError(f"ModelConfig: N={n} tokens per frame is not a perfect square")
        for name in ("frames", "channels", "d_model", "d_state", "n_layers", "n_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"ModelConfig: {name} must be positive")
        if self.d_ifg >= self.d_model:
            raise ConfigError(f"ModelConfig: d_ifg={self.d_ifg} must be < d_model={self.d_model}")
        if self.d_ifs >= self.d_model:
            raise ConfigError(f"ModelConfig: d_ifs={self.d_ifs} must be < d_model={self.d_model}")
        if self.use_ifs and not (1 <= self.n_ifs <= self.n_layers - 1):
            raise ConfigError(
                f"ModelConfig: n_ifs={self.n_ifs} must lie in [1, n_layers-1={self.n_layers - 1}]"
            )
        depth = self.effective_regenerate_depth
        if self.use_ifs and not (1 <= depth <= self.n_layers - 1):
            raise ConfigError(f"ModelConfig: regenerate_depth={depth} out of range")
        if self.strategy not in pr.STRATEGIES:
            raise ConfigError(
                f"ModelConfig: strategy {self.strategy!r} not one of {pr.STRATEGIES}"
            )

    @property
    def tokens_per_frame(self) -> int:
        return (self.height // self.patch_h) * (self.width // self.patch_w)

    @property
    def grid(self) -> tuple[int, int]:
        return self.height // self.patch_h, self.width // self.patch_w

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_h * self.patch_w

    @property
    def d_inner(self) -> int:
        return 2 * self.d_model

    @property
    def effective_regenerate_depth(self) -> int:
        return self.n_ifs if self.regenerate_depth is None else self.regenerate_depth

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        bad = set(data) - known
        if bad:
            raise ConfigError(f"ModelConfig: unknown key {sorted(bad)[0]!r}")
        return cls(**data)


@dataclass
class LayerTrace:
    """Everything the analysis tools need from one layer's forward pass."""

    block: ssm.BlockTrace
    frames: int
    tokens_per_frame: int
    had_slots: bool                 # layout of the block INPUT sequence
    p_s: np.ndarray | None = None   # [T, N, d]
    w: np.ndarray | None = None     # [T, d]
    v: np.ndarray | None = None     # [T, d]
    p_t: np.ndarray | None = None   # [T, d] if this boundary spread prompts


@dataclass
class ModelTrace:
    layers: list[LayerTrace] = field(default_factory=list)


def extract_patches(video: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """[T, C, H, W] -> [T*N, C*ph*pw], patches in raster order per frame."""
    video = np.asarray(video, dtype=np.float64)
    want = (cfg.frames, cfg.channels, cfg.height, cfg.width)
    if video.shape != want:
        raise DimensionError(f"extract_patches: video shape {video.shape}, config wants {want}")
    gh, gw = cfg.grid
    t = video.reshape(cfg.frames, cfg.channels, gh, cfg.patch_h, gw, cfg.patch_w)
    t = t.transpose(0, 2, 4, 1, 3, 5)                  # [T, gh, gw, C, ph, pw]
    return t.reshape(cfg.frames * gh * gw, cfg.patch_dim)


class VideoModel:
    """Parameter container plus the forward pass. No training state in here."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        d, D = cfg.d_model, cfg.d_state
        self.embed_w = Tensor(rng.normal(0.0, cfg.patch_dim ** -0.5,
                                         (cfg.patch_dim, d)), requires_grad=True)
        self.embed_b = Tensor(np.zeros(d), requires_grad=True)
        # Learned spatial/temporal position embeddings. The init scale is
        # deliberately large: motion classes are read out of position x time
        # interaction products inside the scan, and those products compete
        # with pixel-noise products (~sigma^2) for gradient signal. At 0.5
        # the positional products dominate from step one; at 0.02 they are
        # ~6x smaller than the noise floor and training memorizes instead.
        self.pos_embed = Tensor(rng.normal(0.0, POS_INIT_STD, (1, cfg.tokens_per_frame, d)),
                                requires_grad=True)
        self.tem_embed = Tensor(rng.normal(0.0, POS_INIT_STD, (cfg.frames, 1, d)),
                                requires_grad=True)
        self.cls = Tensor(rng.normal(0.0, 0.02, (1, d)), requires_grad=True)
        self.blocks = [ssm.init_block(rng, d, cfg.d_inner, D) for _ in range(cfg.n_layers)]
        self.ifg = pr.init_ifg(rng, d, cfg.d_ifg) if cfg.use_ifg else None
        self.ifs_modules: list[tuple[pr.IfsParams, ...]] = []
        if cfg.use_ifs:
            per_boundary = 2 if cfg.strategy == "bi_independent" else 1
            for _ in range(cfg.n_ifs):
                mods = tuple(pr.init_ifs(rng, d, cfg.d_ifs, cfg.beta_init)
                             for _ in range(per_boundary))
                self.ifs_modules.append(mods)
        self.head_w = Tensor(rng.normal(0.0, d ** -0.5, (d, cfg.n_classes)), requires_grad=True)
        self.head_b = Tensor(np.zeros(cfg.n_classes), requires_grad=True)

    # ---------------------------------------------------------------- params

    def named_tensors(self):
        yield "embed.w", self.embed_w
        yield "embed.b", self.embed_b
        yield "embed.pos", self.pos_embed
        yield "embed.tem", self.tem_embed
        yield "embed.cls", self.cls
        for i, blk in enumerate(self.blocks):
            yield from blk.named(f"backbone.{i}")
        if self.ifg is not None:
            yield from self.ifg.named("ifg")
        for j, mods in enumerate(self.ifs_modules):
            for k, mod in enumerate(mods):
                tag = f"ifs.{j}" if len(mods) == 1 else f"ifs.{j}.{'ab'[k]}"
                yield from mod.named(tag)
        yield "head.w", self.head_w
        yield "head.b", self.head_b

    def freeze_mask(self, policy: str) -> dict[str, bool]:
        """name -> trainable under the given policy."""
        if policy not in POLICIES:
            raise ConfigError(f"freeze_mask: unknown policy {policy!r}, choose from {POLICIES}")
        mask = {}
        for name, _ in self.named_tensors():
            if policy == "full":
                mask[name] = True
            elif policy == "head_only":
                mask[name] = name.startswith("head.")
            else:
                mask[name] = name.startswith(_PEFT_PREFIXES)
        return mask

    def apply_policy(self, policy: str) -> dict[str, bool]:
        mask = self.freeze_mask(policy)
        for name, t in self.named_tensors():
            t.requires_grad = mask[name]
            t.grad = None
        return mask

    def parameter_counts(self, policy: str) -> tuple[int, int]:
        """(trainable, total) parameter counts under a policy."""
        mask = self.freeze_mask(policy)
        trainable = total = 0
        for name, t in self.named_tensors():
            total += t.size
            if mask[name]:
                trainable += t.size
        return trainable, total

    # --------------------------------------------------------------- forward

    def forward(self, video: np.ndarray,
                collect_trace: bool = False) -> tuple[Tensor, ModelTrace | None]:
        """Logits [n_classes] for one video [T, C, H, W]."""
        cfg = self.cfg
        patches = extract_patches(video, cfg)
        x = ag.matmul(Tensor(patches), self.embed_w) + self.embed_b
        x = ag.reshape(x, (cfg.frames, cfg.tokens_per_frame, cfg.d_model))
        x = (x + self.pos_embed) + self.tem_embed
        x = ag.reshape(x, (cfg.frames * cfg.tokens_per_frame, cfg.d_model))
        seq = pr.TokenSequence(ag.concat([self.cls, x], axis=0),
                               cfg.frames, cfg.tokens_per_frame, has_slots=False)

        trace = ModelTrace() if collect_trace else None
        ones_gate = Tensor(np.ones((cfg.frames, cfg.d_model)))
        depth = cfg.effective_regenerate_depth

        for li in range(cfg.n_layers):
            w = v = None
            p_s = None
            if cfg.use_ifg:
                frame_tokens = ag.gather_rows(seq.tokens, seq.all_frame_positions())
                frame_tokens = ag.reshape(
                    frame_tokens, (cfg.frames, cfg.tokens_per_frame, cfg.d_model))
                p_s, w, v = pr.ifg_forward(frame_tokens, self.ifg)
                seq = pr.overlay_intra(seq, p_s)
            if not cfg.use_entropy_gate or w is None:
                w = ones_gate
            if not cfg.use_variance_gate or v is None:
                v = ones_gate

            had_slots = seq.has_slots
            out, block_trace = ssm.mamba_block(seq.tokens, self.blocks[li],
                                               collect_trace=collect_trace)
            seq = pr.TokenSequence(out, seq.frames, seq.tokens_per_frame, seq.has_slots)

            p_t = None
            if cfg.use_ifs and (li + 1) <= depth:
                mods = self.ifs_modules[min(li, cfg.n_ifs - 1)]
                p_t = pr.spread_prompts(seq, w, v, cfg.strategy, mods)
                seq = pr.insert_inter(seq, p_t)

            if collect_trace:
                trace.layers.append(LayerTrace(
                    block=block_trace,
                    frames=cfg.frames,
                    tokens_per_frame=cfg.tokens_per_frame,
                    had_slots=had_slots,
                    p_s=None if p_s is None else p_s.data.copy(),
                    w=None if not cfg.use_ifg else w.data.copy(),
                    v=None if not cfg.use_ifg else v.data.copy(),
                    p_t=None if p_t is None else p_t.data.copy(),
                ))

        cls_out = ag.slice_axis(seq.tokens, 0, 0, 1)
        logits = ag.matmul(cls_out, self.head_w) + self.head_b
        return ag.reshape(logits, (cfg.n_classes,)), trace

    def logits(self, video: np.ndarray) -> np.ndarray:
        out, _ = self.forward(video)
        return out.data

    # ----------------------------------------------------------- persistence

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_tensors()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        mine = dict(self.named_tensors())
        missing = sorted(set(mine) - set(state))
        extra = sorted(set(state) - set(mine))
        if missing or extra:
            raise FormatError(
                f"load_state_dict: missing tensors {missing[:3]}, unexpected {extra[:3]}"
            )
        for name, t in mine.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise FormatError(
                    f"load_state_dict: {name} has shape {arr.shape}, model wants {t.data.shape}"
                )
            t.data = arr.copy()

    def save(self, directory) -> None:
        save_checkpoint(directory, self.state_dict())

    @classmethod
    def load(cls, directory, cfg: ModelConfig) -> "VideoModel":
        model = cls(cfg, np.random.default_rng(0))
        model.load_state_dict(load_checkpoint(directory))
        return model


def build_model(cfg: ModelConfig, seed: int) -> VideoModel:
    return VideoModel(cfg, np.random.default_rng(np.random.SeedSequence(seed)))
