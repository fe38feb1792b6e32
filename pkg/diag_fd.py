import sys
sys.path.insert(0, "src")
import numpy as np
from sspvideo import autograd as ag
from sspvideo.autograd import Tensor, Tape
from sspvideo.model import ModelConfig, build_model

gcfg = ModelConfig(frames=2, channels=1, height=4, width=4, patch_h=2, patch_w=2,
                   d_model=8, d_state=4, n_layers=2, d_ifg=4, d_ifs=4, n_ifs=1,
                   n_classes=3, beta_init=0.3, strategy="bidirection")
gm = build_model(gcfg, seed=11)
grng = np.random.default_rng(99)
for name, t in gm.named_tensors():
    if name.endswith("a_log"):
        t.data = grng.normal(0.0, 0.5, t.shape)
    elif name.endswith("b_delta"):
        t.data = grng.normal(0.3, 0.3, t.shape)
    else:
        t.data = grng.normal(0.0, 0.4, t.shape)
    t.requires_grad = True
gvid = grng.uniform(size=(2, 1, 4, 4))
tgt = Tensor(grng.normal(size=3))

def f():
    out, _ = gm.forward(gvid)
    return ag.reduce_sum((out - tgt) * (out - tgt))

wrt = dict(gm.named_tensors())
name = "backbone.0.fwd.w_delta"
t = wrt[name]

with Tape() as tape:
    out = f()
    print("loss =", float(out.data))
    tape.backward(out)
g_ad = t.grad.copy()
t.grad = None

flat = t.data.reshape(-1)
for step in (1e-4, 3e-4, 1e-3, 3e-3):
    g_fd = np.zeros_like(flat)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = float(f().data)
        flat[i] = keep - step
        lo = float(f().data)
        flat[i] = keep
        g_fd[i] = (hi - lo) / (2.0 * step)
    gf = g_fd.reshape(t.data.shape)
    denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(gf)), 1e-8)
    rel = np.abs(g_ad - gf) / denom
    k = np.unravel_index(np.argmax(rel), rel.shape)
    print(f"step {step:.0e}: worst rel {rel.max():.3e} at {k}, "
          f"g_ad={g_ad[k]:.6e} g_fd={gf[k]:.6e} |g_ad| median={np.median(np.abs(g_ad)):.2e}")
