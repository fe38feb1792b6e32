import sys, time
sys.path.insert(0, "src")
import numpy as np
from sspvideo import autograd as ag
from sspvideo.autograd import Tensor
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
total = sum(t.size for t in wrt.values())
print(f"{len(wrt)} tensors, {total} scalar params")
t0 = time.time()
worst = ("", 0.0)
for name, t in wrt.items():
    e = ag.grad_check(f, t, step=1e-3)
    if e > worst[1]:
        worst = (name, e)
print(f"step 1e-3 full sweep: worst {worst[0]} = {worst[1]:.3e}  ({time.time()-t0:.1f}s)")
