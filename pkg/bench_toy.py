import sys, time
sys.path.insert(0, "src")
import numpy as np
from sspvideo.autograd import Tape
from sspvideo.model import ModelConfig, build_model
from sspvideo.training import cross_entropy, AdamW
from sspvideo.dataset import SynthSpec, build_in_memory

cfg = ModelConfig()                      # toy reference: T=8 16x16, d=32, L=4
model = build_model(cfg, seed=0)
model.apply_policy("ssp_peft")
optim = AdamW(dict(model.named_tensors()), model.freeze_mask("ssp_peft"),
              weight_decay=0.05)
spec = SynthSpec()                       # 6 classes x 20, sigma 0.05
trv, trl, vav, vl = build_in_memory(spec)
print("train/val:", trv.shape, vav.shape)

# warm
with Tape() as tape:
    out, _ = model.forward(trv[0])
    tape.backward(cross_entropy(out, int(trl[0])))
optim.zero_grad()

t0 = time.time()
reps = 8
for i in range(reps):
    optim.zero_grad()
    with Tape() as tape:
        out, _ = model.forward(trv[i])
        tape.backward(cross_entropy(out, int(trl[i])))
    optim.step(1e-3)
per = (time.time() - t0) / reps
print(f"fwd+bwd+step per sample: {per*1000:.1f} ms")

t1 = time.time()
for i in range(reps):
    model.forward(vav[i % len(vav)])
per_f = (time.time() - t1) / reps
print(f"fwd only per sample: {per_f*1000:.1f} ms")

n_train, n_val, epochs, seeds = 96, 24, 50, 3
est = seeds * epochs * (n_train * per + n_val * per_f)
print(f"estimated 3-seed 50-epoch wall time: {est/60:.1f} min")
