import sys, time
sys.path.insert(0, "src")
import numpy as np
from sspvideo.model import ModelConfig, build_model
from sspvideo.training import TrainSettings, train
from sspvideo.dataset import SynthSpec, build_in_memory

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 35
spc = int(sys.argv[3]) if len(sys.argv) > 3 else 40
wd = float(sys.argv[4]) if len(sys.argv) > 4 else 0.05
lr = float(sys.argv[5]) if len(sys.argv) > 5 else 3e-3

spec = SynthSpec(seed=0, samples_per_class=spc)
trv, trl, vav, vl = build_in_memory(spec)
print(f"train {trv.shape[0]} val {vav.shape[0]}")
cfg = ModelConfig()
model = build_model(cfg, seed=seed)
st = TrainSettings(epochs=epochs, batch_size=8, peak_lr=lr, warmup_epochs=5,
                   weight_decay=wd, policy="ssp_peft", shuffle_seed=seed)
t0 = time.time()
res = train(model, trv, trl, vav, vl, st, log=print)
print(f"seed {seed} spc {spc} ep {epochs} wd {wd} lr {lr}: "
      f"best val {res.best_val_top1:.3f} @ {res.best_epoch} "
      f"({(time.time()-t0)/60:.1f} min)")

# per-class val accuracy at final params
from collections import Counter
hits = Counter(); tot = Counter()
for v, y in zip(vav, vl):
    pred = int(np.argmax(model.logits(v)))
    tot[int(y)] += 1
    hits[int(y)] += int(pred == int(y))
print("per-class val acc:", {c: f"{hits[c]}/{tot[c]}" for c in sorted(tot)})
