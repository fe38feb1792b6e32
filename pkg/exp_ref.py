import sys, time
sys.path.insert(0, "src")
import numpy as np
from sspvideo.model import ModelConfig, build_model
from sspvideo.training import TrainSettings, train
from sspvideo.dataset import SynthSpec, build_in_memory

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 50
spec = SynthSpec(seed=0)                       # dataset fixed across model seeds
trv, trl, vav, vl = build_in_memory(spec)
cfg = ModelConfig()
model = build_model(cfg, seed=seed)
st = TrainSettings(epochs=epochs, batch_size=8, peak_lr=3e-3, warmup_epochs=5,
                   weight_decay=0.05, policy="ssp_peft", shuffle_seed=seed)
t0 = time.time()
res = train(model, trv, trl, vav, vl, st, log=print)
print(f"seed {seed}: best val {res.best_val_top1:.3f} @ epoch {res.best_epoch} "
      f"({(time.time()-t0)/60:.1f} min), frozen intact: {res.frozen_intact}")
