"""Scratch: temporal-order probe statistics (best vs final val top1)."""
import time

import numpy as np

from sspvideo.dataset import SynthSpec, build_in_memory
from sspvideo.model import ModelConfig, build_model
from sspvideo.training import TrainSettings, train

t0 = time.time()
for spc in (40,):
    best, final = [], []
    for seed in range(3):
        spec = SynthSpec(n_classes=2, samples_per_class=spc, seed=0,
                         shuffle_frames=True)
        tr_v, tr_l, va_v, va_l = build_in_memory(spec)
        model = build_model(ModelConfig(n_classes=2), seed=seed)
        settings = TrainSettings(epochs=12, batch_size=8, peak_lr=3e-3,
                                 warmup_epochs=2, weight_decay=0.05,
                                 policy="full", shuffle_seed=seed)
        result = train(model, tr_v, tr_l, va_v, va_l, settings)
        vals = [r["top1"] for r in result.history if r["split"] == "val"]
        best.append(result.best_val_top1)
        final.append(vals[-1])
        print(f"spc{spc} s{seed}: best {result.best_val_top1:.3f} "
              f"final {vals[-1]:.3f} last3 {np.mean(vals[-3:]):.3f}", flush=True)
    print(f"spc{spc}: mean best {np.mean(best):.3f}  mean final {np.mean(final):.3f} "
          f"({time.time()-t0:.0f}s)")
