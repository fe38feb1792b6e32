"""Scratch: find a reduced-scale config where the module-ablation ordering
(IFG+IFS >= max(singles) >= neither, full-vs-neither >= 3 points) holds
robustly under ssp_peft, cheaply enough for the acceptance suite."""
import sys
import time

import numpy as np

from sspvideo.dataset import SynthSpec, build_in_memory
from sspvideo.model import ModelConfig, build_model
from sspvideo.training import TrainSettings, train

spc = int(sys.argv[1]) if len(sys.argv) > 1 else 16
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 20

spec = SynthSpec(n_classes=6, samples_per_class=spc, seed=0)
tr_v, tr_l, va_v, va_l = build_in_memory(spec)
arms = [("both", True, True), ("ifg", True, False),
        ("ifs", False, True), ("neither", False, False)]
t0 = time.time()
means = {}
for name, ifg, ifs in arms:
    accs = []
    for seed in range(3):
        cfg = ModelConfig(n_classes=6, use_ifg=ifg, use_ifs=ifs)
        model = build_model(cfg, seed=seed)
        settings = TrainSettings(epochs=epochs, batch_size=8, peak_lr=3e-3,
                                 warmup_epochs=3, weight_decay=0.05,
                                 policy="ssp_peft", shuffle_seed=seed)
        result = train(model, tr_v, tr_l, va_v, va_l, settings)
        accs.append(result.best_val_top1)
        print(f"{name:8s} s{seed}: {result.best_val_top1:.3f} "
              f"({time.time()-t0:.0f}s)", flush=True)
    means[name] = float(np.mean(accs))
print(f"\nspc={spc} epochs={epochs}")
for name in means:
    print(f"  {name:8s} mean {means[name]:.3f}")
ok_order = (means["both"] >= max(means["ifg"], means["ifs"]) >= means["neither"])
ok_gap = means["both"] - means["neither"] >= 0.03
print(f"ordering {'OK' if ok_order else 'VIOLATED'}  "
      f"gap {means['both']-means['neither']:.3f} {'OK' if ok_gap else 'TOO SMALL'}")
