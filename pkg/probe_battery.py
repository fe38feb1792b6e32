import sys, time
sys.path.insert(0, "src")
import numpy as np
from sspvideo.model import ModelConfig, build_model
from sspvideo.training import TrainSettings, train, evaluate
from sspvideo.dataset import SynthSpec, build_in_memory

def run(tag, sigma=0.05, spc=64, epochs=30, lr=3e-3, wd=0.05, beta=0.1, seed=0,
        batch=8):
    spec = SynthSpec(seed=0, n_classes=2, samples_per_class=spc, noise_sigma=sigma)
    trv, trl, vav, vl = build_in_memory(spec)
    model = build_model(ModelConfig(n_classes=2, beta_init=beta), seed=seed)
    st = TrainSettings(epochs=epochs, batch_size=batch, peak_lr=lr,
                       warmup_epochs=max(1, epochs // 10), weight_decay=wd,
                       policy="full", shuffle_seed=seed)
    t0 = time.time()
    res = train(model, trv, trl, vav, vl, st)
    tr_loss, tr_acc = evaluate(model, trv, trl)
    va_loss, va_acc = evaluate(model, vav, vl)
    print(f"{tag:24s} train {tr_acc:.3f}  val(final) {va_acc:.3f}  val(best) "
          f"{res.best_val_top1:.3f}  ({(time.time()-t0)/60:.1f} min)", flush=True)
    return va_acc, res.best_val_top1

if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "all"
    if which in ("all", "1"):
        run("baseline ep30")
    if which in ("all", "2"):
        run("wd 0.3", wd=0.3)
    if which in ("all", "3"):
        run("lr 1e-2", lr=1e-2)
