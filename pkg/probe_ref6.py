import sys, time
sys.path.insert(0, "src")
import numpy as np
from sspvideo.model import ModelConfig, build_model
from sspvideo.training import TrainSettings, train, evaluate
from sspvideo.dataset import SynthSpec, build_in_memory, CLASS_NAMES


def confusion(model, videos, labels):
    n = 6
    m = np.zeros((n, n), dtype=int)
    for vid, lab in zip(videos, labels):
        pred = int(np.argmax(model.logits(vid)))
        m[lab, pred] += 1
    return m


def run(tag, policy="full", spc=32, epochs=50, lr=3e-3, wd=0.05, seed=0, show_cm=False):
    spec = SynthSpec(seed=0, n_classes=6, samples_per_class=spc)
    trv, trl, vav, vl = build_in_memory(spec)
    model = build_model(ModelConfig(n_classes=6), seed=seed)
    st = TrainSettings(epochs=epochs, batch_size=8, peak_lr=lr, warmup_epochs=5,
                       weight_decay=wd, policy=policy, shuffle_seed=seed)
    t0 = time.time()
    res = train(model, trv, trl, vav, vl, st)
    va_loss, va_acc = evaluate(model, vav, vl)
    print(f"{tag:34s} best {res.best_val_top1:.3f} (ep {res.best_epoch})  "
          f"final {va_acc:.3f}  ({(time.time()-t0)/60:.1f} min)", flush=True)
    if show_cm:
        m = confusion(model, vav, vl)
        print("        " + " ".join(f"{n[:5]:>6s}" for n in CLASS_NAMES))
        for i, row in enumerate(m):
            print(f"{CLASS_NAMES[i][:7]:>7s} " + " ".join(f"{x:6d}" for x in row), flush=True)
    return res.best_val_top1


if __name__ == "__main__":
    mode = sys.argv[1] if len(sys.argv) > 1 else "spc32"
    if mode == "spc32":
        run("6c full spc32 lr3e-3 s0", show_cm=True)
    elif mode == "spc40e35":
        run("6c full spc40 ep35 s0", spc=40, epochs=35, show_cm=True)
    elif mode == "lr5":
        run("6c full spc32 lr5e-3 s0", lr=5e-3, show_cm=True)
    elif mode == "seeds":
        for s in (int(a) for a in sys.argv[2:]):
            run(f"6c full spc32 s{s}", seed=s)
