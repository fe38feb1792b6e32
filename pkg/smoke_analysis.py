import sys
sys.path.insert(0, "src")
import numpy as np
from sspvideo import analysis as an
from sspvideo.model import ModelConfig, build_model
from sspvideo.errors import ContractError

ok = 0

def check(name, cond):
    global ok
    assert cond, name
    ok += 1
    print(f"  ok {name}")

# --- transmission closed forms ---
S, d, D = 6, 3, 2
deltas = np.ones((S, d))
a_log = np.zeros((d, D))  # a = -1
v = an.transmission(deltas, a_log, 1, 4, 0, 0)
check("e^-3 closed form", abs(v - np.exp(-3.0)) < 1e-15)
check("j=i -> 1 exactly", an.transmission(deltas, a_log, 3, 3, 1, 1) == 1.0)
d2 = np.zeros((3, 1)); d2[1, 0] = 0.5; d2[2, 0] = 0.25
al2 = np.log(2.0) * np.ones((1, 1))  # a = -2
v2 = an.transmission(d2, al2, 0, 2, 0, 0)
check("e^-1.5 direct", abs(v2 - np.exp(-1.5)) < 1e-15)
try:
    an.transmission(deltas, a_log, 4, 1, 0, 0)
    raise SystemExit("i>j accepted")
except ContractError:
    check("i>j rejected", True)

# --- log additivity on a real trace ---
cfg = ModelConfig()
model = build_model(cfg, seed=3)
rng = np.random.default_rng(0)
video = rng.random((cfg.frames, cfg.channels, cfg.height, cfg.width))
_, trace = model.forward(video, collect_trace=True)
rec = an.transmission_record(trace, 1, 5, 2)
i, j, k = 3, 40, 101
lhs = np.log(rec.value(i, k))
rhs = np.log(rec.value(i, j)) + np.log(rec.value(j, k))
check("log additivity 1e-12", abs(lhs - rhs) < 1e-12)
check("record diag exactly 1", rec.value(77, 77) == 1.0)
vals = np.exp(rec.log_values[np.triu_indices(rec.log_values.shape[0])])
check("all values in (0,1]", np.all(vals > 0) and np.all(vals <= 1.0))

# --- decay curve ---
for ch in range(0, cfg.d_inner, 17):
    curve = an.decay_curve(trace, 2, ch)
    check(f"ch{ch} starts at 1", curve[0, 1] == 1.0)
    check(f"ch{ch} monotone", np.all(np.diff(curve[:, 1]) <= 0))
try:
    an.decay_curve(trace, 99, 0)
    raise SystemExit("bad layer accepted")
except ContractError:
    check("layer range checked", True)
try:
    an.decay_curve(None, 0, 0)
    raise SystemExit("no trace accepted")
except ContractError:
    check("missing trace rejected", True)

# --- path lengths ---
pcfg = ModelConfig(frames=4, height=20, width=20, patch_h=4, patch_w=4, use_ifg=False)
check("N=25 grid", pcfg.tokens_per_frame == 25)
check("promptless = (j-i)*N", an.path_length(pcfg, 1, 4, with_ifs=False) == 3 * 25)
with_p = an.path_length(pcfg, 1, 4, with_ifs=True)
check("with prompts <= 2N+2", with_p <= 2 * 25 + 2)
check("with prompts shorter", with_p < 75)
check("i=j -> 0", an.path_length(pcfg, 2, 2, with_ifs=True) == 0)
try:
    an.path_length(pcfg, 3, 1, with_ifs=False)
    raise SystemExit("i>j accepted")
except ContractError:
    check("path i>j rejected", True)
try:
    an.path_length(pcfg, 0, 2, with_ifs=False)
    raise SystemExit("frame 0 accepted")
except ContractError:
    check("1-indexed frames enforced", True)

# slope exactly N promptless, bound for all strategies
for T in (4, 8, 16):
    c = ModelConfig(frames=T, use_ifg=False)
    N = c.tokens_per_frame
    hops = [an.path_length(c, i, i + 1, with_ifs=False) for i in range(1, T)]
    check(f"T={T} slope N", all(h == N for h in hops))
    worst = max(an.path_length(c, i, j, with_ifs=True)
                for i in range(1, T + 1) for j in range(i, T + 1))
    check(f"T={T} worst with-IFS {worst} <= 2N+2", worst <= 2 * N + 2)
for strat in ("last_forward", "middle", "bidirection", "bi_independent"):
    c = ModelConfig(strategy=strat, use_ifg=False)
    N = c.tokens_per_frame
    worst = max(an.path_length(c, i, j, with_ifs=True)
                for i in range(1, c.frames + 1) for j in range(i, c.frames + 1))
    check(f"{strat} bound", worst <= 2 * N + 2)

# --- update gates ---
rows = an.update_gate_rows(trace, 0)
check("T*N rows", len(rows) == cfg.frames * cfg.tokens_per_frame)
by_frame = {}
for f, r, c, val in rows:
    by_frame.setdefault(f, []).append(val)
    check_once = True
check("per-frame max is 1", all(abs(max(vs) - 1.0) < 1e-15 for vs in by_frame.values()))
check("values in [0,1]", all(0 <= v <= 1 for _, _, _, v in rows))
# constant gate field -> all ones after per-frame normalization
from sspvideo.model import ModelTrace, LayerTrace
from sspvideo.ssm import BlockTrace
S0 = 1 + cfg.frames * cfg.tokens_per_frame
const_trace = ModelTrace(layers=[LayerTrace(
    block=BlockTrace(delta_fwd=np.ones((S0, cfg.d_inner)),
                     delta_bwd=np.ones((S0, cfg.d_inner)),
                     b_bar_fwd=np.full((S0, cfg.d_inner, cfg.d_state), 0.37),
                     a_log_fwd=np.zeros((cfg.d_inner, cfg.d_state))),
    frames=cfg.frames, tokens_per_frame=cfg.tokens_per_frame, had_slots=False)])
crows = an.update_gate_rows(const_trace, 0)
check("constant field -> all 1", all(v == 1.0 for _, _, _, v in crows))
# prompted vs unprompted traces differ somewhere
cfg_off = ModelConfig(use_ifg=False, use_ifs=False)
model_off = build_model(cfg_off, seed=3)
sd = model.state_dict()
model_off.load_state_dict({k: v for k, v in sd.items()
                           if not (k.startswith("ifg.") or k.startswith("ifs."))})
_, tr_off = model_off.forward(video, collect_trace=True)
r_on = np.array([v for _, _, _, v in an.update_gate_rows(trace, 2)])
r_off = np.array([v for _, _, _, v in an.update_gate_rows(tr_off, 2)])
check("prompted vs unprompted differ", np.max(np.abs(r_on - r_off)) > 0)

# --- exports ---
import tempfile, os, csv as _csv
with tempfile.TemporaryDirectory() as td:
    p1 = an.export_decay(trace, 1, 0, td)
    p2 = an.export_update_gates(trace, 0, td)
    p3 = an.export_paths(cfg, td)
    p4 = an.export_prompt_summary(trace, 1, td)
    check("decay filename", os.path.basename(p1) == "decay_layer1_ch0.csv")
    check("gates filename", os.path.basename(p2) == "gates_layer0.csv")
    check("paths filename", os.path.basename(p3) == "paths.csv")
    check("prompts filename", os.path.basename(p4) == "layer1_prompts.csv")
    with open(p2) as fh:
        rd = list(_csv.reader(fh))
    check("gates header", rd[0] == ["frame", "row", "col", "value"])
    check("gates rows", len(rd) - 1 == cfg.frames * cfg.tokens_per_frame)
    with open(p4) as fh:
        rd4 = list(_csv.reader(fh))
    check("prompts rows = T", len(rd4) - 1 == cfg.frames)
    check("prompts has w col", rd4[0][1] == "w")

print(f"\nall {ok} analysis checks passed")
