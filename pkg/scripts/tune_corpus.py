"""Quick harness for calibrating the synthetic corpus against the arbiter race.

Trains a small model on a candidate corpus recipe and reports where the local
detector fires relative to true turn ends, the hybrid source split, and the
premature rate. Not part of the test suite; used to pick DialogueScript
defaults.
"""

import argparse
import time

import numpy as np

from vapturn.endpointing import SttSimConfig, VapEndpointerConfig
from vapturn.model import ModelConfig
from vapturn.noise import synthetic_noise_bank
from vapturn.simulate import (
    DialogueScript,
    generate_scripted_dialogue,
    run_session,
    session_scripts,
    summarize,
)
from vapturn.stats import SampleDist
from vapturn.training import AugmentConfig, fit


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-train", type=int, default=40)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--n-sim", type=int, default=8)
    ap.add_argument("--cont-prob", type=float, default=0.4)
    ap.add_argument("--cont-pause-mean", type=float, default=0.9)
    ap.add_argument("--cont-pause-half", type=float, default=0.2)
    ap.add_argument("--robot-gap-mean", type=float, default=1.2)
    ap.add_argument("--robot-gap-std", type=float, default=0.3)
    ap.add_argument("--cue-prob", type=float, default=0.5)
    ap.add_argument("--theta", type=float, default=0.6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    knobs = dict(
        continuation_prob=args.cont_prob,
        continuation_pause_s=SampleDist("uniform", args.cont_pause_mean, args.cont_pause_half),
        robot_reaction_s=SampleDist("normal", args.robot_gap_mean, args.robot_gap_std),
        final_cue_prob=args.cue_prob,
    )
    train_script = DialogueScript(
        n_turns=2, user_reaction_s=SampleDist("normal", 1.2, 0.4), tail_s=2.2, **knobs
    )
    t0 = time.perf_counter()
    scripts = session_scripts(args.n_train, train_script, seed=100)
    items = [(f"d{i}", generate_scripted_dialogue(s).stereo) for i, s in enumerate(scripts)]
    n_valid = max(2, args.n_train // 10)
    cfg = ModelConfig()
    bank = synthetic_noise_bank(0)
    params, history = fit(
        items[:-n_valid],
        items[-n_valid:],
        cfg,
        epochs=args.epochs,
        lr=0.3,
        lr_decay=0.02,
        augment=AugmentConfig(mode="mc"),
        bank=bank,
        seed=args.seed,
    )
    print(
        f"train {time.perf_counter()-t0:.0f}s  valid_vap "
        f"{history[0]['valid_vap']:.3f}->{history[-1]['valid_vap']:.3f}"
    )

    sim_script = DialogueScript(n_turns=5, **knobs)
    vap_cfg = VapEndpointerConfig(theta=args.theta)
    stt_cfg = SttSimConfig()
    hybrid, stt = [], []
    t0 = time.perf_counter()
    for i, s in enumerate(session_scripts(args.n_sim, sim_script, seed=777)):
        d = generate_scripted_dialogue(s)
        hybrid.extend(
            run_session(d, "hybrid", params=params, model_cfg=cfg, vap_cfg=vap_cfg, stt_cfg=stt_cfg, seed=1000 + i)
        )
        stt.extend(run_session(d, "stt", stt_cfg=stt_cfg, seed=1000 + i))
    h, s_ = summarize(hybrid), summarize(stt)
    vap_records = [r for r in hybrid if r.source == "vap"]
    lat = [r.decision_time_s - r.true_end_time_s for r in vap_records]
    print(
        f"sim {time.perf_counter()-t0:.0f}s  n={h.n_turns} fraction={h.vap_source_fraction:.2f} "
        f"premature={h.n_premature} hybrid_mean={h.robot['mean']:.2f} stt_mean={s_.robot['mean']:.2f}"
    )
    if vap_records:
        print(
            f"vap subset: n={len(vap_records)} mean={summarize(vap_records).robot['mean']:.2f} "
            f"decision latency mean={np.mean(lat):.2f} min={min(lat):.2f} max={max(lat):.2f}"
        )


if __name__ == "__main__":
    main()
