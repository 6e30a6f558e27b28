"""Command-line surface: synth, train, track, eval, sweep, redetect-eval.

Machine outputs (traces, CSVs, blobs) go to files; progress and diagnostics
go to stderr. Exit codes: 0 success, 2 usage error, 1 runtime failure.
SPLT_THREADS caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import evaluation, kernels, skimming, synth, tracker, training
from .geometry import search_region_for
from .media import Frame, crop_resize, REGION_SIDE, TEMPLATE_SIDE
from .perusal import EmbeddingModel, make_template
from .skimming import SkimModel
from .synth import SynthConfig, GroundTruth
from .tracker import Models, PredictionTrace, TrackerConfig


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write_manifest(path, args, extra: dict | None = None) -> None:
    manifest = {
        "command": args.command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "kernel_backend": kernels.BACKEND,
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("SPLT_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


# --------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    config = SynthConfig(frame_w=args.width, frame_h=args.height,
                         num_frames=args.frames, target_side=args.target_side,
                         num_disappearances=args.disappearances,
                         disappearance_len=args.dis_len,
                         num_distractors=args.distractors,
                         noise_sigma=args.noise, seed=args.seed)
    t0 = time.perf_counter()
    if args.redetect:
        frames, gt = synth.redetection_protocol(config)
        extra = {"protocol": "redetect",
                 "teleport_frame": synth.teleport_frame(config)}
    else:
        frames, gt = synth.generate_sequence(config)
        extra = {"protocol": "walk"}
    synth.save_sequence(args.out, frames, gt, config, extra_meta=extra)
    _write_manifest(os.path.join(args.out, "manifest.json"), args,
                    {"num_frames": len(frames),
                     "gen_seconds": round(time.perf_counter() - t0, 3)})
    _log(f"wrote {len(frames)} frames to {args.out}")
    return 0


# --------------------------------------------------------------------------
# train


def _build_tracks(args):
    """Labeled patch collection: one synthetic object per track, patches
    cropped at the ground-truth box across frames."""
    tracks = {}
    sequences = []
    for i in range(args.tracks):
        cfg = SynthConfig(frame_w=160, frame_h=120, num_frames=args.patches_per_track,
                          target_side=32, num_disappearances=0,
                          num_distractors=1, noise_sigma=args.noise,
                          seed=args.seed * 1000 + i)
        frames, gt = synth.generate_sequence(cfg)
        tracks[i] = [crop_resize(f, b, TEMPLATE_SIDE)
                     for f, b in zip(frames, gt) if b is not None]
        sequences.append((frames, list(gt)))
    return tracks, sequences


def cmd_train(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    tracks, sequences = _build_tracks(args)
    rng = np.random.default_rng(args.seed)
    triplets = training.sample_triplets(tracks, args.triplets, rng)
    config = training.TrainConfig(margin=args.alpha, lr=args.lr,
                                  epochs=args.epochs, batch=args.batch,
                                  embedding_dim=args.dim, seed=args.seed)
    t0 = time.perf_counter()
    result = training.train_embedding(config, triplets)
    embed_path = os.path.join(args.out_dir, "embedding.blob")
    result.model.save(embed_path)
    with open(os.path.join(args.out_dir, "loss.csv"), "w") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(result.epoch_losses):
            fh.write("%d,%.6g\n" % (i, loss))
    extra = {"embedding_path": embed_path,
             "final_loss": result.epoch_losses[-1],
             "train_seconds": round(time.perf_counter() - t0, 3)}

    if args.cascade:
        frames0, gt0 = sequences[0][0], sequences[0][1]
        template = make_template(frames0[0], gt0[0], result.model)
        mined = training.mine_hard_examples(result.model, template, sequences,
                                            theta=args.theta)
        extra["hard_examples"] = len(mined)
        if mined:
            fine_cfg = training.TrainConfig(
                margin=args.alpha, lr=args.lr * 0.1,
                epochs=max(args.epochs // 2, 1), batch=args.batch,
                embedding_dim=args.dim, seed=args.seed + 1)
            fine = training.train_embedding(fine_cfg, mined + triplets,
                                            init_weights=result.model.weights)
            cascade_path = os.path.join(args.out_dir, "embedding_cascade.blob")
            fine.model.save(cascade_path)
            extra["cascade_path"] = cascade_path
        else:
            _log("cascade: no hard examples mined; skipping fine-tune")

    if args.skim:
        frames0, gt0 = sequences[0][0], sequences[0][1]
        template = make_template(frames0[0], gt0[0], result.model)
        positives, negatives = [], []
        for frames, gt in sequences:
            for f, b in zip(frames, gt):
                if b is None:
                    continue
                region = search_region_for(b, f.width, f.height, 4.0)
                positives.append(crop_resize(f, region.as_bbox(), REGION_SIDE))
                masked = f.pixels.copy()
                y0, y1 = int(b.y), int(b.y + b.h)
                x0, x1 = int(b.x), int(b.x + b.w)
                mean = int(round(masked[y0:y1, x0:x1].mean()))
                masked[y0:y1, x0:x1] = mean
                negatives.append(crop_resize(Frame(masked), region.as_bbox(),
                                             REGION_SIDE))
        skim_model = skimming.train_skim(SkimModel(), positives, negatives,
                                         template)
        skim_path = os.path.join(args.out_dir, "skim.blob")
        skim_model.save(skim_path)
        extra["skim_path"] = skim_path
        extra["skim_final_loss"] = skim_model.history[-1]

    _write_manifest(os.path.join(args.out_dir, "manifest.json"), args, extra)
    _log(f"trained embedding ({config.epochs} epochs) -> {embed_path}")
    return 0


# --------------------------------------------------------------------------
# track


def _default_model(dim_in: int, dim_out: int) -> EmbeddingModel:
    return EmbeddingModel.random(np.random.default_rng(0), dim_in, dim_out)


def _load_models(args) -> Models:
    if args.embedding:
        embedding = EmbeddingModel.load(args.embedding)
    else:
        from .media import DEFAULT_FEATURES
        embedding = _default_model(DEFAULT_FEATURES.dim, 64)
        _log("no --embedding given; using the built-in seed-0 projection")
    skim = SkimModel.load(args.skim) if args.skim else SkimModel()
    return Models(embedding=embedding, skim=skim)


def _trace_stats(trace) -> dict:
    global_frames = [r for r in trace.records[1:] if r.mode == "global"]
    total = sum(r.regions_perused for r in trace.records[1:])
    per_global = (sum(r.regions_perused for r in global_frames)
                  / len(global_frames)) if global_frames else float("nan")
    return {"global_frames": len(global_frames),
            "perusals_total": total,
            "perusals_per_global_frame": per_global}


def cmd_track(args) -> int:
    frames, gt, _meta = synth.load_sequence(args.seq)
    if gt[0] is None:
        raise ValueError("first ground-truth frame is absent; cannot init")
    models = _load_models(args)
    config = TrackerConfig.for_variant(args.ablate, theta=args.theta,
                                       k=args.k, search_scale=args.scale,
                                       n_max=args.n_max)
    t0 = time.perf_counter()
    trace = tracker.run_sequence(frames, gt[0], config, models)
    elapsed = time.perf_counter() - t0
    trace.save(args.out)
    stats = _trace_stats(trace)
    stats["fps"] = round(len(frames) / elapsed, 2) if elapsed > 0 else float("inf")
    _write_manifest(args.out + ".manifest.json", args, stats)
    _log(f"tracked {len(frames)} frames ({stats['fps']} fps, "
         f"{stats['global_frames']} global) -> {args.out}")
    return 0


# --------------------------------------------------------------------------
# eval


def _fmt(v) -> str:
    if v is None:
        return "nan"
    return "%.6g" % v


def cmd_eval(args) -> int:
    if not args.gt and not args.seq:
        raise ValueError("need --seq or --gt for ground truth")
    trace = PredictionTrace.load(args.trace)
    gt = GroundTruth.load(args.gt if args.gt else
                          os.path.join(args.seq, "groundtruth.txt"))
    rows = []
    curve = None
    if args.protocol in ("votlt", "both"):
        curve = evaluation.pr_curve(trace, gt, args.num_thresholds)
        f, tau, pr, re = evaluation.f_score(curve)
        rows += [("f_score", f), ("tau_star", tau),
                 ("precision", pr), ("recall", re)]
    if args.protocol in ("oxuva", "both"):
        tpr, tnr = evaluation.tpr_tnr(trace, gt, args.iou_min, args.stride)
        gm = (evaluation.maxgm(tpr, tnr)
              if tpr is not None and tnr is not None else None)
        rows += [("tpr", tpr), ("tnr", tnr), ("maxgm", gm)]

    for name, value in rows:
        print(f"{name:12s} {_fmt(value)}")
    if args.out_prefix:
        with open(args.out_prefix + "metrics.csv", "w") as fh:
            fh.write("metric,value\n")
            for name, value in rows:
                fh.write(f"{name},{_fmt(value)}\n")
        if curve is not None:
            with open(args.out_prefix + "prcurve.csv", "w") as fh:
                fh.write("tau,pr,re,f\n")
                for i in range(len(curve.thresholds)):
                    fh.write("%.6g,%.6g,%.6g,%.6g\n" % (
                        curve.thresholds[i], curve.precision[i],
                        curve.recall[i], curve.f[i]))
    return 0


def cmd_redetect_eval(args) -> int:
    if len(args.trace) != len(args.seq):
        raise ValueError("need one --trace per --seq")
    traces = [PredictionTrace.load(t) for t in args.trace]
    gts, jumps = [], []
    for seq in args.seq:
        _, gt, meta = synth.load_sequence(seq)
        gts.append(gt)
        jumps.append(int(meta["teleport_frame"])
                     if "teleport_frame" in meta else None)
    if any(j is None for j in jumps):
        jumps = None
    frames_avg, success = evaluation.redetect_metrics(traces, gts, jumps,
                                                      args.iou_min)
    print(f"frames_avg   {_fmt(frames_avg)}")
    print(f"success_pct  {_fmt(100.0 * success)}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("metric,value\n")
            fh.write(f"frames_avg,{_fmt(frames_avg)}\n")
            fh.write(f"success_pct,{_fmt(100.0 * success)}\n")
    return 0


# --------------------------------------------------------------------------
# sweep


def _sweep_point(value, args, sequences, models):
    kw = {"theta": args.theta, "k": args.k, "search_scale": args.scale,
          "n_max": args.n_max}
    if args.param == "theta":
        kw["theta"] = value
    else:
        kw["k"] = int(value)
    config = TrackerConfig.for_variant(args.ablate, **kw)
    traces = [tracker.run_sequence(frames, gt[0], config, models)
              for frames, gt in sequences]
    curve = evaluation.pr_curve_pooled(traces, [gt for _, gt in sequences])
    f, _, _, _ = evaluation.f_score(curve)
    stats = [_trace_stats(t) for t in traces]
    g = sum(s["global_frames"] for s in stats)
    pg = [s["perusals_per_global_frame"] for s in stats
          if not math.isnan(s["perusals_per_global_frame"])]
    return {"value": value, "f": f, "global_frames": g,
            "perusals_per_global_frame": float(np.mean(pg)) if pg else float("nan"),
            "perusals_total": sum(s["perusals_total"] for s in stats)}


def cmd_sweep(args) -> int:
    if args.param == "theta":
        steps = args.steps if args.steps else 11
        values = list(np.linspace(args.start, args.stop, steps))
    else:
        lo, hi = int(args.start), int(args.stop)
        values = list(range(lo, hi + 1))
        if args.steps and args.steps != len(values):
            values = sorted({int(round(v)) for v in
                             np.linspace(lo, hi, args.steps)})
    models = _load_models(args)
    sequences = []
    for seq in args.seq:
        frames, gt, _ = synth.load_sequence(seq)
        if gt[0] is None:
            raise ValueError(f"{seq}: first ground-truth frame is absent")
        sequences.append((frames, gt))

    workers = _worker_count(len(values))
    _log(f"sweep {args.param}: {len(values)} points on {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_point, v, args, sequences, models)
                   for v in values]
        rows = [f.result() for f in futures]

    header = "value,f,global_frames,perusals_per_global_frame,perusals_total"
    with open(args.out, "w") as fh:
        fh.write(header + "\n")
        for r in rows:
            fh.write("%.6g,%.6g,%d,%.6g,%d\n" % (
                r["value"], r["f"], r["global_frames"],
                r["perusals_per_global_frame"], r["perusals_total"]))
    _write_manifest(args.out + ".manifest.json", args, {"points": len(rows)})
    for r in rows:
        print("%s=%.4g f=%.4g global=%d" % (args.param, r["value"], r["f"],
                                            r["global_frames"]))
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="splt",
                                description="long-term tracking toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic sequence")
    sp.add_argument("--out", required=True)
    sp.add_argument("--frames", type=int, default=1200)
    sp.add_argument("--width", type=int, default=320)
    sp.add_argument("--height", type=int, default=240)
    sp.add_argument("--target-side", type=int, default=32)
    sp.add_argument("--disappearances", type=int, default=12)
    sp.add_argument("--dis-len", type=int, default=40)
    sp.add_argument("--distractors", type=int, default=2)
    sp.add_argument("--noise", type=float, default=2.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--redetect", action="store_true",
                    help="teleport protocol instead of a random walk")
    sp.set_defaults(func=cmd_synth)

    tp = sub.add_parser("train", help="train embedding (and optional skim) weights")
    tp.add_argument("--out-dir", required=True)
    tp.add_argument("--tracks", type=int, default=6)
    tp.add_argument("--patches-per-track", type=int, default=5)
    tp.add_argument("--triplets", type=int, default=2000)
    tp.add_argument("--epochs", type=int, default=30)
    tp.add_argument("--batch", type=int, default=64)
    tp.add_argument("--lr", type=float, default=1e-2)
    tp.add_argument("--alpha", type=float, default=0.2)
    tp.add_argument("--dim", type=int, default=64)
    tp.add_argument("--noise", type=float, default=2.0)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--theta", type=float, default=0.65)
    tp.add_argument("--cascade", action="store_true",
                    help="mine hard examples and fine-tune")
    tp.add_argument("--skim", action="store_true",
                    help="also fit the trained-mode window scorer")
    tp.set_defaults(func=cmd_train)

    kp = sub.add_parser("track", help="run the tracker over a sequence directory")
    kp.add_argument("--seq", required=True)
    kp.add_argument("--out", required=True)
    kp.add_argument("--embedding", default=None)
    kp.add_argument("--skim", default=None)
    kp.add_argument("--theta", type=float, default=0.65)
    kp.add_argument("--k", type=int, default=3)
    kp.add_argument("--scale", type=float, default=4.0)
    kp.add_argument("--n-max", type=int, default=16)
    kp.add_argument("--ablate", choices=list(tracker.VARIANTS), default="srv")
    kp.set_defaults(func=cmd_track)

    ep = sub.add_parser("eval", help="score a trace against ground truth")
    ep.add_argument("--trace", required=True)
    ep.add_argument("--seq", default=None)
    ep.add_argument("--gt", default=None)
    ep.add_argument("--protocol", choices=["votlt", "oxuva", "both"],
                    default="both")
    ep.add_argument("--iou-min", type=float, default=0.5)
    ep.add_argument("--stride", type=int, default=1)
    ep.add_argument("--num-thresholds", type=int, default=101)
    ep.add_argument("--out-prefix", default=None)
    ep.set_defaults(func=cmd_eval)

    rp = sub.add_parser("redetect-eval",
                        help="re-detection delay over teleport sequences")
    rp.add_argument("--trace", action="append", required=True)
    rp.add_argument("--seq", action="append", required=True)
    rp.add_argument("--iou-min", type=float, default=0.5)
    rp.add_argument("--out", default=None)
    rp.set_defaults(func=cmd_redetect_eval)

    wp = sub.add_parser("sweep", help="grid of track+eval cycles")
    wp.add_argument("--param", choices=["theta", "k"], required=True)
    wp.add_argument("--from", dest="start", type=float, required=True)
    wp.add_argument("--to", dest="stop", type=float, required=True)
    wp.add_argument("--steps", type=int, default=None)
    wp.add_argument("--seq", action="append", required=True)
    wp.add_argument("--out", required=True)
    wp.add_argument("--embedding", default=None)
    wp.add_argument("--skim", default=None)
    wp.add_argument("--theta", type=float, default=0.65)
    wp.add_argument("--k", type=int, default=3)
    wp.add_argument("--scale", type=float, default=4.0)
    wp.add_argument("--n-max", type=int, default=16)
    wp.add_argument("--ablate", choices=list(tracker.VARIANTS), default="srv")
    wp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:
        _log(f"error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
