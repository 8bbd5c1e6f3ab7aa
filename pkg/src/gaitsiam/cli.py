"""Command line entry point: ``gaitsiam <command> [--config FILE] [--out DIR] ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .config import ConfigError, dump_config, load_config
from .data import CohortConfig, cohort_task, make_cohort, owner_task
from .fusion import FeedbackLoop, FeedbackCounter, run_sprt
from .metric import epochs_to_reach, evaluate_pairs, train, transfer_init
from .metric.train import TrainConfig
from .nn import DivergenceError, build_model, format_report, parameter_report, save_checkpoint
from .nn.checkpoint import CheckpointError
from .threat import AttackScenario, active_attack, genuine_acceptance, passive_attack

log = logging.getLogger("gaitsiam")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_bytes(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def cmd_synth(cfg, args, out: Path):
    manifest = pl.write_dataset(cfg, out)
    log.info("wrote %d subjects to %s", len(manifest["subjects"]), out)
    return manifest


def _train_owner(cfg, cohort, out: Path, model=None, name="history.jsonl"):
    task = pl.build_task(cfg, cohort)
    model = model or pl.new_model(cfg)
    with (out / name).open("w") as fh:
        _, history = train(model, task.buffer, task.bank, pl.train_config(cfg), log=fh)
    return model, history


def cmd_train(cfg, args, out: Path):
    cohort = pl.load_cohort(cfg)
    model, history = _train_owner(cfg, cohort, out)
    (out / "model.gfck").write_bytes(save_checkpoint(model.trunk, model.head))
    final = history[-1]["loss"] if history else None
    log.info("trained %d epochs, final loss %s", len(history), final)
    return {"epochs": len(history), "final_loss": final}


def cmd_eval(cfg, args, out: Path):
    if not args.checkpoint:
        raise UsageError("eval needs --checkpoint")
    model = pl.model_from_checkpoint(_read_bytes(args.checkpoint), cfg)
    if _structure(model.trunk.specs) != _structure(build_model(cfg.model.arch).specs):
        raise CheckpointError(f"checkpoint does not hold a {cfg.model.arch} trunk")
    cohort = pl.load_cohort(cfg)
    report = evaluate_pairs(model, pl.owner_held_out_pairs(cfg, cohort))
    _write_json(out / "eval.json", report.to_dict())
    log.info("mAP %.4f  EER %.4f", report.mAP, report.eer)
    return report.to_dict()


def _structure(specs):
    # trainable flags differ between fine-tuned and fresh models; layout must not
    return [replace(s, trainable=True) for s in specs]


def _source_checkpoint(cfg, out: Path):
    """Checkpoint path from the config, or a source model trained on a separate cohort."""
    if cfg.transfer.source_checkpoint:
        return _read_bytes(cfg.transfer.source_checkpoint)
    t = cfg.transfer
    ccfg = pl.cohort_config(cfg, n_subjects=t.source_subjects, seed=cfg.dataset.seed + 1000)
    source = make_cohort(ccfg, prefix="src")
    task = cohort_task([s.train_images for s in source], t.source_R, seed=cfg.train.seed)
    model = pl.new_model(cfg)
    train(model, task.buffer, task.bank, TrainConfig(t.source_epochs, cfg.train.batch_size,
                                                      cfg.train.lr, cfg.train.seed))
    data = save_checkpoint(model.trunk)
    (out / "source.gfck").write_bytes(data)
    return data


def cmd_transfer(cfg, args, out: Path):
    source = _read_bytes(args.source) if args.source else _source_checkpoint(cfg, out)
    cohort = pl.load_cohort(cfg)
    task = pl.build_task(cfg, cohort)
    tcfg = pl.train_config(cfg)
    arms = {"transfer": cfg.transfer.k}
    if cfg.transfer.baseline:
        arms["scratch"] = 0
    summary = {}
    pairs = pl.owner_held_out_pairs(cfg, cohort)
    with (out / "history.jsonl").open("w") as fh:
        for arm, k in arms.items():
            model = transfer_init(cfg.model.arch, source, k, seed=cfg.model.seed,
                                  loss=pl.loss_config(cfg))
            _, history = train(model, task.buffer, task.bank, tcfg)
            for row in history:
                fh.write(json.dumps({"arm": arm, **row}) + "\n")
            summary[arm] = {
                "k": k,
                "epochs": len(history),
                "epochs_to_target": epochs_to_reach(history, cfg.train.target_loss or 0.05),
                "ms_per_epoch": float(np.mean([r["wall_ms"] for r in history])) if history else None,
                "mAP": evaluate_pairs(model, pairs).mAP,
            }
            if arm == "transfer":
                (out / "model.gfck").write_bytes(save_checkpoint(model.trunk, model.head))
    _write_json(out / "transfer.json", summary)
    return summary


def cmd_fuse(cfg, args, out: Path):
    if not args.checkpoint:
        raise UsageError("fuse needs --checkpoint")
    model = pl.model_from_checkpoint(_read_bytes(args.checkpoint), cfg)
    cohort = pl.load_cohort(cfg)
    owner, others = pl.split_owner(cohort, cfg.dataset.owner)
    scfg = pl.sprt_config(cfg)
    rng = np.random.default_rng(cfg.train.seed)
    records, results = [], {"genuine": [], "imposter": []}
    loop = FeedbackLoop(FeedbackCounter(cfg.fusion.T))
    for session in range(cfg.fusion.sessions):
        genuine = session % 2 == 0
        pool = owner.test_images if genuine else others[rng.integers(len(others))].test_images
        stream = pool[rng.permutation(len(pool))][:, None]
        decision = run_sprt(stream, model, owner.train_images[:, None], scfg,
                            seed=int(rng.integers(2**32)), log=records, session=session)
        results["genuine" if genuine else "imposter"].append(decision)
        loop.observe(decision, genuine)
    with (out / "decisions.jsonl").open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    g, i = results["genuine"], results["imposter"]
    summary = {
        "sessions": cfg.fusion.sessions,
        "false_reject": float(np.mean([not d.accepted for d in g])) if g else None,
        "false_accept": float(np.mean([d.accepted for d in i])) if i else None,
        "mean_n_used_genuine": float(np.mean([d.n_used for d in g])) if g else None,
        "mean_n_used": float(np.mean([d.n_used for d in g + i])) if g + i else None,
        "retrain_signals": loop.signals,
    }
    _write_json(out / "fuse.json", summary)
    return summary


def _attack_rows(cfg, model, arm, cohort, attack_db):
    owner, _ = pl.split_owner(cohort, cfg.dataset.owner)
    threshold = cfg.loss.margin / 2
    t = cfg.threat
    spec = pl.noise_spec(cfg)
    scfg = pl.stft_config(cfg)
    rows = []
    for kind in t.kinds:
        denoisers = ["none"] if kind == "passive" else t.denoisers
        for denoiser in denoisers:
            for b in t.batch_sizes:
                sc = AttackScenario(kind, denoiser, b, t.trials, t.seed, t.spatial_k)
                if kind == "passive":
                    rep = passive_attack(model, threshold, attack_db, sc, owner.train_images)
                else:
                    rep = active_attack(model, [owner.test_trace], spec, sc, owner.train_images,
                                        threshold, scfg)
                rows.append({"arm": arm, "kind": kind, "denoiser": denoiser, "batch": b,
                             "success_ratio": rep.success_ratio,
                             "pedometer_error": rep.pedometer_error,
                             "denoiser_param": rep.denoiser_param})
    acc = genuine_acceptance(model, owner.test_images, owner.train_images, threshold,
                             trials=t.trials, spatial_k=t.spatial_k, seed=t.seed)
    return rows, acc


def cmd_attack(cfg, args, out: Path):
    if not args.checkpoint:
        raise UsageError("attack needs --checkpoint")
    arms = {"undefended": args.checkpoint}
    if args.defended_checkpoint:
        arms["defended"] = args.defended_checkpoint
    cohort = pl.load_cohort(cfg)
    t = cfg.threat
    attack_db = {}
    if "passive" in t.kinds:
        acfg = pl.cohort_config(cfg, n_subjects=t.attack_subjects, duration=t.attack_duration,
                                seed=cfg.dataset.seed + 2000)
        attack_db = attack_database(acfg)
    report = {"scenarios": [], "genuine_acceptance": {}}
    for arm, path in arms.items():
        model = pl.model_from_checkpoint(_read_bytes(path), cfg)
        rows, acc = _attack_rows(cfg, model, arm, cohort, attack_db)
        report["scenarios"].extend(rows)
        report["genuine_acceptance"][arm] = acc
    _write_json(out / "attack.json", report)
    return report


def attack_database(ccfg: CohortConfig) -> dict:
    """Unseen subjects whose whole recording serves as replay material."""
    return {s.subject_id: np.concatenate([s.train_images, s.test_images])
            for s in make_cohort(ccfg, prefix="atk")}


def _time(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best * 1000.0


def cmd_profile(cfg, args, out: Path):
    ccfg = pl.cohort_config(cfg, n_subjects=2)
    cohort = make_cohort(ccfg)
    model = pl.new_model(cfg)
    images = np.concatenate([s.train_images for s in cohort])[:, None]
    # 400-pair synthetic training set: R = 200 per half
    task = owner_task(cohort[0].train_images, [cohort[1].train_images], 200, seed=cfg.train.seed)
    tcfg = TrainConfig(1, cfg.train.batch_size, cfg.train.lr, cfg.train.seed)
    start = time.perf_counter()
    train(model, task.buffer, task.bank, tcfg)
    epoch_ms = (time.perf_counter() - start) * 1000.0
    forward_ms = _time(lambda: model.trunk.predict(images[:1]))
    batches = list(range(4, 57, 4))
    inference = {str(b): _time(lambda b=b: model.trunk.predict(images[:b], batch_size=b))
                 for b in batches}
    report = {"epoch_ms": epoch_ms, "pairs_per_epoch": len(task.buffer),
              "forward_ms": forward_ms, "inference_ms": inference,
              "arch": cfg.model.arch, "params": model.trunk.param_count(),
              "param_report": parameter_report(cfg.model.arch)}
    _write_json(out / "profile.json", report)
    (out / "param_report.txt").write_text(format_report(report["param_report"]))
    return report


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "transfer": cmd_transfer,
    "fuse": cmd_fuse,
    "attack": cmd_attack,
    "profile": cmd_profile,
}


def build_parser():
    parser = _Parser(prog="gaitsiam", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", type=int, help="override every seed in the config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--quiet", action="store_true")
    parser.add_argument("--checkpoint", help="model checkpoint (eval, fuse, attack)")
    parser.add_argument("--defended-checkpoint", help="defense-trained checkpoint (attack)")
    parser.add_argument("--source", help="source checkpoint (transfer)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise UsageError("--seed must be non-negative")
            cfg = cfg.with_seed(args.seed)
    except (UsageError, ConfigError) as exc:
        print(f"gaitsiam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(dump_config(cfg))
        COMMANDS[args.command](cfg, args, out)
    except UsageError as exc:
        print(f"gaitsiam: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, CheckpointError, FloatingPointError, ValueError, OSError) as exc:
        print(f"gaitsiam: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
