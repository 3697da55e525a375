"""Command-line entry point: ``csicrypt <subcommand> --config cfg.yaml``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .crypto import hash_key
from .errors import CsiCryptError
from .harness.attacks import AttackStrategy
from .harness.config import ExperimentConfig, load_config
from .harness.report import write_report
from .harness.runner import (ModelCache, SweepPoint, comm_reference, csv_text, model_configs,
                             point_world, psi_family, run_experiment)
from .harness.world import build_samples

log = logging.getLogger("csicrypt")

EXIT_OK, EXIT_POINT_ERRORS, EXIT_USAGE = 0, 1, 2


def _global_flags(default) -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--config", type=Path, default=default, help="experiment YAML")
    flags.add_argument("--seed", type=int, default=default,
                       help="global seed (overrides the config)")
    flags.add_argument("--out", type=Path, default=default,
                       help="output directory (overrides the config)")
    flags.add_argument("-v", "--verbose", action="store_true",
                       default=False if default is None else default)
    return flags


def _parser() -> argparse.ArgumentParser:
    # flags are accepted before or after the subcommand; the subcommand copy
    # must not reset values given before it
    common = _global_flags(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="csicrypt", parents=[_global_flags(None)],
                                description="Encrypted-CSI sensing and communication experiments")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common],
                       help="write encrypted CSI series and a dataset manifest")
    s.add_argument("--split", choices=("train", "test", "all"), default="test")
    sub.add_parser("optimize", parents=[common],
                   help="optimize the configured encryption family and save it")
    sub.add_parser("train-classifier", parents=[common], help="train and save the classifier")
    t = sub.add_parser("train-submodel", parents=[common], help="train and save the sub-model")
    t.add_argument("--classifier", type=Path, help="classifier checkpoint to reuse")
    e = sub.add_parser("evaluate", parents=[common], help="run the configured sweep")
    e.add_argument("--classifier", type=Path, help="classifier checkpoint to reuse")
    e.add_argument("--submodel", type=Path, help="sub-model checkpoint to reuse")
    a = sub.add_parser("attack", parents=[common], help="run eavesdropping strategies only")
    a.add_argument("--strategy", action="append", default=[],
                   help="naive | multi_antenna:N | virtual_antennas:N (repeatable)")
    a.add_argument("--classifier", type=Path, help="classifier checkpoint to reuse")
    r = sub.add_parser("report", parents=[common], help="aggregate result bundles")
    r.add_argument("bundles", nargs="+", type=Path, help="result bundle directories")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, out_dir=str(args.out) if args.out else None)


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    world = point_world(cfg, SweepPoint(0))
    psis, ids = psi_family(cfg, world)
    (out / "psi").mkdir(exist_ok=True)
    for p, pid in zip(psis, ids):
        p.save(out / "psi" / f"{pid.replace(':', '_')}.psi")
    data = build_samples(world, args.split, psis=psis, with_metrics=False, with_eve=False)
    (out / "csi").mkdir(exist_ok=True)
    rows = []
    for i in range(len(data)):
        name = f"csi/sample_{i:05d}.csv"
        t = data.schedules[i].timestamps
        x = data.encrypted[i]
        body = csv_text([{"t": t[m], "re": x[m].real, "im": x[m].imag} for m in range(x.size)],
                        ("t", "re", "im"))
        (out / name).write_text(body, encoding="utf-8")
        rows.append({"csi_file": name, "psi_id": ids[int(data.psi_index[i])],
                     "key_hex": data.keys[i].hex(), "label": int(data.labels[i])})
    (out / "dataset.csv").write_text(csv_text(rows, ("csi_file", "psi_id", "key_hex", "label")),
                                     encoding="utf-8")
    print(f"wrote {len(rows)} encrypted series to {out}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _config(args)
    if cfg.psi.kind != "optimized":
        cfg = dataclasses.replace(cfg, psi=dataclasses.replace(cfg.psi, kind="optimized"))
    out = _out(cfg)
    world = point_world(cfg, SweepPoint(0))
    comm = comm_reference(world, cfg)
    psis, ids = psi_family(cfg, world, comm)
    (out / "psi").mkdir(exist_ok=True)
    rows = []
    for p, pid in zip(psis, ids):
        fname = f"psi/{pid.replace(':', '_')}.psi"
        p.save(out / fname)
        rows.append({"psi_id": pid, "file": fname, "key_hex": hash_key(p).hex()})
    (out / "psi_family.csv").write_text(csv_text(rows, ("psi_id", "file", "key_hex")),
                                        encoding="utf-8")
    print(f"saved {len(psis)} optimized matrices to {out / 'psi'}")
    return EXIT_OK


def cmd_train_classifier(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    point = SweepPoint(0)
    world = point_world(cfg, point)
    ccfg, _, _ = model_configs(cfg, world, point)
    psis, ids = psi_family(cfg, world)
    model = ModelCache().classifier(world, ccfg, psis, ids)
    model.save(out / "classifier.mcnn")
    hist = [{"epoch": i, "loss": v} for i, v in enumerate(model.history)]
    (out / "classifier_history.csv").write_text(csv_text(hist, ("epoch", "loss")),
                                                encoding="utf-8")
    print(f"classifier saved to {out / 'classifier.mcnn'} (digest {model.param_digest()[:12]})")
    return EXIT_OK


def cmd_train_submodel(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    point = SweepPoint(0)
    world = point_world(cfg, point)
    ccfg, scfg, tcfg = model_configs(cfg, world, point)
    psis, ids = psi_family(cfg, world)
    cache = ModelCache(classifier_path=str(args.classifier) if args.classifier else None)
    classifier = cache.classifier(world, ccfg, psis, ids)
    model = cache.submodel(world, classifier, scfg, tcfg, psis, ids)
    model.save(out / "submodel.mcnn")
    if not args.classifier:
        classifier.save(out / "classifier.mcnn")
    run = next(iter(cache.train_runs.values()))
    curve = [{"epoch": i, "loss": v} for i, v in enumerate(run.loss_curve)]
    (out / "submodel_loss.csv").write_text(csv_text(curve, ("epoch", "loss")), encoding="utf-8")
    print(f"sub-model saved to {out / 'submodel.mcnn'}")
    return EXIT_OK


def _finish(bundle) -> int:
    for err in bundle.errors:
        print(f"error at {err['coords'] or err['point']}: {err['error']}", file=sys.stderr)
    print(f"results in {bundle.out_dir} ({len(bundle.rows)} rows, "
          f"{len(bundle.errors)} failed point(s))")
    return EXIT_OK if bundle.ok else EXIT_POINT_ERRORS


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    cache = ModelCache(classifier_path=str(args.classifier) if args.classifier else None,
                       submodel_path=str(args.submodel) if args.submodel else None)
    return _finish(run_experiment(cfg, cache))


def cmd_attack(args) -> int:
    cfg = _config(args)
    attacks = tuple(AttackStrategy.parse(s) for s in args.strategy) or cfg.attacks \
        or (AttackStrategy.naive(),)
    cfg = dataclasses.replace(cfg, roles=(), attacks=attacks, studies=("sensing",))
    cache = ModelCache(classifier_path=str(args.classifier) if args.classifier else None)
    return _finish(run_experiment(cfg, cache))


def cmd_report(args) -> int:
    out = args.out or Path("report")
    rep = write_report(args.bundles, out)
    sys.stdout.write(rep.summary_text())
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "optimize": cmd_optimize,
    "train-classifier": cmd_train_classifier, "train-submodel": cmd_train_submodel,
    "evaluate": cmd_evaluate, "attack": cmd_attack, "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CsiCryptError as exc:
        print(f"csicrypt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
