"""Command-line interface.

Exit codes: 0 success, 2 validation/config/I-O error, 3 numerical
divergence, 4 model/data incompatibility.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import RunConfig, load_config
from .dataset import (
    ChannelInfo,
    ChannelKind,
    Event,
    Recording,
    SynthSpec,
    load_recording,
    save_recording,
    synthesize_recording,
)
from .errors import MibciError, ValidationError
from .ica import fast_ica
from .pipeline import (
    DispatchPipeline,
    EvaluationReport,
    bandpass_recording,
    check_compatible,
    evaluate_dispatch,
    held_out,
    prepare_subject,
    train_gate,
    train_mi,
)
from .plots import ica_timecourse_rows, pca_rows, svg_scatter, write_pca_csv, write_rows_csv

KIND_TITLES = {"logreg": "LogReg", "lda": "LDA", "gnb": "NB", "knn": "kNN", "svm": "SVM", "ensemble": "Ensemble"}


def _write_json(path: Path, obj: object) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    update = {}
    if getattr(args, "seed", None) is not None:
        update["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        update["output_dir"] = str(args.out)
    return cfg.model_copy(update=update) if update else cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    return out if out.is_absolute() else Path.cwd() / out


def render_table(summary: dict, kinds: Sequence[str]) -> str:
    """Accuracy table: one row per task, one column per classifier kind."""
    headers = ["Task"] + [KIND_TITLES[k] for k in kinds]
    rows = [[task] + [f"{summary[task][k]:.2f}%" if k in summary[task] else "-" for k in kinds] for task in summary]
    widths = [max(len(r[i]) for r in [headers, *rows]) for i in range(len(headers))]
    fmt = lambda r: " | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(headers), sep, *map(fmt, rows)])


# --------------------------------------------------------------------------- commands


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec.from_json(args.spec)
    seed = 0 if args.seed is None else args.seed
    rec = synthesize_recording(spec, seed)
    name = args.name or spec.name
    header = save_recording(rec, Path(args.out) / f"{name}.json")
    print(f"wrote {header} ({rec.n_samples} samples, {len(rec.channels)} channels, {len(rec.events)} events, seed {seed})")
    return 0


def cmd_convert(args: argparse.Namespace) -> int:
    """Canonical files from an ``.npz`` export of a native recording.

    Expected arrays: ``samples`` [n_samples, n_channels], ``fs``,
    ``channel_names``, ``channel_kinds`` ("EEG"/"EOG"), ``event_onsets``,
    ``event_labels`` (0 = left, 1 = right).
    """
    try:
        z = np.load(args.npz, allow_pickle=False)
        channels = tuple(
            ChannelInfo(str(n), ChannelKind(str(k)), i) for i, (n, k) in enumerate(zip(z["channel_names"], z["channel_kinds"]))
        )
        events = tuple(Event(int(o), int(lab)) for o, lab in zip(z["event_onsets"], z["event_labels"]))
        rec = Recording(float(z["fs"]), channels, z["samples"], events, name=args.name or Path(args.npz).stem)
    except KeyError as exc:
        raise ValidationError(f"{args.npz}: missing array {exc}") from None
    header = save_recording(rec, Path(args.out) / f"{rec.name}.json")
    print(f"wrote {header}")
    return 0


def _subject_sets(cfg: RunConfig):
    return {s.id: prepare_subject(cfg, s.id) for s in cfg.subjects}


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if not cfg.data_path.is_dir():
        raise ValidationError(f"data directory {cfg.data_path} does not exist")
    out = _out_dir(cfg)
    sets = _subject_sets(cfg)
    kinds = list(cfg.classifiers.evaluate)
    summary: dict[str, dict[str, float]] = {}
    reports: dict[str, EvaluationReport] = {}

    mi_bundles = {}
    for pos, sub in enumerate(cfg.subjects, start=1):
        row = summary.setdefault(f"MI-sub {pos}", {})
        for kind in dict.fromkeys([*kinds, sub.mi_classifier]):
            bundle, rep = train_mi(sets[sub.id], cfg, kind=kind)
            reports[f"mi_subject{sub.id}_{kind}"] = rep
            row[kind] = rep.accuracy["test"]
            if kind == sub.mi_classifier:
                mi_bundles[sub.id] = bundle

    s1, s2 = (sets[s.id] for s in cfg.subjects)
    gate = None
    row = summary.setdefault("X-sub", {})
    for kind in dict.fromkeys([*kinds, cfg.classifiers.gate]):
        g, rep = train_gate(s1, s2, cfg, kind=kind)
        reports[f"cross_subject_{kind}"] = rep
        row[kind] = rep.accuracy["test_sectioned"]
        if kind == cfg.classifiers.gate:
            gate = g

    pipeline = DispatchPipeline(gate, mi_bundles, tuple(s1.channel_names), s1.fs)
    _write_json(out / "models" / "pipeline.json", pipeline.to_dict())
    _write_json(out / "models" / "gate.json", gate.to_dict())
    for sid, b in mi_bundles.items():
        _write_json(out / "models" / f"mi_subject{sid}.json", b.to_dict())
    for name, rep in reports.items():
        (out / "reports").mkdir(parents=True, exist_ok=True)
        (out / "reports" / f"{name}.json").write_text(rep.to_json())
    _write_json(
        out / "reports" / "summary.json",
        {"accuracy_pct": summary, "config_fingerprint": cfg.fingerprint(), "seed": cfg.seed},
    )

    if args.table:
        print(render_table(summary, kinds))
    else:
        print(f"trained {len(reports)} models; reports in {out / 'reports'}")
    return 0


def load_pipeline(models_dir: str | Path) -> DispatchPipeline:
    path = Path(models_dir) / "pipeline.json"
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"{path} not found; run 'train' first") from None
    return DispatchPipeline.from_dict(d)


def cmd_dispatch_sim(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    pipeline = load_pipeline(args.models)
    check_compatible(pipeline, cfg)
    # reproduce the training partition so the evaluated trials were never trained on
    meta = pipeline.gate.metadata
    split_cfg = cfg.model_copy(update={"seed": meta["seed"], "train_fraction": meta["train_fraction"]})
    sid0, sid1 = pipeline.gate.subject_ids
    test1 = held_out(prepare_subject(cfg, sid0), split_cfg)
    test2 = held_out(prepare_subject(cfg, sid1), split_cfg)
    report = evaluate_dispatch(pipeline, test1, test2, seed=cfg.seed, config_fingerprint=cfg.fingerprint())
    out = _out_dir(cfg)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    (out / "reports" / "dispatch.json").write_text(report.to_json())
    acc = report.accuracy
    print(
        f"gate routing {acc['gate_routing']:.2f}%  end-to-end MI {acc['end_to_end_mi']:.2f}%  "
        f"oracle-gate MI {acc['oracle_gate_mi']:.2f}%"
    )
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    out = _out_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    sid = args.subject if args.subject is not None else cfg.subjects[0].id

    if args.kind == "features":
        ts = prepare_subject(cfg, sid)
        fm = cfg.make_extractor().fit(ts).transform(ts)
        rows = pca_rows(fm)
        csv_path = out / f"features_subject{sid}.csv"
        write_pca_csv(rows, csv_path)
        print(f"wrote {csv_path}")
        if args.svg:
            svg_path = out / f"features_subject{sid}.svg"
            svg_path.write_text(svg_scatter(rows, title=f"subject {sid} features (PCA)"))
            print(f"wrote {svg_path}")
        return 0

    rec = bandpass_recording(load_recording(cfg.data_path / cfg.subject(sid).recordings[0]), cfg)
    eeg = rec.samples[:, rec.indices_of(ChannelKind.EEG)]
    ic = cfg.preprocessing.ica
    model = fast_ica(eeg, ic.n_components, seed=cfg.seed, tol=ic.tol, max_iter=ic.max_iter)
    header, rows = ica_timecourse_rows(model, rec, args.start_s, args.duration_s)
    csv_path = out / f"ica_subject{sid}.csv"
    write_rows_csv(header, rows, csv_path)
    print(f"wrote {csv_path}")
    return 0


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mibci", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic recording from a JSON spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--name")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("convert", help="convert an .npz export into the canonical recording format")
    p.add_argument("--npz", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train MI classifiers, the gate, and write models + reports")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--table", action="store_true", help="print the accuracy table")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dispatch-sim", help="evaluate gated dispatch on held-out trials")
    p.add_argument("--config", required=True)
    p.add_argument("--models", required=True, help="directory containing pipeline.json")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dispatch_sim)

    p = sub.add_parser("plot", help="emit CSV/SVG data for feature-space or ICA plots")
    p.add_argument("kind", choices=["features", "ica"])
    p.add_argument("--config", required=True)
    p.add_argument("--subject", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--svg", action="store_true", help="also write an SVG scatter (features only)")
    p.add_argument("--start-s", type=float, default=0.0)
    p.add_argument("--duration-s", type=float, default=30.0)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MibciError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
