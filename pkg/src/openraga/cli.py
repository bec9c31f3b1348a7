"""Command-line interface.

Subcommands map onto pipeline stages (synth-data, extract-features,
train-classifier, detect-ood, train-ncd, cluster, evaluate), the full
pipeline (run), and the experiment harnesses (ablate, openness-study).
Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 numeric error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import features, storage
from .config import load_config
from .errors import ConfigError, InputError, NumericError
from .pipeline import run_ablation, run_openness_study, run_pipeline

STAGE_COMMANDS = {
    "synth-data": ("features",),
    "train-classifier": ("classifier",),
    "detect-ood": ("ood",),
    "train-ncd": ("ncd",),
    "cluster": ("clustering",),
    "evaluate": ("metrics",),
    "run": None,  # all configured stages
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="openraga",
        description="Open-set raga pipeline: supervised features, MC-dropout OOD "
                    "detection, novel-class discovery, clustering, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override pipeline.seed")
        p.add_argument("--out", help="override pipeline.out")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    for name, help_text in (
            ("synth-data", "generate a synthetic corpus and dataset split"),
            ("train-classifier", "train the supervised classifier"),
            ("detect-ood", "score clips with MC-dropout and threshold them"),
            ("train-ncd", "train the novel-class discovery encoder"),
            ("cluster", "cluster baseline/proposed embeddings"),
            ("evaluate", "compute clustering metrics against ground truth"),
            ("run", "run the full pipeline")):
        p = sub.add_parser(name, help=help_text)
        common(p)
        if name == "run":
            p.add_argument("--stage-skip", default="",
                           help="comma-separated stages to skip (reuse their artifacts)")

    p = sub.add_parser("extract-features", help="extract chroma clips from WAV files")
    common(p)
    p.add_argument("--manifest", required=True,
                   help="CSV with columns path,tonic_pc,label,class_name,source_id")
    p.add_argument("--window", type=int, default=4096, help="STFT window (samples)")
    p.add_argument("--hop", type=int, default=2048, help="STFT hop (samples)")

    p = sub.add_parser("ablate", help="compare the four loss masks")
    common(p)

    p = sub.add_parser("openness-study", help="vary the novel-class count")
    common(p)
    p.add_argument("--counts", default="5,12",
                   help="comma-separated novel-class counts (default 5,12)")
    return parser


def _load_cfg(args):
    overrides = {}
    if args.seed is not None:
        overrides["pipeline.seed"] = args.seed
    if args.out is not None:
        overrides["pipeline.out"] = args.out
    if args.no_figures:
        overrides["pipeline.figures"] = False
    return load_config(args.config, overrides)


def _cmd_extract_features(args) -> None:
    cfg = _load_cfg(args)
    out = Path(cfg.pipeline.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = storage.read_csv(args.manifest)
    if not rows:
        raise InputError(f"manifest {args.manifest} is empty")
    clips = []
    names = {}
    clip_id = 0
    for source_id, row in enumerate(rows):
        samples, rate = features.read_wav_mono(row["path"])
        hop_samples = args.hop
        chroma = features.extract_chroma(samples, rate, window=args.window, hop=hop_samples)
        chroma = features.tonic_normalize(chroma, int(row.get("tonic_pc", 0) or 0))
        label = int(row["label"]) if row.get("label", "") not in ("", "-1") else None
        if label is not None and row.get("class_name"):
            names[label] = row["class_name"]
        src = int(row["source_id"]) if row.get("source_id") else source_id
        hop_seconds = hop_samples / rate
        per_clip = max(1, int(round(cfg.data.clip_seconds / hop_seconds)))
        n_whole = chroma.shape[1] // per_clip
        if n_whole == 0:
            raise InputError(f"{row['path']}: shorter than one clip "
                             f"({chroma.shape[1]} frames < {per_clip})")
        for k in range(n_whole):
            clips.append(features.ChromaClip(
                clip_id=clip_id, source_id=src,
                frames=chroma[:, k * per_clip:(k + 1) * per_clip], label=label,
                frame_hop=hop_seconds, start_frame=k * per_clip))
            clip_id += 1
    storage.write_chroma_dataset(out / "dataset.onrc", clips)
    storage.write_label_csv(out / "labels.csv", clips, names)
    print(f"wrote {len(clips)} clips from {len(rows)} files to {out / 'dataset.onrc'}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract-features":
            _cmd_extract_features(args)
            return 0
        cfg = _load_cfg(args)
        if args.command in STAGE_COMMANDS:
            stages = STAGE_COMMANDS[args.command]
            if stages is not None:
                import dataclasses
                cfg.pipeline = dataclasses.replace(cfg.pipeline, stages=stages)
            skip = tuple(s.strip() for s in getattr(args, "stage_skip", "").split(",") if s.strip())
            report = run_pipeline(cfg, skip=skip)
            print(f"report: {Path(cfg.pipeline.out) / 'report.json'} "
                  f"(digest {report['report_digest'][:16]})")
        elif args.command == "ablate":
            summary = run_ablation(cfg)
            print(f"ablation table: {Path(cfg.pipeline.out) / 'ablation_table.csv'}")
            for mask, doc in summary["table"].items():
                ss = doc.get("ss")
                acc = doc.get("acc_overall")
                print(f"  {mask:7s} ss={'n/a' if ss is None else f'{ss:.4f}'} "
                      f"ari={doc.get('ari'):.4f} mi={doc.get('mi'):.4f} "
                      f"acc={'n/a' if acc is None else f'{acc:.2f}'}")
        elif args.command == "openness-study":
            counts = [int(c) for c in args.counts.split(",") if c.strip()]
            summary = run_openness_study(cfg, counts)
            print(f"openness report: {Path(cfg.pipeline.out) / 'openness_report.json'}")
            for run in summary["runs"]:
                print(f"  |C^u|={run['count']:2d} openness={run['openness']:.4f}")
        else:  # pragma: no cover - argparse enforces the choices
            raise ConfigError(f"unknown command {args.command!r}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
