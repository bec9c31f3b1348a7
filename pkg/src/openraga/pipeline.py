"""Pipeline orchestration.

Runs the stage chain features -> classifier -> ood -> ncd -> clustering ->
metrics against one output directory, where every stage reads its inputs
from the artifacts of earlier stages. A stage can therefore be skipped
when its artifacts already exist on disk. Reports are JSON documents with
stable key order; everything except the "timing" block is byte-reproducible
for a fixed config and seed.
"""

from __future__ import annotations

import json
import hashlib
import shutil
import time
from pathlib import Path

import numpy as np

from . import classifier as clf
from . import clustering as clu
from . import features as feat
from . import metrics as met
from . import ncd
from . import ood
from . import storage
from .config import ExperimentConfig, loss_mask_flags, mi_base_value
from .errors import ConfigError, InputError
from .ncd import NcdConfig

VARIANTS = ("baseline", "proposed")


def _jsonify(value):
    if isinstance(value, dict):
        return {str(k): _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonify(value.tolist())
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def canonical_json(doc: dict) -> str:
    return json.dumps(_jsonify(doc), sort_keys=True, separators=(",", ":"))


def report_digest(report: dict) -> str:
    """Digest of the report with the timing block (and any previously
    computed digest) removed."""
    stripped = {k: v for k, v in report.items() if k not in ("timing", "report_digest")}
    return hashlib.sha256(canonical_json(stripped).encode()).hexdigest()


def write_report(path, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonify(report), fh, sort_keys=True, indent=2)
        fh.write("\n")


class PipelineRun:
    """One pipeline execution rooted at an output directory."""

    def __init__(self, cfg: ExperimentConfig, skip: tuple = ()):
        self.cfg = cfg
        for stage in skip:
            if stage not in ("",) and stage not in self._stage_order():
                raise ConfigError(f"stage-skip: unknown stage {stage!r}")
        self.skip = tuple(s for s in skip if s)
        self.out = Path(cfg.pipeline.out)
        self.report: dict = {
            "config": cfg.echo(),
            "stages": {},
            "confusion": {},
            "loss_logs": {},
            "artifacts": {},
            "timing": {},
        }
        self._split: feat.DatasetSplit | None = None
        self._model: clf.RagaClassifier | None = None

    @staticmethod
    def _stage_order():
        return ("features", "classifier", "ood", "ncd", "clustering", "metrics")

    def _should_run(self, stage: str) -> bool:
        return stage in self.cfg.pipeline.stages and stage not in self.skip

    def _record(self, relpath: str) -> None:
        self.report["artifacts"][relpath] = storage.file_digest(self.out / relpath)

    def run(self) -> dict:
        self.out.mkdir(parents=True, exist_ok=True)
        for stage in self._stage_order():
            if not self._should_run(stage):
                continue
            t0 = time.perf_counter()
            getattr(self, f"_stage_{stage}")()
            self.report["timing"][stage] = time.perf_counter() - t0
        self.report["report_digest"] = report_digest(self.report)
        write_report(self.out / "report.json", self.report)
        if self.cfg.pipeline.figures:
            from . import plots
            plots.render_run_figures(self.out, self.report)
        return self.report

    # -- data -------------------------------------------------------------

    def _stage_features(self) -> None:
        d = self.cfg.data
        data_dir = self.out / "data"
        data_dir.mkdir(parents=True, exist_ok=True)
        if d.mode == "synthetic":
            split = self._synthesize()
        else:
            split = self._load_file_mode()
        self._split = split
        labeled = [split.clip(i) for i in (*split.train_ids, *split.val_ids, *split.test_ids)]
        labeled.sort(key=lambda c: c.clip_id)
        unlabeled = split.unlabeled_clips
        storage.write_chroma_dataset(data_dir / "labeled.onrc", labeled)
        storage.write_chroma_dataset(data_dir / "unlabeled.onrc", unlabeled, hide_labels=True)
        storage.write_label_csv(data_dir / "labels.csv", sorted(split.clips, key=lambda c: c.clip_id),
                                split.class_names)
        roles = {}
        for ids, role in ((split.train_ids, "train"), (split.val_ids, "val"),
                          (split.test_ids, "test"), (split.unlabeled_ids, "unlabeled")):
            for cid in ids:
                roles[cid] = role
        storage.write_csv(data_dir / "split.csv", ["clip_id", "partition"],
                          sorted(roles.items()))
        for rel in ("data/labeled.onrc", "data/unlabeled.onrc", "data/labels.csv", "data/split.csv"):
            self._record(rel)
        self.report["stages"]["features"] = {
            "mode": d.mode,
            "labeled_classes": list(split.labeled_classes),
            "unlabeled_classes": list(split.unlabeled_classes),
            "clips": {"train": len(split.train_ids), "val": len(split.val_ids),
                      "test": len(split.test_ids), "unlabeled": len(split.unlabeled_ids)},
        }

    def _synthesize(self) -> feat.DatasetSplit:
        d = self.cfg.data
        seed = self.cfg.pipeline.seed
        total = d.labeled_classes + d.novel_classes
        specs = feat.default_raga_specs(total, seed=seed, min_notes=d.min_notes,
                                        max_notes=d.max_notes, gain_jitter=d.gain_jitter,
                                        n_labeled=d.labeled_classes)
        clips = feat.synth_corpus(specs, d.recordings_per_class, d.clip_seconds, seed,
                                  frame_hop=d.frame_hop,
                                  clips_per_recording=d.clips_per_recording,
                                  noise=d.noise, weight_jitter=d.weight_jitter,
                                  silence_prob=d.silence_prob)
        labeled = list(range(d.labeled_classes))
        novel = list(range(d.labeled_classes, total))
        names = {s.class_id: f"synthetic-{s.class_id:02d}" for s in specs}
        return feat.split_dataset(clips, labeled, novel,
                                  (d.train_fraction, d.val_fraction, d.test_fraction),
                                  seed, class_names=names)

    def _load_file_mode(self) -> feat.DatasetSplit:
        d = self.cfg.data
        if not d.labeled_file:
            raise ConfigError("data.labeled_file is required in files mode")
        labeled_clips = storage.read_chroma_dataset(d.labeled_file, d.frame_hop)
        unlabeled_clips = (storage.read_chroma_dataset(d.unlabeled_file, d.frame_hop)
                           if d.unlabeled_file else [])
        truth = {}
        names = {}
        if d.labels_file:
            for row in storage.read_label_csv(d.labels_file):
                if row["label"] >= 0:
                    truth[row["clip_id"]] = row["label"]
                    if row.get("class_name"):
                        names[row["label"]] = row["class_name"]
        for clip in unlabeled_clips:
            clip.label = truth.get(clip.clip_id, clip.label)
        labeled_classes = sorted(set(c.label for c in labeled_clips if c.label is not None))
        unlabeled_classes = sorted(set(c.label for c in unlabeled_clips if c.label is not None))
        base = feat.split_dataset(labeled_clips, labeled_classes, [],
                                  (d.train_fraction, d.val_fraction, d.test_fraction),
                                  self.cfg.pipeline.seed, class_names=names)
        return feat.DatasetSplit(clips=labeled_clips + unlabeled_clips,
                                 labeled_classes=base.labeled_classes,
                                 unlabeled_classes=tuple(unlabeled_classes),
                                 train_ids=base.train_ids, val_ids=base.val_ids,
                                 test_ids=base.test_ids,
                                 unlabeled_ids=sorted(c.clip_id for c in unlabeled_clips),
                                 class_names=names)

    def _load_split(self) -> feat.DatasetSplit:
        if self._split is not None:
            return self._split
        data_dir = self.out / "data"
        if not (data_dir / "labeled.onrc").exists():
            raise InputError(f"missing data artifacts under {data_dir}; run the features stage")
        hop = self.cfg.data.frame_hop
        labeled = storage.read_chroma_dataset(data_dir / "labeled.onrc", hop)
        unlabeled = storage.read_chroma_dataset(data_dir / "unlabeled.onrc", hop)
        truth = {}
        names = {}
        for row in storage.read_label_csv(data_dir / "labels.csv"):
            if row["label"] >= 0:
                truth[row["clip_id"]] = row["label"]
                if row.get("class_name"):
                    names[row["label"]] = row["class_name"]
        for clip in unlabeled:
            clip.label = truth.get(clip.clip_id)
        roles: dict[str, list[int]] = {"train": [], "val": [], "test": [], "unlabeled": []}
        for row in storage.read_csv(data_dir / "split.csv"):
            roles[row["partition"]].append(int(row["clip_id"]))
        labeled_classes = tuple(sorted(set(c.label for c in labeled if c.label is not None)))
        unlabeled_classes = tuple(sorted(set(c.label for c in unlabeled if c.label is not None)))
        self._split = feat.DatasetSplit(
            clips=labeled + unlabeled, labeled_classes=labeled_classes,
            unlabeled_classes=unlabeled_classes,
            train_ids=sorted(roles["train"]), val_ids=sorted(roles["val"]),
            test_ids=sorted(roles["test"]), unlabeled_ids=sorted(roles["unlabeled"]),
            class_names=names)
        return self._split

    # -- classifier --------------------------------------------------------

    def _stage_classifier(self) -> None:
        split = self._load_split()
        c = self.cfg.classifier
        train_cfg = clf.TrainConfig(epochs=c.epochs, lr=c.lr, batch=c.batch,
                                    seed=self.cfg.pipeline.seed, embed_dim=c.embed_dim,
                                    dropout=c.dropout, momentum=c.momentum,
                                    conv_channels=c.conv_channels, kernel=c.kernel)
        model, log = clf.train_classifier(split, train_cfg)
        self._model = model
        cdir = self.out / "classifier"
        cdir.mkdir(parents=True, exist_ok=True)
        model.save(cdir / "classifier.onrk")
        storage.write_csv(cdir / "train_log.csv", ["epoch", "loss", "val_f1"],
                          [(e, f"{l:.6f}", f"{f:.6f}") for e, l, f in log])
        self._record("classifier/classifier.onrk")
        self._record("classifier/train_log.csv")
        test_clips = split.test_clips
        test_f1 = (clf.macro_f1(clf.predict_labels(model, test_clips),
                                [c2.label for c2 in test_clips]) if test_clips else None)
        self.report["stages"]["classifier"] = {
            "classes": model.n_classes,
            "embed_dim": model.embed_dim,
            "best_val_f1": max(f for _, _, f in log) if log else None,
            "test_f1": test_f1,
        }
        self.report["loss_logs"]["classifier"] = [
            {"epoch": e, "loss": l, "val_f1": f} for e, l, f in log]

    def _load_model(self) -> clf.RagaClassifier:
        if self._model is None:
            path = self.out / "classifier" / "classifier.onrk"
            if not path.exists():
                raise InputError(f"missing classifier checkpoint {path}; run the classifier stage")
            self._model = clf.RagaClassifier.load(path)
        return self._model

    # -- ood ----------------------------------------------------------------

    def _stage_ood(self) -> None:
        split = self._load_split()
        model = self._load_model()
        o = self.cfg.ood
        seed = self.cfg.pipeline.seed
        val_scores = ood.mc_scores(model, split.val_clips or split.train_clips,
                                   o.mc_passes, seed, o.aggregate)
        test_scores = ood.mc_scores(model, split.test_clips, o.mc_passes, seed,
                                    o.aggregate) if split.test_clips else []
        u_scores = (ood.mc_scores(model, split.unlabeled_clips, o.mc_passes, seed,
                                  o.aggregate) if split.unlabeled_clips else [])
        threshold = ood.calibrate_threshold(val_scores, o.percentile)
        eval_scores = test_scores + u_scores
        decisions = ood.decide(eval_scores, threshold)
        truth = [False] * len(test_scores) + [True] * len(u_scores)
        accuracy = ood.ood_accuracy(decisions, truth) if decisions else None
        odir = self.out / "ood"
        odir.mkdir(parents=True, exist_ok=True)
        storage.write_csv(odir / "scores.csv", ["clip_id", "score", "T"],
                          [(s.clip_id, f"{s.score:.10g}", s.passes)
                           for s in (*val_scores, *eval_scores)])
        storage.write_csv(odir / "decisions.csv", ["clip_id", "is_ood", "threshold"],
                          [(dcn.clip_id, int(dcn.is_ood), f"{dcn.threshold:.10g}")
                           for dcn in decisions])
        self._record("ood/scores.csv")
        self._record("ood/decisions.csv")
        self.report["stages"]["ood"] = {
            "threshold": threshold,
            "percentile": o.percentile,
            "passes": o.mc_passes,
            "accuracy": accuracy,
            "mean_id_score": float(np.mean([s.score for s in test_scores])) if test_scores else None,
            "mean_ood_score": float(np.mean([s.score for s in u_scores])) if u_scores else None,
        }

    # -- ncd -----------------------------------------------------------------

    def _ncd_config(self) -> NcdConfig:
        n = self.cfg.ncd
        flags = loss_mask_flags(n.loss)
        return NcdConfig(delta=n.delta, hard_negatives=n.hard_negatives,
                         temperature=n.temperature, beta=n.beta, gamma=n.gamma,
                         epochs=n.epochs, batch=n.batch, lr=n.lr, momentum=n.momentum,
                         seed=self.cfg.pipeline.seed, shift_seconds=n.shift_seconds,
                         gain_up=n.gain_up, gain_down=n.gain_down,
                         labeled_batch=n.labeled_batch, token_count=n.token_count,
                         heads=n.heads, blocks=n.blocks, d_z=n.d_z, ff_mult=n.ff_mult,
                         **flags)

    def _stage_ncd(self) -> None:
        split = self._load_split()
        if not split.unlabeled_ids:
            self.report["stages"]["ncd"] = {"skipped": "no novel classes"}
            return
        model = self._load_model()
        encoder, log = ncd.train_ncd(split, model, self._ncd_config())
        ndir = self.out / "ncd"
        ndir.mkdir(parents=True, exist_ok=True)
        encoder.save(ndir / "encoder.onrk")
        storage.write_csv(ndir / "loss_log.csv", ["epoch", "bce", "cl", "mse", "total"],
                          [(e, f"{b:.6f}", f"{c:.6f}", f"{m:.6f}", f"{t:.6f}")
                           for e, b, c, m, t in log])
        y_u = clf.embed_batch(model, split.unlabeled_clips)
        z_u, _ = encoder.forward_batch(y_u)
        storage.write_embeddings(ndir / "embeddings_baseline.ncde", y_u)
        storage.write_embeddings(ndir / "embeddings_proposed.ncde", z_u)
        for rel in ("ncd/encoder.onrk", "ncd/loss_log.csv",
                    "ncd/embeddings_baseline.ncde", "ncd/embeddings_proposed.ncde"):
            self._record(rel)
        self.report["stages"]["ncd"] = {
            "loss": self.cfg.ncd.loss,
            "epochs": len(log),
            "final": None if not log else {"bce": log[-1][1], "cl": log[-1][2],
                                           "mse": log[-1][3], "total": log[-1][4]},
        }
        self.report["loss_logs"]["ncd"] = [
            {"epoch": e, "bce": b, "cl": c, "mse": m, "total": t} for e, b, c, m, t in log]

    def _load_embeddings(self, variant: str) -> np.ndarray:
        path = self.out / "ncd" / f"embeddings_{variant}.ncde"
        if not path.exists():
            raise InputError(f"missing embeddings {path}; run the ncd stage")
        return storage.read_embeddings(path)

    # -- clustering -----------------------------------------------------------

    def _stage_clustering(self) -> None:
        split = self._load_split()
        if not split.unlabeled_ids:
            self.report["stages"]["clustering"] = {"skipped": "no novel classes"}
            return
        c = self.cfg.clustering
        seed = self.cfg.pipeline.seed
        k = c.kmeans_k if c.kmeans_k > 0 else max(len(split.unlabeled_classes), 1)
        cdir = self.out / "clustering"
        cdir.mkdir(parents=True, exist_ok=True)
        info: dict = {"k": k}
        clip_ids = sorted(split.unlabeled_ids)
        for variant in VARIANTS:
            z = self._load_embeddings(variant)
            for method in c.methods:
                if method == "cosine-threshold":
                    assignment = clu.cosine_threshold_clusters(z, c.cosine_threshold)
                elif method == "kmeans":
                    assignment = clu.kmeans(z, k, seed=seed, max_iters=c.max_iters,
                                            restarts=c.restarts)
                else:
                    assignment, coords = clu.reduce_then_kmeans(
                        z, c.reduce_dims, k, seed=seed, max_iters=c.max_iters,
                        restarts=c.restarts)
                    rel = f"clustering/coords_{method}_{variant}.csv"
                    storage.write_csv(self.out / rel, ["clip_id", "x", "y"],
                                      [(cid, f"{xy[0]:.8g}", f"{xy[1]:.8g}")
                                       for cid, xy in zip(clip_ids, coords)])
                    self._record(rel)
                rel = f"clustering/assignment_{method}_{variant}.csv"
                storage.write_csv(self.out / rel, ["clip_id", "cluster_id"],
                                  list(zip(clip_ids, assignment.labels.tolist())))
                self._record(rel)
                info[f"{method}/{variant}"] = {"num_clusters": assignment.num_clusters,
                                               **{key: val for key, val in assignment.params.items()
                                                  if key != "inertia_history"}}
        self.report["stages"]["clustering"] = info

    # -- metrics ----------------------------------------------------------------

    def _stage_metrics(self) -> None:
        split = self._load_split()
        if not split.unlabeled_ids:
            self.report["stages"]["metrics"] = {"skipped": "no novel classes"}
            return
        truth_by_id = {c.clip_id: c.label for c in split.unlabeled_clips}
        clip_ids = sorted(split.unlabeled_ids)
        if any(truth_by_id.get(cid) is None for cid in clip_ids):
            self.report["stages"]["metrics"] = {"skipped": "ground truth unavailable"}
            return
        truth = [truth_by_id[cid] for cid in clip_ids]
        base = mi_base_value(self.cfg.metrics)
        docs: dict = {}
        for method in self.cfg.clustering.methods:
            for variant in VARIANTS:
                rel = f"clustering/assignment_{method}_{variant}.csv"
                path = self.out / rel
                if not path.exists():
                    raise InputError(f"missing assignment {path}; run the clustering stage")
                rows = storage.read_csv(path)
                pred = [int(r["cluster_id"]) for r in rows]
                if method == "reduce-kmeans":
                    coord_rows = storage.read_csv(self.out / f"clustering/coords_{method}_{variant}.csv")
                    points = np.array([[float(r["x"]), float(r["y"])] for r in coord_rows])
                else:
                    points = self._load_embeddings(variant)
                doc = met.metrics_report(points, pred, truth,
                                         n_train_classes=len(split.labeled_classes),
                                         mi_base=base)
                docs.setdefault(method, {})[variant] = doc
                counts, t_vals, p_vals = met.contingency_table(truth, pred)
                self.report["confusion"][f"{method}/{variant}"] = {
                    "table": counts.tolist(),
                    "true_labels": t_vals.tolist(),
                    "pred_clusters": p_vals.tolist(),
                }
        self.report["stages"]["metrics"] = docs


def run_pipeline(cfg: ExperimentConfig, skip: tuple = ()) -> dict:
    """Execute the configured stages and write report.json in the out dir."""
    return PipelineRun(cfg, skip=skip).run()


def _copy_stage_artifacts(src: Path, dst: Path, subdirs: tuple) -> None:
    for sub in subdirs:
        if (src / sub).exists():
            shutil.copytree(src / sub, dst / sub, dirs_exist_ok=True)


def run_ablation(cfg: ExperimentConfig) -> dict:
    """Train the encoder under the four loss masks and compare k-means
    clustering metrics (one column per mask)."""
    import dataclasses

    base_out = Path(cfg.pipeline.out)
    base_cfg = dataclasses.replace(cfg)
    base_cfg.pipeline = dataclasses.replace(cfg.pipeline, out=str(base_out / "base"),
                                            stages=("features", "classifier", "ood"),
                                            figures=False)
    run_pipeline(base_cfg)

    masks = ("cl", "bce", "bce+cl", "full")
    reports = {}
    table: dict = {}
    for mask in masks:
        mask_dir = base_out / f"loss_{mask.replace('+', '_')}"
        mask_dir.mkdir(parents=True, exist_ok=True)
        _copy_stage_artifacts(base_out / "base", mask_dir, ("data", "classifier", "ood"))
        mask_cfg = dataclasses.replace(cfg)
        mask_cfg.pipeline = dataclasses.replace(cfg.pipeline, out=str(mask_dir),
                                                stages=("ncd", "clustering", "metrics"),
                                                figures=cfg.pipeline.figures)
        mask_cfg.ncd = dataclasses.replace(cfg.ncd, loss=mask)
        mask_cfg.clustering = dataclasses.replace(cfg.clustering, methods=("kmeans",))
        reports[mask] = run_pipeline(mask_cfg)
        table[mask] = reports[mask]["stages"]["metrics"]["kmeans"]["proposed"]

    summary = {
        "config": cfg.echo(),
        "masks": list(masks),
        "table": table,
        "report_digests": {m: reports[m]["report_digest"] for m in masks},
    }
    write_report(base_out / "ablation_report.json", summary)
    rows = []
    for metric in ("ss", "ari", "mi", "acc_overall"):
        rows.append([metric] + [("" if table[m].get(metric) is None
                                 else f"{table[m][metric]:.6f}") for m in masks])
    storage.write_csv(base_out / "ablation_table.csv", ["metric", *masks], rows)
    if cfg.pipeline.figures:
        from . import plots
        plots.render_ablation_figure(base_out, table)
    return summary


def run_openness_study(cfg: ExperimentConfig, test_class_counts: list[int]) -> dict:
    """Re-run the pipeline while varying the novel-class count; reports are
    ordered by openness ascending."""
    import dataclasses

    base_out = Path(cfg.pipeline.out)
    counts = sorted(set(int(c) for c in test_class_counts))
    if any(c < 0 for c in counts):
        raise ConfigError(f"test class counts must be nonnegative, got {counts}")
    entries = []
    for count in counts:
        sub = base_out / f"openness_{count:02d}"
        sub_cfg = dataclasses.replace(cfg)
        sub_cfg.pipeline = dataclasses.replace(cfg.pipeline, out=str(sub))
        sub_cfg.data = dataclasses.replace(cfg.data, novel_classes=count)
        report = run_pipeline(sub_cfg)
        o_val = met.openness(cfg.data.labeled_classes, count)
        entry = {"count": count, "openness": o_val,
                 "report_digest": report["report_digest"],
                 "metrics": report["stages"].get("metrics", {})}
        entries.append(entry)
    entries.sort(key=lambda e: e["openness"])
    summary = {"config": cfg.echo(),
               "labeled_classes": cfg.data.labeled_classes,
               "runs": entries}
    write_report(base_out / "openness_report.json", summary)
    if cfg.pipeline.figures:
        from . import plots
        plots.render_openness_figure(base_out, entries)
    return summary
