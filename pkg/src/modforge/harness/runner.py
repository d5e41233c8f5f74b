"""Run an experiment config end to end: concepts, training, probing, artifacts.

Artifacts under ``output_dir``::

    seed_<s>.csv                      per-epoch metrics (train and val rows)
    seed_<s>/model.mmf                trained multi-modal model
    seed_<s>/concept_<m>_<ctx>.mmf    mono-modal concepts
    manifest.json                     config echo, per-seed results, aggregates

Seeds run one after another. Only ``timestamp`` and ``wall_time_s`` fields
vary between identical invocations.
"""
import csv
import datetime
import json
import logging
import os
import time

import numpy as np

from .. import __version__, agm, concept, data, kernels, models, probe
from ..errors import ConfigError

log = logging.getLogger(__name__)

VOLATILE_KEYS = ("timestamp", "wall_time_s")


def csv_columns(names, with_d):
    cols = ["epoch", "split", "loss", "acc"]
    for m in names:
        cols += [f"acc_{m}", f"s_{m}", f"r_{m}", f"tau_{m}", f"kappa_{m}"]
    if with_d:
        cols += [f"d_{m}" for m in names]
    return cols


def load_dataset(cfg):
    if isinstance(cfg.dataset, data.SyntheticSpec):
        return data.generate(cfg.dataset)
    if cfg.dataset.startswith("builtin:"):
        return data.generate(data.benchmark(cfg.dataset[len("builtin:"):], cfg.data_seed))
    return data.load(cfg.dataset)


def build_model(cfg, dataset, seed):
    k = cfg.model.num_classes
    if k is not None and k != dataset.num_classes:
        raise ConfigError(f"config key 'model.num_classes' is {k} but the dataset has {dataset.num_classes}")
    mods = [models.ModalitySpec(n, d, cfg.model.encoder_hidden) for n, d in dataset.dims.items()]
    fusion = models.FusionSpec(cfg.model.fusion, cfg.model.fusion_hidden_dim, cfg.model.maxout_pieces)
    return models.build(mods, fusion, dataset.num_classes, seed)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


class CsvLog:
    """Append rows to a CSV, flushing each one so partial runs stay readable."""

    def __init__(self, path, columns):
        self.columns = columns
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(columns)
        self._fh.flush()

    def __call__(self, row):
        self._writer.writerow([_fmt(row.get(c)) for c in self.columns])
        self._fh.flush()

    def close(self):
        self._fh.close()


def run_seed(cfg, dataset, seed, out_dir, probe_every=None):
    probe_every = cfg.probe_every if probe_every is None else probe_every
    t0 = time.perf_counter()
    sp = data.split(dataset, seed=seed)
    model = build_model(cfg, dataset, seed)
    settings = concept.TrainSettings(cfg.optimizer, cfg.epochs, cfg.batch_size, seed)
    concepts = concept.train_concepts(model, dataset, sp.train, settings, cfg.concept_padding)
    seed_dir = os.path.join(out_dir, f"seed_{seed}")
    os.makedirs(seed_dir, exist_ok=True)
    for c in concepts.values():
        c.save(os.path.join(seed_dir, c.filename))

    def callback(epoch, m):
        if probe_every and (epoch + 1) % probe_every == 0:
            res = probe.probe_pipeline(m, concepts, dataset, sp.probe_fit, sp.probe_eval, cfg.lam)
            return {f"d_{n}": r.d for n, r in res.items()}
        return None

    sink = CsvLog(os.path.join(out_dir, f"seed_{seed}.csv"), csv_columns(model.names, probe_every > 0))
    try:
        run = agm.train(model, dataset, sp, cfg.method, cfg.epochs, alpha=cfg.alpha, opt_cfg=cfg.optimizer,
                        seed=seed, batch_size=cfg.batch_size, epoch_callback=callback, row_sink=sink)
    finally:
        sink.close()
    model.save(os.path.join(seed_dir, "model.mmf"))
    results = probe.probe_pipeline(model, concepts, dataset, sp.probe_fit, sp.probe_eval, cfg.lam)
    final = run.final() or agm.history_row(-1, "val", model.names, agm.evaluate(model, dataset, sp.val))
    return {
        "seed": seed,
        "acc": final["acc"],
        "acc_m": {m: final[f"acc_{m}"] for m in model.names},
        "concept_acc": {m: concept.concept_eval(c, dataset, sp.val)["accuracy"] for m, c in concepts.items()},
        "concept_context": {m: c.context for m, c in concepts.items()},
        "probe": {m: r.to_dict() for m, r in results.items()},
        "d_raw": {m: r.d_raw for m, r in results.items()},
        "d": {m: r.d for m, r in results.items()},
        "split_sizes": sp.sizes(),
        "wall_time_s": time.perf_counter() - t0,
    }


def _stats(values):
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def aggregate(per_seed, names):
    agg = {"acc": _stats([r["acc"] for r in per_seed])}
    for key in ("acc_m", "d", "d_raw", "concept_acc"):
        agg[key] = {m: _stats([r[key][m] for r in per_seed]) for m in names}
    return agg


def model_shape(cfg, dataset):
    return {
        "modalities": [{"name": n, "input_dim": d, "encoder_hidden": list(cfg.model.encoder_hidden)}
                       for n, d in dataset.dims.items()],
        "num_classes": dataset.num_classes,
    }


def dataset_identity(cfg, dataset):
    src = cfg.to_dict()["dataset"]
    if isinstance(src, str) and not src.startswith("builtin:"):
        src = os.path.basename(src)
    return {"source": src, "data_seed": cfg.data_seed, "summary": dataset.summary()}


def write_manifest(path, manifest):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def run_experiment(cfg, probe_every=None):
    """Execute ``cfg`` for every seed; returns the manifest dict (also written to disk)."""
    dataset = load_dataset(cfg)
    build_model(cfg, dataset, 0)  # surfaces config/dataset mismatches before any training
    os.makedirs(cfg.output_dir, exist_ok=True)
    manifest = {
        "tool": "modforge",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.to_dict(),
        "fusion": cfg.model.fusion,
        "method": cfg.method.value,
        "alpha": cfg.effective_alpha,
        "dataset": dataset_identity(cfg, dataset),
        "model_shape": model_shape(cfg, dataset),
        "modalities": dataset.names,
        "csv_columns": csv_columns(dataset.names, bool(probe_every if probe_every is not None else cfg.probe_every)),
        "status": "running",
        "seeds": [],
    }
    if probe_every is not None:
        manifest["config"]["probe_every"] = probe_every
    path = os.path.join(cfg.output_dir, "manifest.json")
    try:
        for seed in cfg.seeds:
            log.info("seed %d: %s/%s on %s", seed, cfg.method.value, cfg.model.fusion, dataset.summary())
            manifest["seeds"].append(run_seed(cfg, dataset, seed, cfg.output_dir, probe_every))
    except BaseException as exc:
        manifest["status"] = "aborted"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        if manifest["seeds"]:
            manifest["aggregate"] = aggregate(manifest["seeds"], dataset.names)
        write_manifest(path, manifest)
        raise
    manifest["status"] = "complete"
    manifest["aggregate"] = aggregate(manifest["seeds"], dataset.names)
    manifest["wall_time_s"] = sum(r["wall_time_s"] for r in manifest["seeds"])
    write_manifest(path, manifest)
    return manifest


def strip_volatile(obj):
    """Copy of a manifest without the fields that legitimately vary between runs."""
    if isinstance(obj, dict):
        return {k: strip_volatile(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [strip_volatile(v) for v in obj]
    return obj
