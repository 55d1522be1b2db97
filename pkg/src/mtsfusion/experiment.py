"""Config-driven experiment pipeline: splits, training, evaluation, feature selection, interpretability."""
from __future__ import annotations

import json
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .data import (
    Dataset,
    apply_normalizer,
    fit_normalizer,
    load_dataset,
    select_features,
    split_indices,
    window_dataset,
)
from .featsel import CibConfig, SelectionReport, cib_select, cmi_select, glasso_select, pfi_scores, vote
from .featsel.report import write_selection_matrix
from .interpret import (
    DynamaskConfig,
    SaliencyMatrix,
    dynamask_population,
    emit_heatmap,
    ham_heatmap,
    nlha_heatmap,
    tpi_scores,
)
from .metrics import EvalResult, confusion_metrics, eval_to_dict, results_table, write_table_csv
from .models import ARCHITECTURES, FUSIONS, Grids, HyperParams, TrainedModel, cv_select, lfco_fit, lflr_fit, train
from .numerics import RngStream
from .synth import SynthConfig, synth_generate

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FS_METHODS = ("CIB", "CMI", "GLASSO", "PFI")
INTERP_METHODS = ("NLHA", "HAM", "TPI", "Dynamask")
CLASSICAL_FS = ("CIB", "CMI", "GLASSO")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: {"synth": {}})
    window: int = 14
    test_fraction: float = 0.2
    n_splits: int = 3
    val_fraction: float = 0.2
    models: list[str] = field(default_factory=lambda: ["MLP", "GRU", "JHF", "FHSI", "LFCO", "LFLR"])
    features: list[str] | None = None
    hyperparams: dict = field(default_factory=dict)
    grids: dict | None = None
    cv_folds: int = 5
    feature_selection: dict = field(default_factory=dict)
    interpretability: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "run"
    threads: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known - {"schema_version"}
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **asdict(self)}

    @property
    def base_hp(self) -> HyperParams:
        return HyperParams(**self.hyperparams)

    @property
    def grid(self) -> Grids | None:
        if self.grids is None:
            return None
        g = Grids()
        return Grids(tuple(self.grids.get("lr", g.lr)), tuple(self.grids.get("dropout", g.dropout)),
                     tuple(self.grids.get("width", g.width)))

    def validate(self) -> None:
        for m in self.models:
            if m not in ARCHITECTURES and m not in FUSIONS:
                raise ConfigError(f"unknown model tag {m!r}; expected one of {ARCHITECTURES + FUSIONS}")
        if self.n_splits < 1:
            raise ConfigError("n_splits must be >= 1")
        if not 0 < self.test_fraction < 1 or not 0 < self.val_fraction < 1:
            raise ConfigError("fractions must lie in (0, 1)")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        for m in self.feature_selection.get("methods", []):
            if m not in FS_METHODS:
                raise ConfigError(f"unknown feature-selection method {m!r}")
        for m in self.interpretability.get("methods", []):
            if m not in INTERP_METHODS:
                raise ConfigError(f"unknown interpretability method {m!r}")
        if not ("synth" in self.data or {"static", "mts", "schema"} <= set(self.data)):
            raise ConfigError("data must hold either 'synth' or 'static'/'mts'/'schema' paths")
        self.base_hp  # noqa: B018  (raises on bad hyperparameters)
        if "synth" in self.data:
            SynthConfig.from_dict(self.data["synth"])


# ---------------------------------------------------------------------------


@dataclass
class SplitData:
    index: int
    train: Dataset  # normalized, full training part
    fit: Dataset  # training part minus the inner validation set
    val: Dataset
    test: Dataset


@dataclass
class SplitResult:
    index: int
    results: dict[str, EvalResult]
    models: dict[str, TrainedModel]
    fusion: dict[str, dict]
    hyperparams: dict[str, dict]


def load_data(cfg: ExperimentConfig) -> tuple[Dataset, list[str]]:
    if "synth" in cfg.data:
        scfg = SynthConfig.from_dict({"seed": cfg.seed, **cfg.data["synth"]})
        ds, relevant = synth_generate(scfg)
    else:
        ds = load_dataset(cfg.data["static"], cfg.data["mts"], cfg.data["schema"])
        relevant = []
    if cfg.features:
        ds = select_features(ds, cfg.features)
    return window_dataset(ds, cfg.window), relevant


def make_split(ds: Dataset, cfg: ExperimentConfig, s: int) -> SplitData:
    rng = RngStream(cfg.seed, (0x5B, s))
    tr_idx, te_idx = split_indices(ds.labels, cfg.test_fraction, rng.child(0))
    train_raw, test_raw = ds.subset(tr_idx), ds.subset(te_idx)
    stats = fit_normalizer(train_raw)
    train_n, test_n = apply_normalizer(stats, train_raw), apply_normalizer(stats, test_raw)
    fit_idx, val_idx = split_indices(train_n.labels, cfg.val_fraction, rng.child(1))
    return SplitData(s, train_n, train_n.subset(fit_idx), train_n.subset(val_idx), test_n)


def _choose_hp(arch: str, sd: SplitData, cfg: ExperimentConfig, workers: int) -> HyperParams:
    grid = cfg.grid
    if grid is None:
        return cfg.base_hp
    return cv_select(arch, sd.train, grid, cfg.base_hp, cfg.cv_folds,
                     seed=RngStream(cfg.seed, (0xCF, sd.index)).bits64(), window=cfg.window, workers=workers)


def _train_stream(cfg: ExperimentConfig, split: int, arch: str) -> RngStream:
    return RngStream(cfg.seed, (0x7A, split, ARCHITECTURES.index(arch)))


def run_split(sd: SplitData, cfg: ExperimentConfig, workers: int = 1) -> SplitResult:
    archs = [m for m in cfg.models if m in ARCHITECTURES]
    if any(m in FUSIONS for m in cfg.models):
        archs += [a for a in ("MLP", "GRU") if a not in archs]
    models, hps, results, fusion = {}, {}, {}, {}
    for arch in archs:
        hp = _choose_hp(arch, sd, cfg, workers)
        hps[arch] = asdict(hp)
        models[arch] = train(arch, hp, sd.fit, sd.val, _train_stream(cfg, sd.index, arch), cfg.window)
        if arch in cfg.models:
            results[arch] = confusion_metrics(models[arch].predict(sd.test), sd.test.labels)
    for tag in (m for m in cfg.models if m in FUSIONS):
        pv_m, pv_g = models["MLP"].predict(sd.val), models["GRU"].predict(sd.val)
        fuse = lfco_fit if tag == "LFCO" else lflr_fit
        fm = fuse(pv_m, pv_g, sd.val.labels)
        fusion[tag] = fm.to_dict()
        p = fm.combine(models["MLP"].predict(sd.test), models["GRU"].predict(sd.test))
        results[tag] = confusion_metrics(p, sd.test.labels)
    return SplitResult(sd.index, results, models, fusion, hps)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - rewrap with the stage tag
        raise StageError(name, exc) from exc


def train_stage(splits: list[SplitData], cfg: ExperimentConfig, threads: int = 1) -> list[SplitResult]:
    if threads > 1 and len(splits) > 1:
        with ThreadPoolExecutor(min(threads, len(splits))) as ex:
            return list(ex.map(lambda sd: run_split(sd, cfg, 1), splits))
    return [run_split(sd, cfg, threads) for sd in splits]


def metrics_document(cfg: ExperimentConfig, split_results: list[SplitResult]) -> dict:
    names = [m for m in cfg.models]
    per_model = {m: [sr.results[m] for sr in split_results] for m in names}
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "n_splits": len(split_results),
        "summary": results_table(per_model),
        "splits": [
            {"split": sr.index,
             "results": {m: eval_to_dict(sr.results[m]) for m in names},
             "hyperparams": sr.hyperparams,
             "fusion": sr.fusion}
            for sr in split_results
        ],
    }


def best_model_name(doc: dict, candidates) -> str:
    rows = [r for r in doc["summary"] if r["model"] in candidates]
    if not rows:
        raise ConfigError("no trained model qualifies for interpretability")
    # summary is rounded to 2 decimals; rank on the unrounded split values
    def mean_auc(name):
        return float(np.mean([s["results"][name]["roc_auc"] for s in doc["splits"]]))
    return max((r["model"] for r in rows), key=lambda n: (mean_auc(n), -list(candidates).index(n)))


def selection_stage(sd: SplitData, model: TrainedModel | None, cfg: ExperimentConfig) -> list[SelectionReport]:
    fs = cfg.feature_selection
    methods = fs.get("methods", [])
    seed = cfg.seed
    reports = []
    if "CIB" in methods:
        cib_cfg = CibConfig(**{"window": cfg.window, **fs.get("cib", {})})
        reports.append(cib_select(sd.train, cib_cfg, RngStream(seed, 0xC1B)))
    if "CMI" in methods:
        c = fs.get("cmi", {})
        n_sel = c.get("n_select", max(1, len(sd.train.schema.feature_names) // 2))
        reports.append(cmi_select(sd.train, n_sel, c.get("bins", 4), cfg.window))
    if "GLASSO" in methods:
        g = fs.get("glasso", {})
        _, rep = glasso_select(sd.train, g.get("lambdas"), g.get("max_iter", 20000), g.get("tol", 1e-8),
                               cfg.window, g.get("k", 5), seed)
        reports.append(rep)
    if "PFI" in methods and model is not None:
        p = fs.get("pfi", {})
        reports.append(pfi_scores(model, sd.val, p.get("repeats", 10), RngStream(seed, 0xF1),
                                  p.get("n_select"), cfg.window))
    classical = [r for r in reports if r.method in CLASSICAL_FS]
    if len(classical) >= 2:
        reports.append(vote(classical))
    return reports


def interpret_stage(sd: SplitData, models: dict[str, TrainedModel], best: str,
                    cfg: ExperimentConfig) -> list[SaliencyMatrix]:
    it = cfg.interpretability
    methods = it.get("methods", [])
    out = []
    base = best if best in ("GRU", "FHSI") else "GRU"
    hp = HyperParams(**{**asdict(cfg.base_hp), **it.get("hyperparams", {})})
    if "NLHA" in methods:
        m = models.get(f"NLHA-{base}") or train(f"NLHA-{base}", hp, sd.fit, sd.val,
                                                 RngStream(cfg.seed, (0xA1, sd.index)), cfg.window)
        out.append(nlha_heatmap(m, sd.val))
    if "HAM" in methods:
        m = models.get(f"HAM-{base}") or train(f"HAM-{base}", hp, sd.fit, sd.val,
                                                RngStream(cfg.seed, (0xA2, sd.index)), cfg.window)
        out.append(ham_heatmap(m))
    target = models[best]
    if "TPI" in methods:
        t = it.get("tpi", {})
        scores = tpi_scores(target, sd.val, t.get("sigma", 1.0), t.get("repeats", 10),
                            RngStream(cfg.seed, 0x7B1), cfg.window)
        out.append(SaliencyMatrix(("all_features",), scores[None, :], "TPI", "mean-over-samples"))
    if "Dynamask" in methods:
        d = dict(it.get("dynamask", {}))
        n = int(d.pop("n_samples", 10))
        subset = sd.val.subset(range(min(n, len(sd.val))))
        out.append(dynamask_population(target, subset, DynamaskConfig(**d), cfg.seed, cfg.window))
    return out


def _versions() -> dict:
    return {"mtsfusion": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "torch": torch.__version__}


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _model_getter(sd: SplitData, cfg: ExperimentConfig, cache: dict[str, TrainedModel]):
    """Models trained on ``sd``; missing ones are trained with the base hyperparameters."""
    def get(name: str) -> TrainedModel:
        if name not in cache:
            cache[name] = train(name, cfg.base_hp, sd.fit, sd.val, _train_stream(cfg, sd.index, name), cfg.window)
        return cache[name]
    return get


def run_experiment(cfg: ExperimentConfig, stages=("train", "select", "explain"),
                   serial: bool = True, threads: int | None = None, save_models: bool = False) -> dict | None:
    """Run the requested stages and write the report bundle to ``cfg.out``.

    Returns the metrics document, or None when the train stage was not requested.
    """
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    threads = 1 if serial else max(1, threads or cfg.threads or 1)
    manifest = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(), "root_seed": cfg.seed,
                "versions": _versions(), "serial": serial, "threads": threads, "stages_requested": list(stages),
                "stages_completed": [], "partial": True, "outputs": []}
    t0 = time.perf_counter()
    doc = None
    try:
        ds, relevant = _stage("data", load_data, cfg)
        manifest["planted_features"] = relevant
        splits = _stage("data", lambda: [make_split(ds, cfg, s) for s in range(cfg.n_splits)])
        cache: dict[str, TrainedModel] = {}
        nn_models = [m for m in cfg.models if m in ARCHITECTURES]
        if "train" in stages:
            results = _stage("train", train_stage, splits, cfg, threads)
            doc = metrics_document(cfg, results)
            _write_json(out / "metrics.json", doc)
            write_table_csv(doc["summary"], out / "metrics.csv")
            manifest["outputs"] += ["metrics.json", "metrics.csv"]
            if save_models:
                for sr in results:
                    for name, m in sr.models.items():
                        fname = f"model_{name}_split{sr.index}.json"
                        m.save(out / fname)
                        manifest["outputs"].append(fname)
            cache.update(results[0].models)
            manifest["stages_completed"].append("train")
        sd0 = splits[0]
        get_model = _model_getter(sd0, cfg, cache)

        def pick(candidates):
            if not candidates:
                return None
            return best_model_name(doc, candidates) if doc is not None else candidates[0]

        if "select" in stages and cfg.feature_selection.get("methods"):
            def select():
                name = pick(nn_models) if "PFI" in cfg.feature_selection["methods"] else None
                return selection_stage(sd0, get_model(name) if name else None, cfg)
            reports = _stage("select", select)
            write_selection_matrix(reports, ds.schema.feature_names, out / "selection_matrix.csv")
            manifest["outputs"].append("selection_matrix.csv")
            for r in reports:
                r.save(out / f"selection_{r.method}.json")
                manifest["outputs"].append(f"selection_{r.method}.json")
            manifest["stages_completed"].append("select")
        if "explain" in stages and cfg.interpretability.get("methods"):
            def explain():
                best = pick([m for m in nn_models if m != "MLP"]) or "FHSI"
                manifest["best_model"] = best
                get_model(best)
                return interpret_stage(sd0, cache, best, cfg)
            for mat in _stage("explain", explain):
                stem = f"saliency_{mat.method.lower()}"
                mat.write_csv(out / f"{stem}.csv")
                emit_heatmap(mat, out / f"{stem}.svg")
                manifest["outputs"] += [f"{stem}.csv", f"{stem}.svg"]
            manifest["stages_completed"].append("explain")
        manifest["partial"] = False
        return doc
    except StageError as exc:
        manifest["failed_stage"] = exc.stage
        manifest["error"] = str(exc)
        raise
    finally:
        manifest["runtime_seconds"] = round(time.perf_counter() - t0, 3)
        _write_json(out / "manifest.json", manifest)
