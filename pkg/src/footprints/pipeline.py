"""Stage orchestration: suite -> solve -> features -> folds -> train ->
explain -> footprint -> report.

Every stage is a pure function of its input files and config, with all
randomness drawn from documented seed chains, so reruns reproduce byte
identical CSV/SVG artifacts. A manifest records input/output digests per
stage; completed stages are skipped on rerun unless --force is given.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import de as de_mod
from . import ela as ela_mod
from . import footprint as fp_mod
from . import models as models_mod
from . import shapley as shap_mod
from . import viz as viz_mod
from .config import RunConfig, validate
from .errors import ConfigurationError
from .seeding import (EXPLAIN_SALT, FEATURES_SALT, FOLDS_SALT, SOLVE_SALT,
                      TRAIN_SALT, derive_seed)
from .suite import make_instance, make_suite, write_suite_csv, SuiteConfig

logger = logging.getLogger(__name__)

STAGES = ("suite", "solve", "features", "folds", "train", "explain", "footprint", "report")

Key = tuple[int, int, int]


class StageFailure(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# parallel work items (module level for pickling)

def _solve_item(args):
    (problem_id, instance_id, dimension, cfg_fields, budget, n_runs, base_seed) = args
    instance = make_instance(problem_id, instance_id, dimension)
    config = de_mod.DeConfig(**cfg_fields)
    return de_mod.measure(instance, config, budget, n_runs, base_seed)


def _feature_item(args):
    (problem_id, instance_id, dimension, n, seed) = args
    instance = make_instance(problem_id, instance_id, dimension)
    return ela_mod.extract_all(instance, n, seed)


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------

class Pipeline:
    def __init__(self, cfg: RunConfig, out_dir, force: bool = False, threads: int = 1):
        issues = validate(cfg)
        if issues:
            raise ConfigurationError("invalid config:\n" + "\n".join(f"- {s}" for s in issues))
        self.cfg = cfg
        self.out = Path(out_dir)
        self.force = force
        self.threads = max(1, threads)
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "predictions").mkdir(exist_ok=True)
        (self.out / "portfolios").mkdir(exist_ok=True)
        (self.out / "explanations").mkdir(exist_ok=True)
        (self.out / "figures").mkdir(exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        self.manifest = self._load_manifest()

    # -- artifact paths ------------------------------------------------
    def path(self, name: str) -> Path:
        return self.out / name

    def _fold_ids(self) -> list[int]:
        return list(range(1, self.cfg.k_folds + 1))

    def _stage_outputs(self, stage: str) -> list[Path]:
        cfg = self.cfg
        if stage == "suite":
            return [self.path("suite.csv")]
        if stage == "solve":
            return [self.path("performance.csv")]
        if stage == "features":
            return [self.path("features.csv"), self.path("feature_schema.json")]
        if stage == "folds":
            return [self.path("folds.csv")]
        if stage == "train":
            outs = [self.path("metrics.csv")]
            outs += [self.path(f"predictions/fold_{f}.csv") for f in self._fold_ids()]
            outs += [
                self.path(f"portfolios/{kind}_fold_{f}.json")
                for kind in cfg.model_kinds
                for f in self._fold_ids()
            ]
            return outs
        if stage == "explain":
            return [self.path(f"explanations/fold_{f}.csv") for f in self._fold_ids()]
        if stage == "footprint":
            outs = [self.path("assignments.csv")]
            if cfg.sensitivity_p:
                outs.append(self.path("transitions.csv"))
            return outs
        if stage == "report":
            outs = [
                self.path("distribution_table.txt"),
                self.path("distribution_table.csv"),
            ]
            for f in self._fold_ids():
                outs.append(self.path(f"figures/footprint_fold_{f}.svg"))
                outs.append(self.path(f"figures/beeswarm_fold_{f}.svg"))
                outs.append(self.path(f"figures/beeswarm_fold_{f}.csv"))
            # feature distribution figures depend on the selected features;
            # recorded in the manifest when produced
            return outs
        raise StageFailure(stage, "unknown stage")

    def _stage_inputs(self, stage: str) -> list[str]:
        cfg = self.cfg
        if stage in ("suite",):
            return []
        if stage in ("solve", "features"):
            return ["suite.csv"]
        if stage == "folds":
            return ["features.csv"]
        if stage == "train":
            return ["features.csv", "performance.csv", "folds.csv"]
        if stage == "explain":
            return ["features.csv", "performance.csv", "folds.csv"] + [
                f"portfolios/{cfg.footprint_model}_fold_{f}.json"
                for f in self._fold_ids()
            ]
        if stage == "footprint":
            return ["performance.csv", "folds.csv"] + [
                f"predictions/fold_{f}.csv" for f in self._fold_ids()
            ]
        if stage == "report":
            return ["assignments.csv", "features.csv"] + [
                f"explanations/fold_{f}.csv" for f in self._fold_ids()
            ]
        raise StageFailure(stage, "unknown stage")

    # -- manifest ------------------------------------------------------
    def _load_manifest(self) -> dict:
        if self.manifest_path.exists():
            try:
                return json.loads(self.manifest_path.read_text())
            except json.JSONDecodeError:
                logger.warning("unreadable manifest; starting fresh")
        return {
            "tool_version": __version__,
            "config_digest": self.cfg.digest(),
            "master_seed": self.cfg.master_seed,
            "stages": {},
            "sanitation": {},
        }

    def _save_manifest(self) -> None:
        self.manifest["tool_version"] = __version__
        self.manifest["config_digest"] = self.cfg.digest()
        with open(self.manifest_path, "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def _stage_done(self, stage: str) -> bool:
        record = self.manifest.get("stages", {}).get(stage)
        if record is None or record.get("config_digest") != self.cfg.digest():
            return False
        outputs = record.get("outputs", {})
        for name in outputs:
            p = self.out / name
            if not p.exists() or _sha256(p) != outputs[name]:
                return False
        # all declared outputs must be covered
        declared = {str(p.relative_to(self.out)) for p in self._stage_outputs(stage)}
        return declared <= set(outputs)

    def _record_stage(self, stage: str, elapsed: float, extra_outputs=()) -> None:
        outputs = {}
        for p in list(self._stage_outputs(stage)) + list(extra_outputs):
            outputs[str(Path(p).relative_to(self.out))] = _sha256(Path(p))
        inputs = {}
        for name in self._stage_inputs(stage):
            p = self.out / name
            if p.exists():
                inputs[name] = _sha256(p)
        self.manifest.setdefault("stages", {})[stage] = {
            "config_digest": self.cfg.digest(),
            "inputs": inputs,
            "outputs": outputs,
            "elapsed_s": round(elapsed, 3),
        }
        self._save_manifest()

    def _require_inputs(self, stage: str) -> None:
        missing = [
            name for name in self._stage_inputs(stage)
            if not (self.out / name).exists()
        ]
        if missing:
            raise StageFailure(stage, f"missing inputs {missing}; run earlier stages first")

    # -- public entry ----------------------------------------------------
    def run(self, stages=None) -> None:
        wanted = list(stages) if stages else list(STAGES)
        for stage in wanted:
            if stage not in STAGES:
                raise StageFailure(stage, "unknown stage")
        for stage in STAGES:
            if stage not in wanted:
                continue
            if not self.force and self._stage_done(stage):
                logger.info("stage %s: cached, skipping", stage)
                continue
            self._require_inputs(stage)
            start = time.perf_counter()
            logger.info("stage %s: running", stage)
            extra = getattr(self, f"_run_{stage}")() or ()
            self._record_stage(stage, time.perf_counter() - start, extra)
            logger.info("stage %s: done", stage)

    # -- stages ----------------------------------------------------------
    def _suite_instances(self):
        cfg = self.cfg
        return make_suite(SuiteConfig(tuple(cfg.problems), tuple(cfg.instances), cfg.dimension))

    def _run_suite(self):
        write_suite_csv(self._suite_instances(), self.path("suite.csv"))

    def _run_solve(self):
        cfg = self.cfg
        items = []
        for ci, dcfg in enumerate(cfg.resolved_de_configs()):
            fields = {
                "config_id": dcfg.config_id, "strategy": dcfg.strategy,
                "F": dcfg.F, "Cr": dcfg.Cr, "population_size": dcfg.population_size,
            }
            for p in cfg.problems:
                for i in cfg.instances:
                    base_seed = derive_seed(cfg.master_seed, SOLVE_SALT, ci, p, i)
                    items.append((p, i, cfg.dimension, fields, cfg.budget, cfg.n_runs, base_seed))
        records = _pmap(_solve_item, items, self.threads)
        de_mod.write_performance_csv(records, self.path("performance.csv"))

    def _run_features(self):
        cfg = self.cfg
        items = [
            (p, i, cfg.dimension, cfg.sample_size,
             derive_seed(cfg.master_seed, FEATURES_SALT, p, i, cfg.dimension))
            for p in cfg.problems
            for i in cfg.instances
        ]
        vectors = _pmap(_feature_item, items, self.threads)
        ela_mod.write_features_csv(vectors, self.path("features.csv"))
        ela_mod.write_schema_json(self.path("feature_schema.json"))
        self.manifest.setdefault("sanitation", {})["features"] = int(
            sum(v.sanitized_count for v in vectors)
        )

    def _run_folds(self):
        cfg = self.cfg
        keys = [v.key for v in ela_mod.read_features_csv(self.path("features.csv"))]
        folds = models_mod.make_folds(keys, cfg.k_folds,
                                      derive_seed(cfg.master_seed, FOLDS_SALT))
        with open(self.path("folds.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["problem_id", "instance_id", "dimension", "test_fold"])
            assignment = {}
            for fold in folds:
                for key in fold.test_keys:
                    assignment[key] = fold.fold_id
            for key in sorted(assignment):
                writer.writerow([key[0], key[1], key[2], assignment[key]])

    # -- shared loading -------------------------------------------------
    def _load_matrix(self):
        vectors = ela_mod.read_features_csv(self.path("features.csv"))
        keys = [v.key for v in vectors]
        X = np.array([[v.values[name] for name in ela_mod.FEATURE_SCHEMA] for v in vectors])
        return keys, X, {v.key: v.values for v in vectors}

    def _load_targets(self) -> dict[Key, float]:
        records = de_mod.read_performance_csv(self.path("performance.csv"))
        wanted = self.cfg.footprint_config_id
        return {r.key: r.median_log_precision for r in records if r.config_id == wanted}

    def _load_fold_assignment(self) -> dict[Key, int]:
        out: dict[Key, int] = {}
        with open(self.path("folds.csv"), newline="") as fh:
            for row in csv.DictReader(fh):
                key = (int(row["problem_id"]), int(row["instance_id"]), int(row["dimension"]))
                out[key] = int(row["test_fold"])
        return out

    def _model_params(self, kind: str) -> dict:
        cfg = self.cfg
        if kind == "random_forest":
            return {"n_trees": cfg.forest_trees}
        if kind == "knn":
            return {"k_neighbors": cfg.knn_neighbors}
        return {"penalty": cfg.kernel_penalty}

    def _split(self, keys, X, y_map, fold_assignment, fold_id):
        train_idx = [i for i, k in enumerate(keys) if fold_assignment[k] != fold_id]
        test_idx = [i for i, k in enumerate(keys) if fold_assignment[k] == fold_id]
        y = np.array([y_map[k] for k in keys])
        return train_idx, test_idx, y

    def _run_train(self):
        cfg = self.cfg
        keys, X, _ = self._load_matrix()
        y_map = self._load_targets()
        if set(keys) - set(y_map):
            raise StageFailure(
                "train",
                f"performance data missing for config {cfg.footprint_config_id!r}",
            )
        fold_assignment = self._load_fold_assignment()
        schema = ela_mod.FEATURE_SCHEMA
        name_to_col = {n: i for i, n in enumerate(schema)}

        metrics_rows = []
        predictions: dict[int, list] = {f: [] for f in self._fold_ids()}
        for ki, kind in enumerate(cfg.model_kinds):
            params = self._model_params(kind)
            for fold_id in self._fold_ids():
                train_idx, test_idx, y = self._split(keys, X, y_map, fold_assignment, fold_id)
                Xtr, ytr = X[train_idx], y[train_idx]
                sel_seed = derive_seed(cfg.master_seed, TRAIN_SALT, ki, fold_id, 0)
                portfolio = shap_mod.select_portfolio(
                    Xtr, ytr, k=len(schema), feature_names=schema,
                    model_kind=kind, seed=sel_seed, model_params=params,
                    n_permutations=cfg.selection_permutations,
                )
                self._write_portfolio(kind, fold_id, portfolio)
                for size in cfg.portfolio_sizes:
                    eff = min(size, len(schema))
                    cols = [name_to_col[n] for n in portfolio.feature_names[:eff]]
                    fit_seed = derive_seed(cfg.master_seed, TRAIN_SALT, ki, fold_id, size)
                    model = models_mod.fit_model(kind, Xtr[:, cols], ytr, params, seed=fit_seed)
                    pred = model.predict(X[np.ix_(test_idx, cols)])
                    m = models_mod.evaluate_model(model, X[np.ix_(test_idx, cols)], y[test_idx])
                    metrics_rows.append((kind, fold_id, size, m.mae, m.r2))
                    for j, idx in enumerate(test_idx):
                        predictions[fold_id].append(
                            (kind, size, keys[idx], float(y[idx]), float(pred[j]))
                        )
        with open(self.path("metrics.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["model_kind", "fold_id", "portfolio_size", "mae", "r2"])
            for kind, fold_id, size, mae, r2 in metrics_rows:
                writer.writerow([kind, fold_id, size, repr(mae), repr(r2)])
        for fold_id, rows in predictions.items():
            with open(self.path(f"predictions/fold_{fold_id}.csv"), "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["model_kind", "portfolio_size", "problem_id",
                                 "instance_id", "dimension", "true", "predicted"])
                for kind, size, key, true, pred in rows:
                    writer.writerow([kind, size, key[0], key[1], key[2],
                                     repr(true), repr(pred)])

    def _write_portfolio(self, kind: str, fold_id: int, portfolio) -> None:
        payload = {
            "model_kind": kind,
            "fold_id": fold_id,
            "ranking": [
                {"name": name, "importance": imp}
                for name, imp in zip(portfolio.feature_names, portfolio.importances)
            ],
        }
        with open(self.path(f"portfolios/{kind}_fold_{fold_id}.json"), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def _read_portfolio(self, kind: str, fold_id: int) -> list[str]:
        payload = json.loads(self.path(f"portfolios/{kind}_fold_{fold_id}.json").read_text())
        return [entry["name"] for entry in payload["ranking"]]

    def _run_explain(self):
        cfg = self.cfg
        keys, X, _ = self._load_matrix()
        y_map = self._load_targets()
        fold_assignment = self._load_fold_assignment()
        schema = ela_mod.FEATURE_SCHEMA
        name_to_col = {n: i for i, n in enumerate(schema)}
        kind = cfg.footprint_model
        ki = cfg.model_kinds.index(kind)
        size = cfg.footprint_portfolio_size
        eff = min(size, len(schema))
        params = self._model_params(kind)
        for fold_id in self._fold_ids():
            ranking = self._read_portfolio(kind, fold_id)
            cols = [name_to_col[n] for n in ranking[:eff]]
            names = ranking[:eff]
            train_idx, test_idx, y = self._split(keys, X, y_map, fold_assignment, fold_id)
            fit_seed = derive_seed(cfg.master_seed, TRAIN_SALT, ki, fold_id, size)
            model = models_mod.fit_model(kind, X[np.ix_(train_idx, cols)], y[train_idx],
                                         params, seed=fit_seed)
            background = X[np.ix_(train_idx, cols)]
            test_keys = [keys[i] for i in test_idx]
            if kind == "random_forest":
                reps = shap_mod.tree_shap_batch(
                    model, X[np.ix_(test_idx, cols)], background, keys=test_keys
                )
            else:
                reps = [
                    shap_mod.sampling_shap(
                        model, X[idx, cols], background,
                        seed=derive_seed(cfg.master_seed, EXPLAIN_SALT, fold_id,
                                         keys[idx][0], keys[idx][1]),
                        key=keys[idx],
                    )
                    for idx in test_idx
                ]
            with open(self.path(f"explanations/fold_{fold_id}.csv"), "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["problem_id", "instance_id", "dimension",
                                 "base_value", "prediction"] + names)
                for rep in reps:
                    writer.writerow(
                        [rep.key[0], rep.key[1], rep.key[2],
                         repr(rep.base_value), repr(rep.prediction)]
                        + [repr(float(v)) for v in rep.phi]
                    )

    def _read_explanations(self, fold_id: int):
        path = self.path(f"explanations/fold_{fold_id}.csv")
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            names = header[5:]
            reps = []
            for row in reader:
                key = (int(row[0]), int(row[1]), int(row[2]))
                reps.append(
                    shap_mod.ShapMetaRepresentation(
                        key=key,
                        base_value=float(row[3]),
                        prediction=float(row[4]),
                        phi=np.array([float(v) for v in row[5:]]),
                    )
                )
        return names, reps

    def _fold_predictions(self, fold_id: int):
        """(key, true, predicted) for the footprint model/portfolio size."""
        cfg = self.cfg
        out = []
        with open(self.path(f"predictions/fold_{fold_id}.csv"), newline="") as fh:
            for row in csv.DictReader(fh):
                if row["model_kind"] != cfg.footprint_model:
                    continue
                if int(row["portfolio_size"]) != cfg.footprint_portfolio_size:
                    continue
                key = (int(row["problem_id"]), int(row["instance_id"]), int(row["dimension"]))
                out.append((key, float(row["true"]), float(row["predicted"])))
        return out

    def _run_footprint(self):
        cfg = self.cfg
        y_map = self._load_targets()
        fold_assignment = self._load_fold_assignment()
        all_assignments = []
        transition_reports = []
        for fold_id in self._fold_ids():
            predictions = self._fold_predictions(fold_id)
            if not predictions:
                raise StageFailure(
                    "footprint",
                    f"no predictions for model {cfg.footprint_model!r} at portfolio "
                    f"size {cfg.footprint_portfolio_size} in fold {fold_id}",
                )
            train_values = [
                v for k, v in y_map.items() if fold_assignment[k] != fold_id
            ]
            if cfg.t_mode == "explicit":
                t = float(cfg.t_value)
            else:
                t = float(np.median(train_values))
            if cfg.scale == "raw":
                t = 10.0**t if cfg.t_mode != "explicit" else t
                predictions = [(k, 10.0**tv, 10.0**pv) for k, tv, pv in predictions]
            thresholds = fp_mod.Thresholds(t=t, p=cfg.p)
            assignments = fp_mod.footprint_fold(
                predictions, thresholds, fold_id, cfg.footprint_model
            )
            all_assignments.extend(assignments)
            for p2 in cfg.sensitivity_p:
                alt = fp_mod.footprint_fold(
                    predictions, fp_mod.Thresholds(t=t, p=p2), fold_id, cfg.footprint_model
                )
                transition_reports.append(
                    (fold_id, cfg.p, p2, fp_mod.sensitivity(assignments, alt))
                )
        fp_mod.write_assignments_csv(all_assignments, self.path("assignments.csv"))
        if cfg.sensitivity_p:
            fp_mod.write_transitions_csv(transition_reports, self.path("transitions.csv"))

    def _run_report(self):
        cfg = self.cfg
        assignments = fp_mod.read_assignments_csv(self.path("assignments.csv"))
        _, _, feature_values = self._load_matrix()
        extra_outputs = []

        dist_features: list[str] | None = None
        if isinstance(cfg.distribution_features, list):
            dist_features = list(cfg.distribution_features)

        for fold_id in self._fold_ids():
            names, reps = self._read_explanations(fold_id)
            fold_assign = [a for a in assignments if a.fold_id == fold_id]
            embedding = viz_mod.embed_2d([r.key for r in reps],
                                         np.stack([r.phi for r in reps]))
            svg = viz_mod.emit_footprint_plot(
                embedding, fold_assign,
                title=f"{models_mod.MODEL_LABELS.get(cfg.footprint_model, cfg.footprint_model)}"
                      f" footprint, fold {fold_id} ({embedding.method} embedding)",
            )
            self.path(f"figures/footprint_fold_{fold_id}.svg").write_text(svg)
            top_k = min(cfg.report_top_k, len(names))
            bee_csv, bee_svg = viz_mod.emit_beeswarm_data(
                reps, names, feature_values, top_k=top_k,
                title=f"top {top_k} features, fold {fold_id}",
            )
            self.path(f"figures/beeswarm_fold_{fold_id}.csv").write_text(bee_csv)
            self.path(f"figures/beeswarm_fold_{fold_id}.svg").write_text(bee_svg)
            if dist_features is None:
                ranking = shap_mod.global_importance(reps, names)[:top_k]
                dist_features = [name for name, _ in ranking[:2]]
            for fname in dist_features:
                safe = fname.replace(".", "_")
                svg = viz_mod.emit_feature_distribution(
                    embedding, fname, feature_values,
                    title=f"{fname}, fold {fold_id}",
                )
                out_path = self.path(f"figures/feature_dist_fold_{fold_id}_{safe}.svg")
                out_path.write_text(svg)
                extra_outputs.append(out_path)

        table_txt, table_csv = viz_mod.emit_distribution_table(assignments)
        self.path("distribution_table.txt").write_text(table_txt)
        self.path("distribution_table.csv").write_text(table_csv)
        return extra_outputs
