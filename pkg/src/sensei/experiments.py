"""Experiment runner: synthetic rho sweep, synthetic SenSR eps sweep, Adult.

Each restart trains, evaluates and certifies, writing

    metrics_<tag>_r<k>.json   cert_<tag>_r<k>.json   log_<tag>_r<k>.csv

into the output directory, where ``tag`` names the method and sweep value.
``aggregate.csv`` holds mean and population std per tag, recomputed from
the metrics files after they are written.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attack import AttackConfig
from .certify import empirical_dif, markov_tail_check
from .data import DataError, Dataset, flip_counterfactual, gen_synthetic, make_variations, reflect_counterfactual, split_adult
from .evaluation import MetricsReport, accuracy_parity_std, balanced_accuracy, ctf_score, prediction_consistency, tpr_gaps
from .metric import FairMetric, adult_metric
from .nn import predict, save_model
from .surface import GridSpec, emit_surface
from .trainers import ConfigError, TrainConfig, train

log = logging.getLogger(__name__)

EXPERIMENTS = ("synthetic_sweep", "synthetic_sensr_sweep", "adult")
DEFAULT_TAUS = (0.01, 0.05, 0.1, 0.5)

# aggregate column -> where it lives in a metrics JSON
ADULT_COLUMNS = {
    "BA": ("balanced_accuracy",),
    "S-Con": ("prediction_consistency",),
    "GR-Con": ("extra", "gr_con"),
    "Gap_G^RMS": ("gap_rms",),
    "Gap_R^RMS": ("extra", "gap_r_rms"),
    "Gap_G^max": ("gap_max",),
    "Gap_R^max": ("extra", "gap_r_max"),
}
SYNTHETIC_COLUMNS = {
    "BA": ("balanced_accuracy",),
    "Acc": ("extra", "accuracy"),
    "PC": ("prediction_consistency",),
    "CTF": ("ctf_score",),
    "R_hat": ("extra", "r_hat"),
}


def _floats(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _words(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(text)
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "synthetic_sweep"
    methods: tuple = ("sensei",)
    # trainer knobs, named as in the reference code
    epoch: int = 20000
    batch_size: int = 64
    lr: float = 1e-2
    adv_step: float = 0.1
    adv_epoch: int = 10
    l2_attack: float = 0.0
    adv_epoch_full: int = 0
    ro: float = 0.0
    fair_reg: float = 1.0
    # runner knobs
    adv_init_std: float = 1.0
    hidden: int = 4
    optimizer: str = "sgd"
    lambda_clamp: float | None = None
    seed: int = 0
    restarts: int = 1
    split_fraction: float = 0.7
    n_train: int = 2000
    n_test: int = 2000
    fair_reg_list: tuple = (0.1, 1.0, 3.0, 5.0)
    ro_list: tuple = (0.0, 0.01, 0.1)
    sensr_fair_reg: float = 1.0
    data_dir: str = "data/adult"
    out_dir: str = "runs/out"
    certify_points: int = 500
    taus: tuple = DEFAULT_TAUS
    surface_grid: int = 200
    save_models: bool = False

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if not 0 < self.split_fraction < 1:
            raise ConfigError("split_fraction must lie in (0, 1)")
        if self.certify_points < 1:
            raise ConfigError("certify_points must be >= 1")
        if any(t <= 0 for t in self.taus):
            raise ConfigError("taus must be positive")
        for m in self.methods:
            if m not in ("erm", "sensei", "sensr", "clp"):
                raise ConfigError(f"unknown method {m!r}")
        try:
            self.attack()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.train_config("erm", 0).validate()

    def attack(self) -> AttackConfig:
        return AttackConfig(self.adv_step, self.adv_epoch, self.l2_attack, self.adv_epoch_full, self.adv_init_std)

    def train_config(self, method: str, seed: int, rho: float | None = None, eps: float | None = None) -> TrainConfig:
        return TrainConfig(
            steps=self.epoch, batch=self.batch_size, lr=self.lr, attack=self.attack(),
            eps=self.ro if eps is None else eps, rho=self.fair_reg if rho is None else rho,
            seed=seed, method=method, lambda_clamp=self.lambda_clamp, hidden=self.hidden,
            optimizer=self.optimizer)


def _convert(f: dataclasses.Field, value):
    if f.name in ("fair_reg_list", "ro_list", "taus"):
        return _floats(value)
    if f.name == "methods":
        return _words(value)
    if f.name == "save_models":
        return str(value).lower() in ("1", "true", "yes", "on")
    if f.name == "lambda_clamp":
        return None if str(value).lower() in ("", "none") else float(value)
    kind = type(f.default)
    return kind(value) if kind in (int, float) else str(value)


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_config(pairs: dict) -> ExperimentConfig:
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    kwargs = {}
    for key, value in pairs.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kwargs[key] = _convert(fields[key], value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    cfg = ExperimentConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    pairs = parse_config_text(text)
    pairs.update(overrides or {})
    return build_config(pairs)


# -------------------------------------------------------------- evaluation

def synthetic_metric() -> FairMetric:
    """Ignore the x coordinate: ``A = e_1``."""
    return FairMetric(2, np.array([[1.0], [0.0]]))


def evaluate_synthetic(model, test: Dataset) -> MetricsReport:
    preds = predict(model, test.features)
    col = test.protected_cols["sensitive"]
    group = test.features[:, col] > 0
    var = make_variations(test.features, "synthetic_reflect", test.protected_cols)
    acc_std, ba_std = accuracy_parity_std(preds, test.labels, [group, ~group])
    rms, gabs, gmax = tpr_gaps(preds, test.labels, group, 2)
    return MetricsReport(
        balanced_accuracy=balanced_accuracy(preds, test.labels, 2),
        prediction_consistency=prediction_consistency(model, var),
        ctf_score=ctf_score(model, var, 2),
        gap_rms=rms, gap_abs=gabs, gap_max=gmax,
        parity_acc_std=acc_std, parity_ba_std=ba_std,
        extra={"accuracy": float(np.mean(preds == test.labels))},
    )


def evaluate_adult(model, test: Dataset) -> MetricsReport:
    preds = predict(model, test.features)
    pc = test.protected_cols
    gender = test.features[:, pc["gender"]] > 0.5
    race = test.features[:, pc["race"]] > 0.5
    spouse = make_variations(test.features, "spouse", pc)
    gr = make_variations(test.features, "gender_race", pc)
    g_rms, g_abs, g_max = tpr_gaps(preds, test.labels, gender, 2)
    r_rms, r_abs, r_max = tpr_gaps(preds, test.labels, race, 2)
    acc_std, ba_std = accuracy_parity_std(preds, test.labels, [gender, ~gender])
    return MetricsReport(
        balanced_accuracy=balanced_accuracy(preds, test.labels, 2),
        prediction_consistency=prediction_consistency(model, spouse),
        ctf_score=ctf_score(model, spouse, 2),
        gap_rms=g_rms, gap_abs=g_abs, gap_max=g_max,
        parity_acc_std=acc_std, parity_ba_std=ba_std,
        extra={
            "accuracy": float(np.mean(preds == test.labels)),
            "gr_con": prediction_consistency(model, gr),
            "gap_r_rms": r_rms, "gap_r_abs": r_abs, "gap_r_max": r_max,
        },
    )


def certify(model, test: Dataset, metric: FairMetric, eps: float, cfg: ExperimentConfig, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    pts = test.features[: cfg.certify_points]
    result = empirical_dif(model, pts, metric, eps, attack=cfg.attack(), rng=rng)
    checks = markov_tail_check(model, pts, metric, eps, cfg.taus, result=result)
    return result, checks


# ------------------------------------------------------------------ driver

@dataclass
class RunRecord:
    tag: str
    restart: int
    metrics: MetricsReport
    certificate: dict
    model: object = None


def _write_restart(out: Path, tag, r, report, cert, checks, trlog, model, save_models) -> RunRecord:
    stem = f"{tag}_r{r}"
    report.extra["r_hat"] = cert.r_hat
    (out / f"metrics_{stem}.json").write_text(report.to_json() + "\n")
    (out / f"cert_{stem}.json").write_text(cert.to_json(checks) + "\n")
    trlog.write_csv(out / f"log_{stem}.csv")
    if save_models:
        save_model(model, out / f"model_{stem}.txt")
    return RunRecord(tag, r, report, cert.to_dict(checks), model)


def _tag(method, name, value) -> str:
    return method if name is None else f"{method}_{name}{value:g}"


def _synthetic_jobs(cfg: ExperimentConfig):
    if cfg.experiment == "synthetic_sweep":
        return [(m, rho, None, _tag(m, "rho", rho)) for m in cfg.methods for rho in cfg.fair_reg_list]
    return [("sensr", cfg.sensr_fair_reg, eps, _tag("sensr", "eps", eps)) for eps in cfg.ro_list]


def _run_synthetic(cfg: ExperimentConfig, out: Path) -> list:
    metric = synthetic_metric()
    records, curve = [], []
    for r in range(cfg.restarts):
        seed = cfg.seed + r
        train_ds = gen_synthetic(cfg.n_train, 2 * seed)
        test_ds = gen_synthetic(cfg.n_test, 2 * seed + 1)
        for method, rho, eps, tag in _synthetic_jobs(cfg):
            tcfg = cfg.train_config(method, seed, rho=rho, eps=eps)
            cf = reflect_counterfactual(0) if method == "clp" else None
            state, trlog = train(train_ds, metric, tcfg, counterfactual_fn=cf)
            report = evaluate_synthetic(state.model, test_ds)
            cert, checks = certify(state.model, test_ds, metric, tcfg.eps, cfg, seed)
            records.append(_write_restart(out, tag, r, report, cert, checks, trlog, state.model, cfg.save_models))
            curve.append((tag, r, rho if eps is None else eps, report.prediction_consistency, report.extra["accuracy"]))
            if r == 0:
                emit_surface(state.model, GridSpec(cfg.surface_grid), out / f"surface_{tag}.csv",
                             points=train_ds.features, labels=train_ds.labels)
            log.info("%s restart %d: pc %.4f acc %.4f", tag, r, report.prediction_consistency, report.extra["accuracy"])
    with open(out / "consistency_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tag", "restart", "sweep_value", "consistency", "accuracy"])
        for tag, r, v, pc, acc in curve:
            w.writerow([tag, r, repr(float(v)), repr(pc), repr(acc)])
    return records


def _run_adult(cfg: ExperimentConfig, out: Path) -> list:
    d = Path(cfg.data_dir)
    paths = d / "adult.data", d / "adult.test"
    for p in paths:
        if not p.is_file():
            raise DataError(f"missing {p}; run scripts/fetch_adult.py")
    records = []
    for r in range(cfg.restarts):
        seed = cfg.seed + r
        train_ds, test_ds = split_adult(*paths, cfg.split_fraction, seed)
        pc = train_ds.protected_cols
        metric = adult_metric(train_ds, pc["gender"], pc["race"], seed)
        for method in cfg.methods:
            tcfg = cfg.train_config(method, seed, rho=cfg.sensr_fair_reg if method == "sensr" else None)
            cf = flip_counterfactual(pc["gender"]) if method == "clp" else None
            state, trlog = train(train_ds, metric, tcfg, counterfactual_fn=cf)
            report = evaluate_adult(state.model, test_ds)
            cert, checks = certify(state.model, test_ds, metric, tcfg.eps, cfg, seed)
            records.append(_write_restart(out, method, r, report, cert, checks, trlog, state.model, cfg.save_models))
            log.info("%s restart %d: BA %.4f S-Con %.4f", method, r,
                     report.balanced_accuracy, report.prediction_consistency)
    return records


def _lookup(payload: dict, path: tuple):
    for key in path:
        payload = payload[key]
    return payload


def write_aggregate(out: Path, tags: list, restarts: int, columns: dict) -> list:
    """Mean and population std per tag, read back from the metrics JSONs."""
    rows = []
    for tag in tags:
        payloads = [json.loads((out / f"metrics_{tag}_r{r}.json").read_text()) for r in range(restarts)]
        row = [tag]
        for path in columns.values():
            vals = np.array([_lookup(p, path) for p in payloads], dtype=np.float64)
            row += [repr(float(vals.mean())), repr(float(vals.std()))]
        rows.append(row)
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tag"] + [f"{c}_{s}" for c in columns for s in ("mean", "std")])
        w.writerows(rows)
    return rows


def run_experiment(cfg: ExperimentConfig) -> list:
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.experiment == "adult":
        records = _run_adult(cfg, out)
        columns = ADULT_COLUMNS
    else:
        records = _run_synthetic(cfg, out)
        columns = SYNTHETIC_COLUMNS
    tags = list(dict.fromkeys(rec.tag for rec in records))
    write_aggregate(out, tags, cfg.restarts, columns)
    return records
