"""Command-line experiment runner.

``fisherloss <audit|irfil|attack|validate|scatter> --config run.json [overrides]``

Every output file starts with the run manifest (the first JSON line, or a
``# manifest:`` comment in CSV files), and reruns with the same manifest
write byte-identical files.

Exit codes: 0 success, 1 usage or configuration error, 2 a validation check
failed, 3 numerical failure (solver or linear-algebra breakdown).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import scipy
from scipy import stats

from . import __version__, attacks, fil, glm, irfil, oracle, synthbench
from .config import ConfigError, RunConfig, set_path
from .dataset import (
    Dataset, FeatureSpec, apply_pca, apply_scale, encode, load_csv, normalize_unit_ball,
    pca_project, split,
)
from .mechanism import RNG_NAME, rng_for

logger = logging.getLogger("fisherloss")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("audit", "irfil", "attack", "validate", "scatter")


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


# -- data preparation ------------------------------------------------------------


class Prepared:
    """Training data, optional held-out data, and the attack attribute if any."""

    def __init__(self, train: Dataset, test: Dataset | None, target_attribute: str | None):
        self.train = train
        self.test = test
        self.target_attribute = target_attribute


def _load_table(path: str, spec: FeatureSpec, stats_=None) -> Dataset:
    if path.endswith(".npz"):
        return Dataset.load(path)
    return encode(load_csv(path, spec), spec, stats_)


def prepare(cfg: RunConfig) -> Prepared:
    dc = cfg.dataset
    target_attribute = None
    if dc.kind.startswith("synthetic."):
        gen = {
            "synthetic.regression": synthbench.gen_regression,
            "synthetic.classification": synthbench.gen_classification,
            "synthetic.attack": synthbench.gen_attack_task,
        }[dc.kind]
        params = dict(dc.params)
        params.setdefault("seed", cfg.seed)
        try:
            out = gen(**params)
        except TypeError as exc:
            raise ConfigError("config.dataset.params", str(exc)) from None
        if dc.kind == "synthetic.attack":
            out, task = out
            target_attribute = task.attribute
        full, test = out, None
    else:
        spec = None
        if dc.kind == "csv":
            spec = FeatureSpec.from_dict(dc.spec) if dc.spec is not None else FeatureSpec.from_file(dc.spec_path)
            target_attribute = spec.target_attribute
        full = _load_table(dc.path, spec)
        test = _load_table(dc.test_path, spec, full.stats) if dc.test_path else None
    if test is None and dc.test_fraction is not None:
        full, test = split(full, dc.test_fraction, cfg.seed)

    train = normalize_unit_ball(full)
    if test is not None and train.scale != full.scale:
        test = apply_scale(test, train.scale / full.scale)
    if dc.pca_components is not None:
        before = train.scale
        train = normalize_unit_ball(pca_project(train, dc.pca_components))
        if test is not None:
            test = apply_pca(test, train.pca)
            test = apply_scale(test, train.scale / before)
    return Prepared(train, test, target_attribute)


def fit_model(cfg: RunConfig, ds: Dataset, weights=None) -> glm.ModelParams:
    return glm.fit(ds, cfg.model.loss, cfg.model.lam, weights, cfg.model.grad_tol)


def test_metric(params: glm.ModelParams, ds: Dataset) -> dict:
    """Accuracy for label targets, mean squared error otherwise."""
    labels = {0.0, 1.0} if params.kind is glm.LossKind.LOGISTIC else {-1.0, 1.0}
    if set(np.unique(ds.y)) <= labels:
        return {"metric": "accuracy", "value": glm.accuracy(params, ds)}
    return {"metric": "mse", "value": glm.mse(params, ds)}


def _task(cfg: RunConfig, prep: Prepared, attribute: str | None, field: str) -> attacks.AttackTask:
    attribute = attribute or prep.target_attribute
    if attribute is None:
        raise ConfigError(field, "no target attribute configured")
    if attribute not in prep.train.categories or attribute not in prep.train.groups:
        raise ConfigError(field, f"{attribute!r} is not a nominal attribute of the encoded data "
                                 "(PCA projection removes attribute spans)")
    return attacks.AttackTask.for_attribute(prep.train, attribute)


def _span(ds: Dataset, attribute: str, field: str) -> list[int]:
    if attribute == "y":
        return [ds.d]
    if attribute not in ds.groups:
        raise ConfigError(field, f"unknown attribute {attribute!r}; known: {sorted(ds.groups)}")
    return list(ds.groups[attribute])


# -- output ------------------------------------------------------------------------


def _default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=_default)


def manifest(command: str, cfg: RunConfig) -> dict:
    """Everything that determines the numbers; the output location and thread count do not."""
    config = cfg.to_dict()
    del config["output"], config["threads"]
    return {
        "type": "manifest",
        "command": command,
        "package": "fisherloss",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "rng": RNG_NAME,
        "seed": cfg.seed,
        "sigma": cfg.sigma,
        "lam": cfg.model.lam,
        "tolerances": {
            "grad_tol": cfg.model.grad_tol,
            "power_tol": fil.POWER_TOL,
            "power_max_iter": fil.POWER_MAX_ITER,
            "power_seed": fil.POWER_SEED,
        },
        "config": config,
    }


class Writer:
    def __init__(self, outdir: str | Path, man: dict):
        self.outdir = Path(outdir)
        self.outdir.mkdir(parents=True, exist_ok=True)
        self.manifest = man
        self.files: list[str] = []
        self._write("manifest.json", json.dumps(man, sort_keys=True, indent=2, default=_default) + "\n")

    def _write(self, name: str, text: str) -> None:
        with open(self.outdir / name, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        self.files.append(name)

    def jsonl(self, name: str, records: Iterable[dict]) -> None:
        lines = [dumps(self.manifest)] + [dumps(r) for r in records]
        self._write(name, "\n".join(lines) + "\n")

    def csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
        buf = io.StringIO()
        buf.write("# manifest: " + dumps(self.manifest) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self._write(name, buf.getvalue())


def histogram_records(etas: np.ndarray, labels: np.ndarray | None, bins: int) -> list[dict]:
    """Histogram counts on shared bin edges, one series per label value."""
    edges = np.histogram_bin_edges(etas, bins=bins)
    series = [("all", np.ones(etas.size, dtype=bool))]
    if labels is not None:
        values = np.unique(labels)
        if values.size <= 10:
            series += [(float(v), labels == v) for v in values]
    out = []
    for label, mask in series:
        counts, _ = np.histogram(etas[mask], bins=edges)
        for b, c in enumerate(counts):
            out.append({"type": "histogram", "label": label, "bin": b,
                        "lo": float(edges[b]), "hi": float(edges[b + 1]), "count": int(c)})
    return out


def extremes_record(etas: np.ndarray, k: int) -> dict:
    order = np.argsort(etas, kind="stable")
    k = min(k, etas.size)
    pick = lambda idx: [{"index": int(i), "eta": float(etas[i])} for i in idx]
    return {"type": "extremes", "k": k, "bottom": pick(order[:k]), "top": pick(order[::-1][:k])}


def eta_summary(etas: np.ndarray) -> dict:
    return {
        "eta_mean": float(etas.mean()),
        "eta_std": float(etas.std()),
        "eta_cv": irfil.coefficient_of_variation(etas),
        "eta_min": float(etas.min()),
        "eta_max": float(etas.max()),
    }


# -- commands ----------------------------------------------------------------------


def cmd_audit(cfg: RunConfig) -> dict:
    prep = prepare(cfg)
    ds, ac, sigma = prep.train, cfg.audit, cfg.sigma
    params = fit_model(cfg, ds)
    H = fil.hessian_full(ds, params)
    out = Writer(cfg.output, manifest("audit", cfg))
    base = {"type": "eta", "granularity": ac.granularity, "sigma": sigma, "seed": cfg.seed}
    records: list[dict] = []
    per_example = ac.granularity in ("example", "example_attribute")

    if per_example:
        coords = _span(ds, ac.attribute, "config.audit.attribute") if ac.granularity == "example_attribute" else None
        etas = fil.example_etas(ds, params, sigma, coords, H)
        records += [dict(base, index=i, eta=float(e), label=float(ds.y[i])) for i, e in enumerate(etas)]
    elif ac.granularity == "attribute":
        Js = fil.example_jacobians(ds, params, H)
        names = list(ds.groups) if ds.groups else list(ds.feature_names)
        spans = [list(ds.groups[g]) if ds.groups else [j] for j, g in enumerate(names)]
        names.append("y")
        spans.append([ds.d])
        etas = np.empty(len(names))
        for k, (name, span) in enumerate(zip(names, spans)):
            J = Js[:, :, span].transpose(1, 0, 2).reshape(ds.d, -1)
            etas[k] = fil.spectral_norm(J) / sigma
            records.append(dict(base, index=name, columns=span, eta=float(etas[k])))
    elif ac.granularity == "full":
        v = fil.full_eta(ds, params, sigma, H)
        etas = np.array([v.eta])
        records.append(dict(base, index=None, eta=v.eta))
    else:
        idx = np.asarray(ac.indices, dtype=np.int64)
        if idx.min() < 0 or idx.max() >= ds.size or np.unique(idx).size != idx.size:
            raise ConfigError("config.audit.indices", f"indices must be distinct and lie in [0, {ds.size})")
        J = fil.full_jacobian(ds, params, H)[:, idx]
        v = fil.fil_eta(J, sigma, "custom")
        etas = np.array([v.eta])
        records.append(dict(base, index=idx.tolist(), eta=v.eta))

    if per_example:
        records += histogram_records(etas, ds.y, ac.bins)
        records.append(extremes_record(etas, ac.top_k))
        out.csv("audit.csv", ["index", "eta", "label"], ((i, e, float(ds.y[i])) for i, e in enumerate(etas)))
    summary = {"type": "summary", "n": ds.n, "d": ds.d, "granularity": ac.granularity,
               "records": len(etas), "model": params.to_dict()["convergence"], **eta_summary(etas)}
    if prep.test is not None:
        summary["test"] = test_metric(params, prep.test)
    records.append(summary)
    out.jsonl("audit.jsonl", records)
    return summary


def cmd_irfil(cfg: RunConfig) -> dict:
    prep = prepare(cfg)
    ds, ic = prep.train, cfg.irfil
    coords = _span(ds, ic.attribute, "config.irfil.attribute") if ic.attribute else None
    trace = irfil.run_irfil(ds, cfg.model.loss, cfg.model.lam, cfg.sigma, ic.iters, cfg.seed,
                            coordinates=coords, grad_tol=cfg.model.grad_tol,
                            early_stop_cv=ic.early_stop_cv)
    out = Writer(cfg.output, manifest("irfil", cfg))
    records = [dict(r, type="iteration") for r in trace.records()]
    final = {
        "type": "final",
        "iterations": len(trace.etas),
        "w_prime": trace.final.w_prime,
        "stream": list(trace.final.stream),
        "weights_sum": float(trace.weights[-1].sum()),
        "model": trace.final_params.to_dict()["convergence"],
        "initial": eta_summary(trace.etas[0]),
        "last": eta_summary(trace.etas[-1]),
    }
    if prep.test is not None:
        final["test_unweighted"] = test_metric(trace.models[0], prep.test)
        final["test_final"] = test_metric(trace.final_params, prep.test)
    records.append(final)
    out.jsonl("irfil.jsonl", records)
    out.csv("irfil_weights.csv", ["index", "weight_used", "eta_initial", "eta_last"],
            ((i, trace.weights[-2][i], trace.etas[0][i], trace.etas[-1][i]) for i in range(ds.n)))
    return final


def cmd_attack(cfg: RunConfig) -> dict:
    prep = prepare(cfg)
    ds, ac = prep.train, cfg.attack
    task = _task(cfg, prep, ac.target_attribute, "config.attack.target_attribute")
    params = fit_model(cfg, ds)
    etas = attacks.attribute_etas(ds, params, task)
    sigmas = ac.sigmas if ac.sigmas is not None else [cfg.sigma]
    out = Writer(cfg.output, manifest("attack", cfg))
    records = [{"type": "task", "attribute": task.attribute, "categories": list(task.categories),
                "prior": task.prior, "modal_frequency": float(task.prior.max())}]

    def run(model, phase):
        for s in sigmas:
            res = attacks.evaluate_attack(ds, task, model, ac.type, ac.trials, s, cfg.seed,
                                          etas=etas, threads=cfg.threads)
            rec = dict(res.to_dict(), type="result", phase=phase)
            rec["top_bottom_gap"] = res.top_bottom_gap
            rec["decile_spread"] = res.decile_spread
            records.append(rec)

    run(params, "unweighted")
    if ac.irfil_iters:
        trace = irfil.run_irfil(ds, cfg.model.loss, cfg.model.lam, cfg.sigma, ac.irfil_iters, cfg.seed,
                                coordinates=task.span, grad_tol=cfg.model.grad_tol)
        records.append({"type": "irfil", "eta_cv": trace.eta_cv, "weights_sum": float(trace.weights[-1].sum())})
        run(trace.final_params, "irfil")
    results = [r for r in records if r["type"] == "result"]
    summary = {"type": "summary", "attack": ac.type,
               "accuracy": [{"phase": r["phase"], "sigma": r["sigma"], "accuracy": r["accuracy_mean"],
                             "top_bottom_gap": r["top_bottom_gap"]} for r in results]}
    records.append(summary)
    out.jsonl("attack.jsonl", records)
    return summary


def cmd_validate(cfg: RunConfig) -> dict:
    prep = prepare(cfg)
    ds, vc, sigma = prep.train, cfg.validate, cfg.sigma
    params = fit_model(cfg, ds)
    H = fil.hessian_full(ds, params)
    rng = rng_for(cfg.seed, 101)
    examples = np.sort(rng.choice(ds.n, size=min(vc.examples, ds.n), replace=False))
    checks = oracle.jacobian_diagnostics(ds, params, examples, vc.step)

    i0 = int(examples[0])
    J0 = fil.example_jacobian(ds, params, i0, H)
    checks.append(dict(oracle.fim_diagnostic(J0, sigma, vc.mc_samples, cfg.seed), example=i0))

    if ds.size <= cfg.audit.fim_cap:
        full = fil.full_fim(ds, params, sigma, cfg.audit.fim_cap, H)
        sub = fil.subset_fim(full, ds.example_indices(i0)).matrix
        err = oracle.relative_error(sub, fil.fim(J0, sigma).matrix)
        checks.append({"check": "two_path_subset", "example": i0, "relative_error": err,
                       "tolerance": 1e-10, "pass": bool(err <= 1e-10)})

    gap = oracle.pd_block_inversion_check(8, 3, cfg.seed, vc.block_draws)
    checks.append({"check": "block_inversion", "min_eigenvalue": gap, "tolerance": -1e-8,
                   "pass": bool(gap >= -1e-8)})

    if params.kind is glm.LossKind.SQUARED:
        for i in examples[:5]:
            r = oracle.blue_variance_experiment(ds, int(i), sigma, vc.blue_trials, cfg.seed,
                                                params.lam, params.weights)
            ratio = r.empirical_variance / r.cramer_rao
            ok = bool(abs(ratio - 1.0) <= 0.05 and abs(r.bias) <= 3.0 * r.bias_se)
            checks.append({"check": "cramer_rao", "example": int(i), "empirical_variance": r.empirical_variance,
                           "cramer_rao": r.cramer_rao, "ratio": ratio, "bias": r.bias,
                           "bias_se": r.bias_se, "tolerance": 0.05, "pass": ok})

    failed = [c for c in checks if not c["pass"]]
    summary = {"type": "summary", "checks": len(checks), "failed": len(failed),
               "pass": not failed}
    out = Writer(cfg.output, manifest("validate", cfg))
    out.jsonl("validate.jsonl", [dict(c, type="check") for c in checks] + [summary])
    if failed:
        names = ", ".join(f"{c['check']}" + (f"[{c['example']}]" if "example" in c else "") for c in failed)
        raise ValidationFailure(f"{len(failed)} of {len(checks)} checks failed: {names}")
    return summary


def cmd_scatter(cfg: RunConfig) -> dict:
    prep = prepare(cfg)
    ds = prep.train
    params = fit_model(cfg, ds)
    etas = fil.example_etas(ds, params, cfg.sigma)
    loss = glm.losses(params.kind, params.w, ds.X, ds.y)
    gnorm = np.linalg.norm(glm.gradients(params.kind, params.w, ds.X, ds.y), axis=1)
    k = max(1, int(np.floor(cfg.scatter.fraction * ds.n)))
    eta_order = np.argsort(etas, kind="stable")
    loss_order = np.argsort(loss, kind="stable")
    low_eta, high_eta = set(eta_order[:k].tolist()), set(eta_order[-k:].tolist())
    low_loss, high_loss = set(loss_order[:k].tolist()), set(loss_order[-k:].tolist())
    summary = {
        "type": "summary",
        "n": ds.n,
        "k": k,
        "spearman_eta_loss": float(stats.spearmanr(etas, loss).statistic),
        "spearman_eta_grad_norm": float(stats.spearmanr(etas, gnorm).statistic),
        "low_eta_high_loss": sorted(low_eta & high_loss),
        "high_eta_low_loss": sorted(high_eta & low_loss),
    }
    out = Writer(cfg.output, manifest("scatter", cfg))
    rows = [{"type": "point", "index": i, "eta": float(etas[i]), "loss": float(loss[i]),
             "grad_norm": float(gnorm[i]), "label": float(ds.y[i])} for i in range(ds.n)]
    out.jsonl("scatter.jsonl", rows + [summary])
    out.csv("scatter.csv", ["index", "eta", "loss", "grad_norm", "label"],
            ((r["index"], r["eta"], r["loss"], r["grad_norm"], r["label"]) for r in rows))
    return summary


HANDLERS = {"audit": cmd_audit, "irfil": cmd_irfil, "attack": cmd_attack,
            "validate": cmd_validate, "scatter": cmd_scatter}


# -- argument handling ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fisherloss", description="Fisher information loss audits and experiments.")
    p.add_argument("--version", action="version", version=f"fisherloss {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name, help=HANDLERS[name].__name__.removeprefix("cmd_"))
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--sigma", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--lam", type=float)
        s.add_argument("--loss", choices=("squared", "logistic"))
        s.add_argument("--output")
        s.add_argument("--threads", type=int)
        s.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                       help="override any config field, e.g. --set dataset.params.n=200")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "audit":
            s.add_argument("--granularity")
        if name in ("irfil", "attack"):
            s.add_argument("--irfil-iters", type=int)
        if name == "attack":
            s.add_argument("--attack", choices=("whitebox", "blackbox", "baseline"))
            s.add_argument("--trials", type=int)
            s.add_argument("--target-attribute")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw: dict = {}
    if args.config:
        raw = json.loads(json.dumps(RunConfig.from_file(args.config).to_dict()))
    flags = {
        "sigma": args.sigma, "seed": args.seed, "model.lam": args.lam, "model.loss": args.loss,
        "output": args.output, "threads": args.threads,
        "audit.granularity": getattr(args, "granularity", None),
        "attack.type": getattr(args, "attack", None),
        "attack.trials": getattr(args, "trials", None),
        "attack.target_attribute": getattr(args, "target_attribute", None),
    }
    iters = getattr(args, "irfil_iters", None)
    if iters is not None:
        flags["irfil.iters" if args.command == "irfil" else "attack.irfil_iters"] = iters
    for key, value in flags.items():
        if value is not None:
            set_path(raw, key, value)
    for item in args.set:
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects KEY=JSON, got {item!r}")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        set_path(raw, key, value)
    return RunConfig.from_dict(raw)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        summary = HANDLERS[args.command](cfg)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (glm.ConvergenceError, fil.PowerIterationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(dumps(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
