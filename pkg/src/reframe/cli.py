"""Command-line front door.

Subcommands:

* ``synth``     generate a seeded synthetic dataset plus a (mu, sigma) sidecar
* ``report``    dataset summaries (size, attributes, shift statistics)
* ``eval-ncde`` conditional-density quality metrics per (dataset, base, method)
* ``reframe``   family tables plus rank / significance summary
* ``sweep``     per-parameter loss curves per (dataset, base)

Outputs are CSV (6 significant digits) with an optional JSON mirror; runs
with identical flags and seed are byte-identical.  Exit codes: 0 success,
2 usage error, 1 data or runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field

from .data import ConfigurationError, IngestionError, dataset_summary, load_csv
from .enrichment import METHOD_GRAMMAR, MethodGrammarError, parse_method
from .harness import (
    FAMILIES,
    HarnessOptions,
    default_methods,
    evaluate_ncde,
    rank_summaries,
    run_family,
    run_fixed_loss,
    run_sweep,
)
from .losses import LOSS_GRAMMAR, LossGrammarError, parse_loss
from .regressors import BASE_NAMES, TreeParams
from .synth import GENERATORS, canonical_generator, generate

DEFAULT_SEED = 0


@dataclass(frozen=True)
class RunConfig:
    command: str
    data: tuple[str, ...] = ()
    target_col: str | None = None
    sep: str = ","
    bases: tuple[str, ...] = ("lr", "knn", "tree")
    methods: tuple[str, ...] = ()
    family: str | None = None
    loss: str | None = None
    alpha_steps: int | None = None
    beta_steps: int = 10
    rho_steps: int = 10
    k: int = 10
    ols_se_mode: str = "predictive"
    tree_min_split: int = 10
    tree_min_leaf: int = 5
    conformal_holdout: float = 0.0
    scale: float = 10.0
    seed: int = DEFAULT_SEED
    out: str = "."
    json_mirror: bool = False
    gen: str | None = None
    n: int = 1000


class UsageError(ValueError):
    pass


def _split_multi(values) -> tuple[str, ...]:
    out = []
    for v in values or ():
        out.extend(part.strip() for part in v.split(",") if part.strip())
    return tuple(out)


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    return str(v)


def _fmt_full(v) -> str:
    return repr(float(v))


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return _fmt(v)
    return v


def _write_csv(path: str, header: list[str], rows: list[list], formatter=_fmt):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(formatter(v) if not isinstance(v, str) else v for v in row) + "\n")


def _write_json(path: str, header: list[str], rows: list[list]):
    records = [{h: _jsonable(v) for h, v in zip(header, row)} for row in rows]
    with open(path, "w") as fh:
        json.dump(records, fh, indent=2)
        fh.write("\n")


def _emit(cfg: RunConfig, name: str, header: list[str], rows: list[list], formatter=_fmt):
    os.makedirs(cfg.out, exist_ok=True)
    csv_path = os.path.join(cfg.out, name + ".csv")
    _write_csv(csv_path, header, rows, formatter)
    if cfg.json_mirror:
        _write_json(os.path.join(cfg.out, name + ".json"), header, rows)
    return csv_path


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text)


def _load_datasets(cfg: RunConfig):
    if not cfg.data:
        raise UsageError("at least one --data file is required")
    return [load_csv(p, target_column=cfg.target_col, sep=cfg.sep) for p in cfg.data]


def _options(cfg: RunConfig) -> HarnessOptions:
    return HarnessOptions(
        knn_k=cfg.k,
        enrichment_k=cfg.k,
        ols_se_mode=cfg.ols_se_mode,
        tree_params=TreeParams(min_split=cfg.tree_min_split, min_leaf=cfg.tree_min_leaf),
        conformal_holdout=cfg.conformal_holdout,
    )


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(cfg: RunConfig) -> int:
    try:
        gen = canonical_generator(cfg.gen)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    truth = generate(gen, cfg.n, cfg.seed)
    ds = truth.dataset
    stem = f"synth_{gen}_n{cfg.n}_seed{cfg.seed}"
    header = list(ds.feature_names) + ["y"]
    rows = [
        list(ds.features[i]) + [ds.targets[i]]
        for i in range(ds.n_rows)
    ]
    path = _emit(cfg, stem, header, rows, formatter=_fmt_full)
    truth_rows = [[truth.mu[i], truth.sigma[i]] for i in range(ds.n_rows)]
    truth_path = _emit(cfg, stem + "_truth", ["mu", "sigma"], truth_rows, formatter=_fmt_full)
    print(path)
    print(truth_path)
    return 0


def cmd_report(cfg: RunConfig) -> int:
    rows = []
    for ds in _load_datasets(cfg):
        s = dataset_summary(ds)
        rows.append([s["name"], s["size"], s["attr"], s["tr_te_md"], s["tr_te_ks"]])
    path = _emit(cfg, "datasets_report", ["name", "size", "attr", "TrTeMD", "TrTeKS"], rows)
    print(path)
    return 0


def cmd_eval_ncde(cfg: RunConfig) -> int:
    datasets = _load_datasets(cfg)
    methods = cfg.methods or ("own", "uknc", "bin")
    for m in methods:
        parse_method(m)
    rows_raw = evaluate_ncde(datasets, cfg.bases, methods, _options(cfg))
    rows = [
        [r["dataset"], r["base"], r["method"], r["mrse"], r["msll"], r["msvr"]]
        for r in rows_raw
    ]
    path = _emit(cfg, "metrics", ["dataset", "base", "method", "mrse", "msll", "msvr"], rows)
    print(path)
    return 0


def _table_rows(table, scale: float):
    header = ["dataset"] + [f"{b}:{m}" for b in table.bases for m in table.methods]
    rows = []
    for name in table.datasets:
        rows.append(
            [name]
            + [
                table.aggregated[(name, b, m)] * scale
                for b in table.bases
                for m in table.methods
            ]
        )
    return header, rows


def cmd_reframe(cfg: RunConfig) -> int:
    datasets = _load_datasets(cfg)
    if cfg.loss:
        spec = parse_loss(cfg.loss)
        label = cfg.loss.split(":", 1)[0]
        methods = cfg.methods or None
        table = run_fixed_loss(
            datasets,
            spec,
            cfg.bases,
            methods,
            label=label,
            options=_options(cfg),
            scale_factor=cfg.scale,
            log=lambda msg: print(msg, file=sys.stderr),
        )
    else:
        if not cfg.family:
            raise UsageError("reframe needs --family or --loss")
        table = run_family(
            datasets,
            cfg.family,
            cfg.bases,
            cfg.methods or None,
            alpha_steps=cfg.alpha_steps,
            beta_steps=cfg.beta_steps,
            rho_steps=cfg.rho_steps,
            options=_options(cfg),
            scale_factor=cfg.scale,
            log=lambda msg: print(msg, file=sys.stderr),
        )
    if not table.datasets:
        raise RuntimeError(
            "every dataset failed: " + "; ".join(f"{k}: {v}" for k, v in table.failures.items())
        )
    header, rows = _table_rows(table, cfg.scale)
    summaries = rank_summaries(table) if len(table.datasets) >= 2 else None
    ar_row = ["AR"]
    for b in table.bases:
        if summaries is not None:
            ar_row += [summaries[b].average_ranks[m] for m in table.methods]
        else:
            ar_row += [float("nan")] * len(table.methods)
    rows.append(ar_row)
    table_path = _emit(cfg, f"{table.family}_table", header, rows)
    print(table_path)
    if summaries is not None:
        rank_rows = []
        for b in table.bases:
            s = summaries[b]
            for m in table.methods:
                rank_rows.append(
                    [
                        b,
                        m,
                        s.average_ranks[m],
                        s.friedman_statistic,
                        s.critical_value,
                        s.nemenyi_cd,
                        str(s.significant).lower(),
                    ]
                )
        ranks_path = _emit(
            cfg,
            f"{table.family}_ranks",
            [
                "base",
                "method",
                "average_rank",
                "friedman_statistic",
                "critical_value",
                "nemenyi_cd",
                "significant",
            ],
            rank_rows,
        )
        print(ranks_path)
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    datasets = _load_datasets(cfg)
    if not cfg.family:
        raise UsageError("sweep needs --family")
    sweeps = run_sweep(
        datasets,
        cfg.family,
        cfg.bases,
        cfg.methods or None,
        alpha_steps=cfg.alpha_steps,
        beta_steps=cfg.beta_steps,
        rho_steps=cfg.rho_steps,
        options=_options(cfg),
    )
    methods = cfg.methods or default_methods(cfg.family)
    for (ds_name, base_name), (xs, curves) in sweeps.items():
        rows = [
            [float(xs[i])] + [curves[m][i] * cfg.scale for m in methods]
            for i in range(len(xs))
        ]
        path = _emit(
            cfg,
            f"{cfg.family}_sweep_{_safe_name(ds_name)}_{base_name}",
            ["parameter"] + list(methods),
            rows,
        )
        print(path)
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--data", nargs="+", default=[], help="input CSV file(s)")
    p.add_argument("--target-col", default=None, help="target column name or index (default: last)")
    p.add_argument("--sep", default=",", help="CSV separator")
    p.add_argument(
        "--base",
        "--bases",
        dest="base",
        action="append",
        default=None,
        help=f"base technique(s), comma-separable, from {BASE_NAMES} (repeatable)",
    )
    p.add_argument(
        "--method",
        "--methods",
        dest="method",
        action="append",
        default=None,
        help=f"variance/reframing method(s): none | cosh | posh | {METHOD_GRAMMAR} (repeatable)",
    )
    p.add_argument("--alpha-steps", type=int, default=None)
    p.add_argument("--beta-steps", type=int, default=10)
    p.add_argument("--rho-steps", type=int, default=10)
    p.add_argument("--k", type=int, default=10, help="neighbour count for knn and enrichment")
    p.add_argument("--ols-se-mode", choices=("predictive", "fitted"), default="predictive")
    p.add_argument("--tree-min-split", type=int, default=10)
    p.add_argument("--tree-min-leaf", type=int, default=5)
    p.add_argument("--conformal-holdout", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=10.0, help="rendering factor for loss tables")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--json", action="store_true", help="also write JSON mirrors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reframe",
        description="Gaussian soft regression models and loss-optimal prediction reframing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with known (mu, sigma)")
    p.add_argument("--gen", required=True, help=f"generator: one of {GENERATORS} (short aliases ok)")
    p.add_argument("--n", type=int, default=1000)
    _add_common(p)

    p = sub.add_parser("report", help="dataset summaries with shift statistics")
    _add_common(p)

    p = sub.add_parser("eval-ncde", help="conditional density estimation metrics")
    _add_common(p)

    p = sub.add_parser("reframe", help="family tables and rank summary")
    p.add_argument("--family", choices=FAMILIES, default=None)
    p.add_argument("--loss", default=None, help=f"fixed loss spec: {LOSS_GRAMMAR}")
    _add_common(p)

    p = sub.add_parser("sweep", help="per-parameter loss curves")
    p.add_argument("--family", choices=FAMILIES, required=True)
    _add_common(p)

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    bases = _split_multi(args.base) or ("lr", "knn", "tree")
    for b in bases:
        if b not in BASE_NAMES:
            raise UsageError(f"unknown base {b!r}; expected one of {BASE_NAMES}")
    return RunConfig(
        command=args.command,
        data=tuple(args.data),
        target_col=args.target_col,
        sep=args.sep,
        bases=bases,
        methods=_split_multi(args.method),
        family=getattr(args, "family", None),
        loss=getattr(args, "loss", None),
        alpha_steps=args.alpha_steps,
        beta_steps=args.beta_steps,
        rho_steps=args.rho_steps,
        k=args.k,
        ols_se_mode=args.ols_se_mode,
        tree_min_split=args.tree_min_split,
        tree_min_leaf=args.tree_min_leaf,
        conformal_holdout=args.conformal_holdout,
        scale=args.scale,
        seed=args.seed,
        out=args.out,
        json_mirror=args.json,
        gen=getattr(args, "gen", None),
        n=getattr(args, "n", 1000),
    )


_COMMANDS = {
    "synth": cmd_synth,
    "report": cmd_report,
    "eval-ncde": cmd_eval_ncde,
    "reframe": cmd_reframe,
    "sweep": cmd_sweep,
}

_USAGE_ERRORS = (UsageError, MethodGrammarError, LossGrammarError, ConfigurationError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config_from_args(args)
        return _COMMANDS[cfg.command](cfg)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
