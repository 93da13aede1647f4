"""Operator surface: train, eval, prune, symbolify, report.

Configs are line-oriented ``key = value`` files with ``#`` comments.
Unknown keys are rejected; the resolved configuration is echoed at train
time and re-parses to the same values. Exit codes: 0 success, 1 runtime
failure, 2 usage or configuration error.
"""

import argparse
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from .data import (
    destandardize,
    ingest_csv,
    make_windows,
    read_stats,
    split_standardize,
    write_stats,
)
from .decomposition import moving_average_np
from .interpret import (
    format_graph_description,
    format_machine_report,
    format_prune_report,
    format_symbolic_report,
    generate_report,
    prune,
)
from .metrics import mae, metric_set, mse, naive2_rows
from .model import ForecastModel, ModelConfig, evaluate_forecasts, train
from .taylorkan import top_k_frequencies

DEFAULT_TAU = 5e-4
DEFAULT_TOP_M = 3
MAX_CALIBRATION_WINDOWS = 1024


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str
    lookback: int
    horizon: int
    task: str = "long"
    embed_dim: int = 32
    kernel: int = 25
    trend_degree: int = 3
    top_k: int = 5
    patch_len: int = 6
    stride: int = 6
    reg_lambda: float = 0.01
    lr: float = 0.0005
    batch_size: int = 64
    epochs: int = 10
    patience: int = 3
    seed: int = 0
    out: str = "out"
    split: str = "auto"
    frequency: str = "hourly"
    checkpoint: str = ""

    def __post_init__(self):
        if self.task not in ("long", "short"):
            raise ConfigError(f"task must be long or short, got {self.task!r}")
        if self.split not in ("auto", "ett", "ratio"):
            raise ConfigError(f"split must be auto, ett or ratio, got {self.split!r}")

    def model_config(self):
        try:
            return ModelConfig(
                lookback=self.lookback,
                horizon=self.horizon,
                embed_dim=self.embed_dim,
                kernel=self.kernel,
                trend_degree=self.trend_degree,
                top_k=self.top_k,
                patch_len=self.patch_len,
                stride=self.stride,
                reg_lambda=self.reg_lambda,
                lr=self.lr,
                batch_size=self.batch_size,
                epochs=self.epochs,
                patience=self.patience,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def as_lines(self):
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            rendered = repr(value) if isinstance(value, float) else str(value)
            out.append(f"{f.name} = {rendered}")
        return "\n".join(out) + "\n"


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_REQUIRED = ("dataset", "lookback", "horizon")


def parse_config_text(text, origin="<config>"):
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in raw:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def resolve_config(raw, origin="<config>", **overrides):
    for key, value in overrides.items():
        if value is not None:
            raw[key] = str(value)
    unknown = sorted(set(raw) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"{origin}: unknown keys: {', '.join(unknown)}")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"{origin}: missing required keys: {', '.join(missing)}")
    kwargs = {}
    for key, value in raw.items():
        ftype = _FIELD_TYPES[key]
        try:
            if ftype in (int, "int"):
                kwargs[key] = int(value)
            elif ftype in (float, "float"):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except ValueError:
            raise ConfigError(f"{origin}: key {key!r}: cannot parse {value!r}") from None
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{origin}: {exc}") from None


def load_config(path, **overrides):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return resolve_config(parse_config_text(text, origin=path), origin=path, **overrides)


# --- shared pipeline pieces ------------------------------------------------------

def _load_splits(cfg):
    ds = ingest_csv(cfg.dataset, frequency=cfg.frequency)
    split = split_standardize(ds, mode=cfg.split)
    min_rows = cfg.lookback + cfg.horizon
    for name, part in (("train", split.train), ("val", split.val), ("test", split.test)):
        if len(part) < min_rows:
            raise ConfigError(
                f"{name} split has {len(part)} rows; lookback+horizon needs {min_rows}"
            )
    return ds, split


def _window_splits(cfg, split):
    return {
        name: make_windows(part, cfg.lookback, cfg.horizon)
        for name, part in (("train", split.train), ("val", split.val), ("test", split.test))
    }


def _extract_frequencies(cfg, train_inputs):
    seasonal = train_inputs - moving_average_np(train_inputs, cfg.kernel)
    return top_k_frequencies(seasonal, cfg.top_k)


def _test_metrics(model, cfg, ds, split, windows):
    test_x, test_y = windows["test"]
    preds = evaluate_forecasts(model, test_x, test_y, cfg.batch_size)
    rows = preds.reshape(-1, cfg.horizon)
    target_rows = test_y.reshape(-1, cfg.horizon)
    hist_rows = test_x.reshape(-1, cfg.lookback)
    # percentage/scaled metrics read better on the original scale
    std_rows = np.tile(split.std, len(test_x))[:, None]
    mean_rows = np.tile(split.mean, len(test_x))[:, None]
    rows_raw = destandardize(rows, mean_rows, std_rows)
    target_raw = destandardize(target_rows, mean_rows, std_rows)
    hist_raw = destandardize(hist_rows, mean_rows, std_rows)
    m = ds.season_period
    if cfg.lookback <= m:
        m = 1  # seasonal-naive scale needs history longer than the period
    naive_ref = naive2_rows(hist_raw, cfg.horizon, m)
    scaled = metric_set(rows_raw, target_raw, hist_raw, m, naive2_ref=naive_ref)
    return {
        "mse": mse(rows, target_rows),
        "mae": mae(rows, target_rows),
        "smape": scaled.smape,
        "mase": scaled.mase,
        "owa": scaled.owa,
    }


def _format_metrics(values):
    return "".join(f"{k}={v:.6f}\n" for k, v in values.items())


def _write(path, text, created):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    created.append(path)


# --- commands -----------------------------------------------------------------------

def cmd_train(args):
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    os.makedirs(cfg.out, exist_ok=True)
    created = []
    try:
        resolved = cfg.as_lines()
        sys.stdout.write(resolved)
        _write(os.path.join(cfg.out, "resolved_config.txt"), resolved, created)

        ds, split = _load_splits(cfg)
        windows = _window_splits(cfg, split)
        train_x, train_y = windows["train"]
        val_x, val_y = windows["val"]
        freqs = _extract_frequencies(cfg, train_x)
        model = ForecastModel(cfg.model_config(), freqs, seed=cfg.seed)

        history, best_epoch = train(
            model, train_x, train_y, val_x, val_y,
            task=cfg.task, seed=cfg.seed,
            log=lambda s: print(
                f"epoch {s.epoch}: train_pred={s.train_pred:.6f} "
                f"val_pred={s.val_pred:.6f}"
            ),
        )

        history_lines = ["# epoch\ttrain_pred\tval_pred\treg\ttotal"]
        for s in history:
            history_lines.append(
                f"{s.epoch}\t{s.train_pred!r}\t{s.val_pred!r}\t{s.reg!r}\t{s.total!r}"
            )
        _write(os.path.join(cfg.out, "history.tsv"), "\n".join(history_lines) + "\n", created)

        ckpt_path = os.path.join(cfg.out, "checkpoint.itfk")
        model.save(
            ckpt_path,
            extra_config=[
                ("task", cfg.task),
                ("dataset_name", ds.name),
                ("frequency", cfg.frequency),
                ("n_variates", str(ds.values.shape[1])),
                ("best_epoch", str(best_epoch)),
            ],
        )
        created.append(ckpt_path)
        write_stats(ckpt_path + ".stats", ds.variate_names, split.mean, split.std)
        created.append(ckpt_path + ".stats")

        values = _test_metrics(model, cfg, ds, split, windows)
        text = _format_metrics(values)
        _write(os.path.join(cfg.out, "metrics.txt"), text, created)
        sys.stdout.write(text)
        return 0
    except Exception:
        for path in created:
            try:
                os.remove(path)
            except OSError:
                pass
        raise


def _load_checkpoint_model(path):
    if not path:
        raise ConfigError("a checkpoint path is required (--checkpoint)")
    try:
        return ForecastModel.load(path)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {path}") from None


def cmd_eval(args):
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    model, raw = _load_checkpoint_model(args.checkpoint or cfg.checkpoint)
    mc = model.config
    for field_name, expected in (
        ("lookback", mc.lookback), ("horizon", mc.horizon),
    ):
        if getattr(cfg, field_name) != expected:
            raise ConfigError(
                f"config {field_name}={getattr(cfg, field_name)} does not match "
                f"checkpoint {field_name}={expected}"
            )
    ds, split = _load_splits(cfg)
    names, mean, std = read_stats((args.checkpoint or cfg.checkpoint) + ".stats")
    if len(names) != ds.values.shape[1]:
        raise ConfigError(
            f"config dataset has {ds.values.shape[1]} variates, checkpoint "
            f"stats have {len(names)}"
        )
    split.mean, split.std = mean, std
    windows = _window_splits(cfg, split)
    values = _test_metrics(model, cfg, ds, split, windows)
    sys.stdout.write(_format_metrics(values))
    return 0


def cmd_prune(args):
    if args.tau < 0:
        raise ConfigError("--tau must be >= 0")
    model, _ = _load_checkpoint_model(args.checkpoint)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    rows = prune(model, args.tau)
    created = []
    _write(os.path.join(out, "prune_report.txt"), format_prune_report(rows), created)
    pruned_path = os.path.join(out, "checkpoint_pruned.itfk")
    model.save(pruned_path, extra_config=[("pruned_tau", repr(args.tau))])
    sys.stdout.write(format_prune_report(rows))
    return 0


def _calibration_windows(cfg, split):
    inputs, _ = make_windows(split.train, cfg.lookback, cfg.horizon)
    if len(inputs) > MAX_CALIBRATION_WINDOWS:
        step = -(-len(inputs) // MAX_CALIBRATION_WINDOWS)
        inputs = inputs[::step]
    return inputs


def cmd_symbolify(args, emit_graph=False):
    if args.tau < 0:
        raise ConfigError("--tau must be >= 0")
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    model, _ = _load_checkpoint_model(args.checkpoint or cfg.checkpoint)
    if cfg.lookback != model.config.lookback:
        raise ConfigError(
            f"config lookback={cfg.lookback} does not match checkpoint "
            f"lookback={model.config.lookback}"
        )
    _, split = _load_splits(cfg)
    calib = _calibration_windows(cfg, split)
    out = args.out or cfg.out
    os.makedirs(out, exist_ok=True)
    prune_rows, records = generate_report(model, args.tau, args.top_m, calib)
    created = []
    _write(os.path.join(out, "prune_report.txt"), format_prune_report(prune_rows), created)
    _write(
        os.path.join(out, "symbolic_report.txt"),
        format_symbolic_report(records, args.top_m),
        created,
    )
    _write(
        os.path.join(out, "symbolic_edges.tsv"), format_machine_report(records), created
    )
    if emit_graph:
        _write(
            os.path.join(out, "graph.tsv"),
            format_graph_description(model, records),
            created,
        )
    preserved = sum(r.preserved for r in prune_rows)
    print(f"symbolified {preserved} surviving edges (tau={args.tau}, top_m={args.top_m})")
    return 0


def cmd_report(args):
    return cmd_symbolify(args, emit_graph=True)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="itfkan",
        description="KAN-based interpretable time series forecasting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="run config file")
        p.add_argument("--checkpoint", help="checkpoint path")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")

    p_train = sub.add_parser("train", help="train a model and write artifacts")
    common(p_train, config_required=True)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    common(p_eval, config_required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_prune = sub.add_parser("prune", help="prune a checkpoint by edge norm")
    common(p_prune, config_required=False)
    p_prune.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p_prune.set_defaults(func=cmd_prune)

    p_sym = sub.add_parser("symbolify", help="fit symbolic formulas to edges")
    common(p_sym, config_required=True)
    p_sym.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p_sym.add_argument("--top-m", type=int, default=DEFAULT_TOP_M, dest="top_m")
    p_sym.set_defaults(func=cmd_symbolify)

    p_rep = sub.add_parser("report", help="prune + symbolify + graph description")
    common(p_rep, config_required=True)
    p_rep.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p_rep.add_argument("--top-m", type=int, default=DEFAULT_TOP_M, dest="top_m")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
