"""Command-line entry point: ``affect-dynamics <subcommand> [options]``.

Every option can also be set in a TOML file passed with ``--config``. The
file has one table per subcommand (``[synth]``, ``[train_maxent]``, ...)
whose keys are the long option names with dashes replaced by underscores,
plus optional top-level ``lexicon`` and ``strict`` keys. Precedence, highest
first: command-line flag, config file, forecaster preset, built-in default.
Unknown tables or keys are errors.

Exit codes: 0 ok, 2 configuration error, 3 data or I/O error, 4 numeric or
budget error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import data_io
from .autoencoder import AeConfig, AeModel, train_ae
from .baselines import ChangeBaseline, fit_change_baseline, predict_changes
from .clusters import ClusterLexicon, assign_entry
from .codec import Mode
from .domain import Dataset, Entry
from .errors import AffectError, ConfigError, DataError, NumericError
from .forecaster import BEST_AROUSAL, BEST_VALENCE, ForecasterConfig, ForecasterModel, predict_dataset, train_forecaster
from .maxent import FitConfig, MaxEntModel
from .metrics import evaluate_assessment, evaluate_transition
from .pipeline import indicator_matrix, maxent_predict_assessment, maxent_predict_transition, train_maxent

log = logging.getLogger("affect_dynamics")

PRESETS = {"best-valence": BEST_VALENCE, "best-arousal": BEST_AROUSAL, "none": {}}

_FC = ForecasterConfig()
_AE = AeConfig()
_FIT = FitConfig()

# name -> (type, default, help). A default of None with "required" in the help means the option must be set.
OPTIONS = {
    "synth": {
        "output": (str, None, "dataset JSONL to write (required)"),
        "users": (int, 50, "number of users"),
        "entries_min": (int, 10, "fewest entries per user"),
        "entries_max": (int, 30, "most entries per user"),
        "seed": (int, 0, "generator seed"),
        "rho": (float, 0.5, "mean-reversion strength in [0, 1]"),
        "noise": (float, 0.5, "valence step noise (arousal uses half)"),
        "offset_scale": (float, 1.0, "spread of per-user affect offsets"),
        "essay_fraction": (float, 0.5, "share of essay entries"),
        "feature_dim": (int, 0, "length of synthetic text feature vectors (0 = none)"),
        "unseen_fraction": (float, 0.0, "share of users marked as unseen ('new-' prefix)"),
    },
    "split": {
        "data": (str, None, "dataset JSONL (required)"),
        "train_out": (str, None, "train JSONL to write (required)"),
        "dev_out": (str, None, "dev JSONL to write (required)"),
        "dev_fraction": (float, 0.2, "held-out share"),
        "mode": (str, "by_user", "by_user or within_user"),
        "seed": (int, 0, "split seed"),
    },
    "annotate": {
        "data": (str, None, "dataset JSONL (required)"),
        "output": (str, None, "annotated dataset JSONL to write (required)"),
    },
    "train_ae": {
        "data": (str, None, "dataset JSONL (required)"),
        "output": (str, None, "model JSON to write (required)"),
        "hidden": (int, _AE.hidden, "hidden width"),
        "latent": (int, _AE.latent, "latent bits"),
        "lr": (float, _AE.lr, "AdamW learning rate"),
        "weight_decay": (float, _AE.weight_decay, "AdamW decoupled weight decay"),
        "batch_size": (int, _AE.batch_size, "minibatch size"),
        "max_epochs": (int, _AE.max_epochs, "epoch cap"),
        "patience": (int, _AE.patience, "early-stopping patience"),
        "val_fraction": (float, _AE.val_fraction, "validation share"),
        "threshold": (float, _AE.threshold, "binarization threshold"),
        "seed": (int, _AE.seed, "training seed"),
    },
    "train_maxent": {
        "data": (str, None, "dataset JSONL (required)"),
        "output": (str, None, "model JSON to write (required)"),
        "mode": (str, "transition", "assessment, transition or free"),
        "latent_bits": (int, 0, "latent bits L appended to the state"),
        "ae": (str, None, "autoencoder JSON (required when L > 0)"),
        "l2": (float, 1e-3, "L2 penalty on h and J"),
        "method": (str, _FIT.method, "gradient or lbfgs"),
        "step": (float, _FIT.step, "gradient-ascent step size"),
        "tol": (float, _FIT.tol, "gradient max-norm stopping tolerance"),
        "max_iters": (int, _FIT.max_iters, "iteration cap"),
    },
    "train_forecaster": {
        "data": (str, None, "dataset JSONL (required)"),
        "output": (str, None, "model JSON to write (required)"),
        "preset": (str, "best-valence", "best-valence, best-arousal or none"),
        "target": (str, _FC.target.value, "both, valence or arousal"),
        "history_len": (int, _FC.history_len, "window length 1-4"),
        "use_text": (bool, _FC.use_text, "append precomputed text features"),
        "use_clusters": (bool, _FC.use_clusters, "append the 10 cluster bits"),
        "user_emb_dim": (int, _FC.user_emb_dim, "user embedding size"),
        "hidden": (list, list(_FC.hidden), "hidden widths, e.g. 64,32"),
        "dropout": (float, _FC.dropout, "dropout rate of hidden layers"),
        "lr": (float, _FC.lr, "AdamW learning rate"),
        "weight_decay": (float, _FC.weight_decay, "AdamW decoupled weight decay"),
        "batch_size": (int, _FC.batch_size, "minibatch size"),
        "patience": (int, _FC.patience, "early-stopping patience"),
        "max_epochs": (int, _FC.max_epochs, "epoch cap"),
        "val_fraction": (float, _FC.val_fraction, "validation share"),
        "seed": (int, _FC.seed, "training seed"),
    },
    "train_baseline": {
        "data": (str, None, "dataset JSONL (required)"),
        "output": (str, None, "model JSON to write (required)"),
        "lambda": (float, 1.0, "ridge penalty"),
        "use_features": (bool, False, "linear(features; prev) instead of linear(prev)"),
    },
    "predict": {
        "model": (str, None, "model JSON (required)"),
        "data": (str, None, "dataset JSONL (required)"),
        "output": (str, None, "predictions JSONL to write (required)"),
        "ae": (str, None, "autoencoder JSON for MaxEnt assessment models with L > 0"),
        "arousal_model": (str, None, "second forecaster whose arousal output replaces da_hat"),
    },
    "evaluate": {
        "pred": (str, None, "predictions JSONL (required)"),
        "gold": (str, None, "gold dataset JSONL (required)"),
        "output": (str, None, "report JSON to write (default: standard output)"),
        "task": (str, "auto", "assessment, transition or auto"),
    },
}
GLOBAL_KEYS = {"lexicon": str, "strict": bool}
REQUIRED = {
    "synth": ["output"], "split": ["data", "train_out", "dev_out"], "annotate": ["data", "output"],
    "train_ae": ["data", "output"], "train_maxent": ["data", "output"], "train_forecaster": ["data", "output"],
    "train_baseline": ["data", "output"], "predict": ["model", "data", "output"], "evaluate": ["pred", "gold"],
}


def _int_list(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affect-dynamics", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--lexicon", help="cluster lexicon JSON (default: shipped lexicon)")
    p.add_argument("--strict", action=argparse.BooleanOptionalAction, default=None,
                   help="reject unknown keys in dataset files")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on standard error")
    sub = p.add_subparsers(dest="command", required=True)
    for section, opts in OPTIONS.items():
        sp = sub.add_parser(section.replace("_", "-"))
        for name, (typ, default, help_) in opts.items():
            flags = ["--" + name.replace("_", "-")]
            if name == "output":
                flags.insert(0, "-o")
            if name == "latent_bits":
                flags.append("--L")
            shown = f"{help_} [default: {default}]" if default is not None else help_
            kw = dict(dest=name, default=None, help=shown)
            if typ is bool:
                sp.add_argument(*flags, action=argparse.BooleanOptionalAction, **kw)
            elif typ is list:
                sp.add_argument(*flags, type=_int_list, **kw)
            else:
                sp.add_argument(*flags, type=typ, **kw)
    return p


def _check_type(where, value, typ):
    ok = {
        bool: lambda v: isinstance(v, bool),
        int: lambda v: isinstance(v, int) and not isinstance(v, bool),
        float: lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        str: lambda v: isinstance(v, str),
        list: lambda v: isinstance(v, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
    }[typ](value)
    if not ok:
        raise ConfigError(f"config key {where} must be {typ.__name__}, got {value!r}")
    return float(value) if typ is float else value


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from None
    out = {}
    for key, value in doc.items():
        if key in GLOBAL_KEYS:
            out[key] = _check_type(key, value, GLOBAL_KEYS[key])
        elif key in OPTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"config [{key}] must be a table")
            for k, v in value.items():
                if k not in OPTIONS[key]:
                    raise ConfigError(f"unknown config key {key}.{k}")
                value[k] = _check_type(f"{key}.{k}", v, OPTIONS[key][k][0])
            out[key] = value
        else:
            raise ConfigError(f"unknown config key or table {key!r}")
    return out


def resolve(section: str, args, file_cfg: dict) -> dict:
    """Merge built-in defaults, preset, config file and flags (later wins)."""
    opts = OPTIONS[section]
    cfg = {k: v[1] for k, v in opts.items()}
    from_file = file_cfg.get(section, {})
    flags = {k: getattr(args, k) for k in opts if getattr(args, k, None) is not None}
    if section == "train_forecaster":
        preset = flags.get("preset", from_file.get("preset", cfg["preset"]))
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg.update(PRESETS[preset])
    cfg.update(from_file)
    cfg.update(flags)
    for key in REQUIRED[section]:
        if cfg.get(key) is None:
            raise ConfigError(f"{section.replace('_', '-')}: --{key.replace('_', '-')} is required")
    return cfg


def _build(cls, **kw):
    try:
        return cls(**kw)
    except (ValueError, TypeError, DataError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from None


def _read_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{what} {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_model(path, doc: dict, command: str, cfg: dict):
    doc = dict(doc)
    doc["run"] = {"command": command, "config": cfg}
    _write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def _load_data(path, ctx):
    return data_io.load(path, strict=ctx["strict"])


def _lexicon(ctx):
    return ClusterLexicon.from_json(ctx["lexicon"]) if ctx["lexicon"] else ClusterLexicon.default()


def cmd_synth(cfg, ctx):
    sc = _build(data_io.SynthConfig, n_users=cfg["users"], entries_min=cfg["entries_min"],
                entries_max=cfg["entries_max"], seed=cfg["seed"], rho=cfg["rho"], noise=cfg["noise"],
                offset_scale=cfg["offset_scale"], essay_fraction=cfg["essay_fraction"],
                feature_dim=cfg["feature_dim"], unseen_user_fraction=cfg["unseen_fraction"])
    ds = data_io.synthesize(sc, _lexicon(ctx))
    data_io.save(ds, cfg["output"])
    log.info("wrote %d users / %d entries to %s", len(ds.series), ds.n_entries, cfg["output"])


def cmd_split(cfg, ctx):
    if cfg["mode"] not in ("by_user", "within_user"):
        raise ConfigError(f"unknown split mode {cfg['mode']!r}")
    if not 0.0 < cfg["dev_fraction"] < 1.0:
        raise ConfigError("dev_fraction must lie in (0, 1)")
    train, dev = data_io.split(_load_data(cfg["data"], ctx), cfg["dev_fraction"], cfg["seed"], cfg["mode"])
    data_io.save(train, cfg["train_out"])
    data_io.save(dev, cfg["dev_out"])
    log.info("split into %d train / %d dev users", len(train.series), len(dev.series))


def cmd_annotate(cfg, ctx):
    lex = _lexicon(ctx)
    ds = _load_data(cfg["data"], ctx)
    entries = [Entry(e.user_id, e.seq, e.kind, e.text, e.state, e.features, assign_entry(e, lex).bits)
               for e in ds.entries()]
    data_io.save(Dataset.from_entries(entries, ds.feature_dim), cfg["output"])
    log.info("annotated %d entries", len(entries))


def cmd_train_ae(cfg, ctx):
    ae_cfg = _build(AeConfig, **{k: cfg[k] for k in OPTIONS["train_ae"] if k not in ("data", "output")})
    X = indicator_matrix(_load_data(cfg["data"], ctx), _lexicon(ctx))
    model = train_ae(X, ae_cfg)
    log.info("autoencoder: %d epochs, best validation MSE %.6g", len(model.history) - 1, min(model.history))
    _write_model(cfg["output"], model.to_dict(), "train-ae", cfg)


def cmd_train_maxent(cfg, ctx):
    try:
        mode = Mode(cfg["mode"])
    except ValueError:
        raise ConfigError(f"unknown layout mode {cfg['mode']!r}") from None
    if cfg["method"] not in ("gradient", "lbfgs"):
        raise ConfigError(f"unknown fit method {cfg['method']!r}")
    if cfg["latent_bits"] < 0:
        raise ConfigError("latent_bits must be >= 0")
    ae = None
    if cfg["latent_bits"] > 0:
        if cfg["ae"] is None:
            raise ConfigError("--ae is required when --latent-bits > 0")
        ae = AeModel.from_dict(_read_json(cfg["ae"], "autoencoder"))
    fit_cfg = FitConfig(cfg["step"], cfg["tol"], cfg["max_iters"], cfg["method"])
    m = train_maxent(_load_data(cfg["data"], ctx), mode, cfg["latent_bits"], ae, _lexicon(ctx), cfg["l2"], fit_cfg)
    log.info("maxent fit: %s", json.dumps(m.info, sort_keys=True))
    doc = m.to_dict()
    doc["fit"] = dict(m.info)
    _write_model(cfg["output"], doc, "train-maxent", cfg)


def cmd_train_forecaster(cfg, ctx):
    keys = [k for k in OPTIONS["train_forecaster"] if k not in ("data", "output", "preset")]
    fc = _build(ForecasterConfig, **{k: cfg[k] for k in keys})
    model = train_forecaster(_load_data(cfg["data"], ctx), fc, _lexicon(ctx))
    log.info("forecaster: %d epochs, best validation MSE %.6g", len(model.history) - 1, min(model.history))
    _write_model(cfg["output"], model.to_dict(), "train-forecaster", cfg)


def cmd_train_baseline(cfg, ctx):
    if cfg["lambda"] < 0:
        raise ConfigError("lambda must be non-negative")
    b = fit_change_baseline(_load_data(cfg["data"], ctx), cfg["use_features"], cfg["lambda"])
    _write_model(cfg["output"], b.to_dict(), "train-baseline", cfg)


def _prediction_lines(preds: dict, names):
    lines = []
    for (uid, seq), vals in sorted(preds.items()):
        obj = {"user_id": uid, "seq": seq, names[0]: vals[0], names[1]: vals[1]}
        lines.append(json.dumps(obj) + "\n")
    return "".join(lines)


def cmd_predict(cfg, ctx):
    doc = _read_json(cfg["model"], "model")
    ds = _load_data(cfg["data"], ctx)
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "maxent":
        m = MaxEntModel.from_dict(doc)
        if m.layout.mode is Mode.ASSESSMENT:
            ae = AeModel.from_dict(_read_json(cfg["ae"], "autoencoder")) if cfg["ae"] else None
            preds, names = maxent_predict_assessment(m, ds, ae, _lexicon(ctx)), ("v_hat", "a_hat")
        elif m.layout.mode is Mode.TRANSITION:
            preds, names = maxent_predict_transition(m, ds), ("dv_hat", "da_hat")
        else:
            raise ConfigError("free-layout models do not predict affect")
    elif kind == "forecaster":
        lex = _lexicon(ctx)
        preds = predict_dataset(ForecasterModel.from_dict(doc), ds, with_successor_only=False, lex=lex)
        if cfg["arousal_model"]:
            other = ForecasterModel.from_dict(_read_json(cfg["arousal_model"], "model"))
            extra = predict_dataset(other, ds, with_successor_only=False, lex=lex)
            preds = {k: (v[0], extra[k][1]) for k, v in preds.items()}
        names = ("dv_hat", "da_hat")
    elif kind == "ridge_baseline":
        preds, names = predict_changes(ChangeBaseline.from_dict(doc), ds), ("dv_hat", "da_hat")
    else:
        raise DataError(f"{cfg['model']} is not a predictive model document (kind={kind!r})")
    _write_text(cfg["output"], _prediction_lines(preds, names))
    log.info("wrote %d predictions to %s", len(preds), cfg["output"])


def _number_or_none(obj, key, lineno):
    v = obj.get(key)
    if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float))):
        raise DataError(f"line {lineno}: {key} must be a number or null")
    return v


def read_predictions(path):
    """Parse a predictions file; returns ``(task, {(user_id, seq): (x, y)})``.

    A dataset-format file (``valence``/``arousal`` keys) is read as assessment predictions.
    """
    preds, task = {}, None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path} line {lineno}: invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path} line {lineno}: expected a JSON object")
            if obj.get("format") == data_io.FORMAT_NAME:
                continue
            if "dv_hat" in obj or "da_hat" in obj:
                kind, keys = "transition", ("dv_hat", "da_hat")
            elif "v_hat" in obj or "a_hat" in obj:
                kind, keys = "assessment", ("v_hat", "a_hat")
            elif "valence" in obj:
                kind, keys = "assessment", ("valence", "arousal")
            else:
                raise DataError(f"{path} line {lineno}: no prediction fields")
            if task is None:
                task = kind
            elif task != kind:
                raise DataError(f"{path} line {lineno}: mixes assessment and transition predictions")
            uid, seq = obj.get("user_id"), obj.get("seq")
            if not isinstance(uid, str) or not isinstance(seq, int) or isinstance(seq, bool):
                raise DataError(f"{path} line {lineno}: user_id must be a string and seq an integer")
            preds[(uid, seq)] = tuple(_number_or_none(obj, k, lineno) for k in keys)
    if task is None:
        raise DataError(f"{path} holds no predictions")
    return task, preds


def cmd_evaluate(cfg, ctx):
    if cfg["task"] not in ("auto", "assessment", "transition"):
        raise ConfigError(f"unknown task {cfg['task']!r}")
    task, preds = read_predictions(cfg["pred"])
    if cfg["task"] != "auto" and cfg["task"] != task:
        raise DataError(f"{cfg['pred']} holds {task} predictions, --task says {cfg['task']}")
    gold = _load_data(cfg["gold"], ctx)
    report = (evaluate_assessment if task == "assessment" else evaluate_transition)(preds, gold)
    report.meta = {"config": cfg, "n_predictions": len(preds)}
    if cfg["output"]:
        _write_text(cfg["output"], report.to_json() + "\n")
        print(report.to_table())
    else:
        print(report.to_json())
        print(report.to_table(), file=sys.stderr)


COMMANDS = {
    "synth": cmd_synth, "split": cmd_split, "annotate": cmd_annotate, "train_ae": cmd_train_ae,
    "train_maxent": cmd_train_maxent, "train_forecaster": cmd_train_forecaster,
    "train_baseline": cmd_train_baseline, "predict": cmd_predict, "evaluate": cmd_evaluate,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    section = args.command.replace("-", "_")
    try:
        file_cfg = load_config(args.config) if args.config else {}
        ctx = {
            "lexicon": args.lexicon if args.lexicon is not None else file_cfg.get("lexicon"),
            "strict": args.strict if args.strict is not None else file_cfg.get("strict", False),
        }
        cfg = resolve(section, args, file_cfg)
        log.info("%s config %s", args.command, json.dumps({**cfg, **ctx}, sort_keys=True))
        COMMANDS[section](cfg, ctx)
    except AffectError as exc:
        category = next((c.__name__ for c in (ConfigError, DataError, NumericError) if isinstance(exc, c)), "Error")
        print(f"affect-dynamics: error [{category}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"affect-dynamics: error [IoError] {exc.strerror or exc}: {name}", file=sys.stderr)
        return 3
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
