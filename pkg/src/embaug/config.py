"""Strict experiment configuration: `key = value` lines, `[section]`
headers, `#` comments. Every key must be registered, typing comes from the
registry (never inferred from the value), and duplicates are errors. The
goal is that a typo in a config file fails loudly with a line number
instead of silently running the default.
"""
import os
from dataclasses import dataclass, field, fields, replace

from .augment import SETUPS
from .transfer import SCENARIOS, ExperimentConfig


class ConfigError(ValueError):
    pass


def _parse_bool(text):
    if text in ("true", "yes", "on"):
        return True
    if text in ("false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_SCALARS = {"int": int, "real": float, "string": str, "bool": _parse_bool}


@dataclass(frozen=True)
class _Key:
    """One registered config key: its type, the ExperimentConfig field it
    feeds, and an optional extra validator."""
    type: str                  # int | real | string | bool | int-list | ...
    dest: str = ""             # ExperimentConfig field; "" = runner-level
    choices: tuple = ()
    length: int = 0            # exact list length, 0 = any

    def convert(self, raw: str, where: str):
        if self.type.endswith("-list"):
            elem = _SCALARS[self.type[:-5]]
            items = [s.strip() for s in raw.split(",")]
            if items == [""]:
                items = []
            try:
                vals = tuple(elem(s) for s in items)
            except ValueError:
                raise ConfigError(f"{where}: expects {self.type}, got {raw!r}")
            if self.length and len(vals) != self.length:
                raise ConfigError(f"{where}: expects {self.length} items, "
                                  f"got {len(vals)}")
        else:
            try:
                vals = _SCALARS[self.type](raw)
            except ValueError:
                raise ConfigError(f"{where}: expects {self.type}, got {raw!r}")
        check = vals if isinstance(vals, tuple) else (vals,)
        if self.choices:
            for v in check:
                if v not in self.choices:
                    raise ConfigError(f"{where}: {v!r} not one of "
                                      f"{sorted(self.choices)}")
        return vals


KEYS = {
    "seed": _Key("int"),
    "seeds": _Key("int-list", dest="seeds"),
    "threads": _Key("int"),
    "out_dir": _Key("string", dest="out_dir"),
    "augset": _Key("string", dest="base_setup", choices=SETUPS),
    "scenarios": _Key("string-list", dest="scenarios", choices=SCENARIOS),
    "data.seed": _Key("int", dest="data_seed"),
    "data.base_shapes": _Key("string-list", dest="base_shapes"),
    "data.target_shapes": _Key("string-list", dest="target_shapes"),
    "data.base_per_class": _Key("int", dest="base_per_class"),
    "data.base_eval_per_class": _Key("int", dest="base_eval_per_class"),
    "data.target_per_class": _Key("int", dest="target_per_class"),
    "data.target_eval_per_class": _Key("int", dest="target_eval_per_class"),
    "data.image_size": _Key("int-list", dest="image_size", length=3),
    "data.pos_jitter": _Key("real", dest="pos_jitter"),
    "data.scale_range": _Key("real-list", dest="scale_range", length=2),
    "data.intensity_range": _Key("real-list", dest="intensity_range", length=2),
    "data.noise_std": _Key("real", dest="noise_std"),
    "data.train_mirror_rate": _Key("real", dest="train_mirror_rate"),
    "base.epochs": _Key("int", dest="base_epochs"),
    "base.lr": _Key("real", dest="base_lr"),
    "base.warmup_epochs": _Key("real", dest="base_warmup_epochs"),
    "base.schedule": _Key("string", dest="base_schedule",
                          choices=("constant", "cosine")),
    "transfer.epochs": _Key("int", dest="transfer_epochs"),
    "transfer.lr": _Key("real", dest="transfer_lr"),
    "transfer.hidden": _Key("int-list", dest="transfer_hidden"),
    "omega.epochs": _Key("int", dest="omega_epochs"),
    "omega.lr": _Key("real", dest="omega_lr"),
    "optim.momentum": _Key("real", dest="momentum"),
    "optim.batch_size": _Key("int", dest="batch_size"),
}


@dataclass
class RunConfig:
    subcommand: str = ""
    config_path: str = ""
    seed: int | None = None
    threads: int = 1
    out_dir: str = "out"
    overrides: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)  # typed, keyed as in KEYS

    def experiment(self) -> ExperimentConfig:
        """Materialize the experiment settings, file values first, then
        --set overrides, then the runner-level seed/out_dir fallbacks."""
        merged = {**self.values, **self.overrides}
        kw = {}
        for key, val in merged.items():
            dest = KEYS[key].dest
            if dest:
                kw[dest] = val
        cfg = replace(ExperimentConfig(), **kw)
        if "seeds" not in merged and self.seed is not None:
            cfg = replace(cfg, seeds=(self.seed,))
        if "out_dir" not in merged:
            cfg = replace(cfg, out_dir=self.out_dir)
        return cfg


def parse_assignment(line: str, lineno: int, section: str):
    """Split one `key = value` line; returns (full_key, keydef, raw value).
    The column in syntax errors is 1-based."""
    if "=" not in line:
        raise ConfigError(f"line {lineno}, column {len(line) + 1}: "
                          "expected 'key = value'")
    name, _, raw = line.partition("=")
    name = name.strip()
    raw = raw.strip()
    if not name:
        raise ConfigError(f"line {lineno}, column 1: missing key before '='")
    full = f"{section}.{name}" if section else name
    if full not in KEYS:
        hint = f" in section [{section}]" if section else ""
        raise ConfigError(f"line {lineno}: unknown key {name!r}{hint}")
    return full, KEYS[full], raw


def parse_config(text: str) -> RunConfig:
    """Parse config text. Unknown keys, duplicate keys, bad section
    headers, and type mismatches all raise ConfigError with the line."""
    rc = RunConfig()
    section = ""
    seen = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}, column {len(line)}: "
                                  "unterminated section header")
            section = line[1:-1].strip()
            if not section or not section.isidentifier():
                raise ConfigError(f"line {lineno}: bad section name {section!r}")
            continue
        full, keydef, raw = parse_assignment(line, lineno, section)
        if full in seen:
            raise ConfigError(f"duplicate key {full!r} "
                              f"(lines {seen[full]} and {lineno})")
        seen[full] = lineno
        value = keydef.convert(raw, f"line {lineno}: key {full!r}")
        if full == "seed":
            rc.seed = value
        elif full == "threads":
            rc.threads = value
        else:
            rc.values[full] = value
        if full == "out_dir":
            rc.out_dir = value
    return rc


def parse_overrides(pairs) -> dict:
    """Typed `--set key=value` pairs; later repeats win. Keys use the same
    dotted names as the file."""
    out = {}
    for i, pair in enumerate(pairs, start=1):
        if "=" not in pair:
            raise ConfigError(f"override {i}: expected key=value, got {pair!r}")
        name, _, raw = pair.partition("=")
        name = name.strip()
        if name not in KEYS:
            raise ConfigError(f"override {i}: unknown key {name!r}")
        out[name] = KEYS[name].convert(raw.strip(), f"override {name!r}")
    return out


def load_config(path: str, overrides=(), subcommand: str = "",
                out_dir: str | None = None) -> RunConfig:
    """File + CLI merge. EMBAUG_SEED supplies the seed when neither the
    file nor the environment user set one."""
    with open(path, encoding="utf-8") as fh:
        rc = parse_config(fh.read())
    rc.config_path = path
    rc.subcommand = subcommand
    rc.overrides = parse_overrides(overrides)
    if rc.seed is None and os.environ.get("EMBAUG_SEED"):
        rc.seed = int(os.environ["EMBAUG_SEED"])
    if out_dir is not None:
        rc.out_dir = out_dir
        rc.values.pop("out_dir", None)
    return rc


_EXPERIMENT_FIELDS = {f.name for f in fields(ExperimentConfig)}
for _k, _v in KEYS.items():
    assert _v.dest == "" or _v.dest in _EXPERIMENT_FIELDS, _k
