"""Run configuration: one TOML file with data / model / training /
langevin / shift / oracle sections. Everything is validated up front and
unknown keys are rejected; the fully resolved configuration is echoed
into the run directory so a run can be reproduced from its outputs.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields

from .data import RankSpec
from .langevin import LangevinConfig
from .model import ModelConfig
from .sgds import ShiftConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    corpus: str = ""
    properties: str | None = None
    max_len: int = 73


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "run"
    data: DataConfig = field(default_factory=DataConfig)
    model: dict = field(default_factory=dict)     # ModelConfig overrides
    pretrain: TrainConfig = field(default_factory=lambda: TrainConfig(
        epochs=30, lr_prior=(7.5e-4, 7.5e-5), lr_generator=(7.5e-4, 7.5e-5)))
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(
        epochs=10, lr_prior=(3e-4, 7.5e-5), lr_generator=(3e-4, 7.5e-5),
        lr_regression=(3e-4, 7.5e-5)))
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    shift: ShiftConfig = field(default_factory=ShiftConfig)
    oracles: list = field(default_factory=list)


def _build(cls, table: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {sorted(unknown)}")
    try:
        return cls(**table)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [{where}]: {e}") from None


def _train_config(table: dict, where: str,
                  default_langevin: LangevinConfig) -> TrainConfig:
    table = dict(table)
    lang = table.pop("langevin", None)
    for key in ("lr_prior", "lr_generator", "lr_regression"):
        if key in table:
            table[key] = tuple(table[key])
    cfg = _build(TrainConfig, table, where)
    cfg.langevin = (_build(LangevinConfig, lang, f"{where}.langevin")
                    if lang is not None else default_langevin)
    return cfg


def _shift_config(table: dict, where: str,
                  default_langevin: LangevinConfig) -> ShiftConfig:
    table = dict(table)
    refit = table.pop("refit", None)
    constraint = table.pop("constraint", None)
    objective = table.pop("objective", 0)
    directions = tuple(table.pop("directions", ("max",)))
    if "delta_y" in table and table["delta_y"] is not None:
        dv = table["delta_y"]
        table["delta_y"] = tuple(dv) if isinstance(dv, list) else float(dv)
    cfg = _build(ShiftConfig, table, where)
    cfg.directions = directions
    if refit is not None:
        cfg.refit = _train_config(refit, f"{where}.refit", default_langevin)
    else:
        cfg.refit.langevin = default_langevin
    cfg.rank = _rank_spec(objective, constraint, directions, where)
    return cfg


def _rank_spec(objective: int, constraint: dict | None, directions,
               where: str) -> RankSpec:
    """Constraint thresholds are written in raw oracle units; convert to
    the internal all-maximization convention."""
    if constraint is None:
        return RankSpec(objective=int(objective))
    allowed = {"index", "threshold", "direction"}
    unknown = set(constraint) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}.constraint]: {sorted(unknown)}")
    idx = int(constraint["index"])
    thr = float(constraint["threshold"])
    direction = constraint.get("direction", "ge")
    if direction not in ("ge", "le"):
        raise ConfigError(f"constraint direction must be ge|le, got {direction!r}")
    if idx >= len(directions):
        raise ConfigError(f"constraint index {idx} out of range for "
                          f"{len(directions)} objective(s)")
    if directions[idx] == "min":
        thr = -thr
        direction = "le" if direction == "ge" else "ge"
    return RankSpec(objective=int(objective), constraint_index=idx,
                    threshold=thr, direction=direction)


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config parse error in {path}: {e}") from None
    known = {"seed", "output_dir", "data", "model", "pretrain", "finetune",
             "langevin", "shift", "oracles"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    cfg = RunConfig()
    cfg.seed = int(raw.get("seed", 0))
    cfg.output_dir = str(raw.get("output_dir", "run"))
    cfg.data = _build(DataConfig, raw.get("data", {}), "data")
    model = dict(raw.get("model", {}))
    model_field_names = {f.name for f in fields(ModelConfig)}
    unknown = set(model) - model_field_names
    if unknown:
        raise ConfigError(f"unknown key(s) in [model]: {sorted(unknown)}")
    cfg.model = model
    cfg.langevin = _build(LangevinConfig, raw.get("langevin", {}), "langevin")
    if "pretrain" in raw:
        cfg.pretrain = _train_config(raw["pretrain"], "pretrain", cfg.langevin)
    else:
        cfg.pretrain.langevin = cfg.langevin
    if "finetune" in raw:
        cfg.finetune = _train_config(raw["finetune"], "finetune", cfg.langevin)
    else:
        cfg.finetune.langevin = cfg.langevin
    cfg.shift = _shift_config(raw.get("shift", {}), "shift", cfg.langevin)
    cfg.oracles = list(raw.get("oracles", []))
    n_obj = len(cfg.shift.directions)
    if cfg.oracles and "n_objectives" not in cfg.model:
        cfg.model["n_objectives"] = n_obj
    return cfg


def model_config(cfg: RunConfig, vocab_size: int) -> ModelConfig:
    over = dict(cfg.model)
    over.setdefault("vocab_size", vocab_size)
    over.setdefault("max_len", cfg.data.max_len)
    if "sigma2" in over and isinstance(over["sigma2"], list):
        over["sigma2"] = tuple(over["sigma2"])
    try:
        return ModelConfig(**over)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [model]: {e}") from None


# -- resolved-config echo ----------------------------------------------------


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot emit {type(v)} as TOML")


def _emit_table(name: str, table: dict, out: list[str]):
    scalars = {k: v for k, v in table.items()
               if not isinstance(v, dict) and v is not None}
    subs = {k: v for k, v in table.items() if isinstance(v, dict)}
    if name:
        out.append(f"[{name}]")
    for k, v in scalars.items():
        out.append(f"{k} = {_toml_value(v)}")
    out.append("")
    for k, v in subs.items():
        _emit_table(f"{name}.{k}" if name else k, v, out)


def dump_run_config(cfg: RunConfig) -> str:
    """Resolved configuration as TOML text."""
    def train_dict(t: TrainConfig) -> dict:
        d = asdict(t)
        d["langevin"] = asdict(t.langevin)
        return d

    shift = asdict(cfg.shift)
    shift.pop("rank", None)
    rank = cfg.shift.rank
    shift["objective"] = rank.objective
    shift["refit"] = train_dict(cfg.shift.refit)
    if rank.constraint_index is not None:
        # internal convention; raw-unit form lives in the user's own file
        shift["constraint"] = {"index": rank.constraint_index,
                               "threshold": rank.threshold,
                               "direction": rank.direction}
    shift["directions"] = list(cfg.shift.directions)
    if isinstance(shift.get("delta_y"), tuple):
        shift["delta_y"] = list(shift["delta_y"])

    out: list[str] = []
    _emit_table("", {"seed": cfg.seed, "output_dir": cfg.output_dir}, out)
    _emit_table("data", asdict(cfg.data), out)
    _emit_table("model", dict(cfg.model), out)
    _emit_table("langevin", asdict(cfg.langevin), out)
    _emit_table("pretrain", train_dict(cfg.pretrain), out)
    _emit_table("finetune", train_dict(cfg.finetune), out)
    _emit_table("shift", shift, out)
    for o in cfg.oracles:
        out.append("[[oracles]]")
        for k, v in o.items():
            if isinstance(v, dict):
                out.append(f"{k} = {{" + ", ".join(
                    f"{kk} = {_toml_value(vv)}" for kk, vv in v.items()) + "}")
            else:
                out.append(f"{k} = {_toml_value(v)}")
        out.append("")
    return "\n".join(out)
