"""Run configuration files.

Flat ``key = value`` files with ``[data]``, ``[model]``, ``[adam]`` and
``[run]`` sections, read with :mod:`configparser`. Named presets holding the
published Adam settings ship inside the package.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .model import Architecture
from .states import StateFamily
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    family: StateFamily
    train_path: Path
    test_path: Path | None
    arch: Architecture
    train: TrainConfig
    source: str

    def manifest_lines(self) -> list[str]:
        t = self.train
        return [
            f"source = {self.source}",
            f"family = {self.family.value}",
            f"train_data = {self.train_path}",
            f"test_data = {self.test_path if self.test_path else ''}",
            f"arch = {self.arch.describe()}",
            f"lr = {t.lr!r}",
            f"beta1 = {t.beta1!r}",
            f"beta2 = {t.beta2!r}",
            f"epsilon = {t.epsilon!r}",
            f"batch_size = {t.batch_size}",
            f"epochs = {t.epochs}",
            f"seed = {t.seed}",
        ]


def preset_names() -> list[str]:
    folder = resources.files("bcnn") / "presets"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".ini"))


def preset_text(name: str) -> str:
    path = resources.files("bcnn") / "presets" / f"{name}.ini"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return path.read_text()


def _bool(sec, key, default=False) -> bool:
    try:
        return sec.getboolean(key, fallback=default)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key}: {exc}") from None


def parse_config(text: str, base_dir: Path, source: str, seed: int | None = None) -> RunConfig:
    """Build a ``RunConfig``; relative data paths resolve against ``base_dir``.

    A seed must come from the file or from ``seed``.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for section in ("data", "model", "adam"):
        if not cp.has_section(section):
            raise ConfigError(f"missing [{section}] section")
    data, model, adam = cp["data"], cp["model"], cp["adam"]
    try:
        family = StateFamily.parse(data["family"])
        train_path = base_dir / data["train"]
        test_path = base_dir / data["test"] if data.get("test") else None
        hidden = tuple(int(x) for x in model.get("hidden", "1024").replace(",", " ").split())
        arch = Architecture(
            m=model.getint("m"),
            n1=model.getint("n1"),
            n2=model.getint("n2"),
            hidden=hidden,
            fix_identity=_bool(model, "fix_identity"),
            linear_first_layer=_bool(model, "linear_first_layer"),
        )
        if seed is None:
            if not cp.has_option("run", "seed"):
                raise ConfigError("no seed given: set [run] seed or pass --seed")
            seed = cp.getint("run", "seed")
        cfg = TrainConfig(
            lr=adam.getfloat("lr"),
            beta1=adam.getfloat("beta1"),
            beta2=adam.getfloat("beta2"),
            epsilon=adam.getfloat("epsilon", fallback=1e-8),
            batch_size=adam.getint("batch_size"),
            epochs=adam.getint("epochs"),
            seed=seed,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return RunConfig(family, train_path, test_path, arch, cfg, source)


def load_config(path: str | Path | None = None, preset: str | None = None, seed: int | None = None) -> RunConfig:
    if (path is None) == (preset is None):
        raise ConfigError("give exactly one of a config path or a preset name")
    if preset is not None:
        return parse_config(preset_text(preset), Path.cwd(), f"preset:{preset}", seed)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent, str(path), seed)
