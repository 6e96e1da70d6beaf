"""Flat text configuration (INI sections, ``key = value``) for experiments.

Every experiment field lives in the schema below with its default and a
one-line description; unknown sections or keys are rejected so that typos
fail loudly.  ``load``/``save`` round-trip losslessly, and ``template``
emits a fully commented default file.
"""

from __future__ import annotations

import configparser
import io
from pathlib import Path

import numpy as np

from .channel import Scene
from .geometry import ArrayGeometry
from .training import ExperimentConfig, LossWeights

# section -> key -> (type tag, default, description)
#   type tags: int, float, str, bool, opt_int, opt_float
SCHEMA = {
    "scene": {
        "grid_rows": ("int", 40, "user grid rows"),
        "grid_cols": ("int", 40, "user grid columns"),
        "pitch": ("float", 0.25, "grid spacing in meters"),
        "bs_x": ("float", 5.0, "BS x position (m)"),
        "bs_y": ("float", -10.0, "BS y position (m)"),
        "bs_z": ("float", 10.0, "BS z position (m)"),
        "n_scatterers": ("int", 5, "fixed single-bounce scatterers"),
        "scene_seed": ("int", 7, "seed for scatterer placement"),
        "carrier_wavelength": ("float", 2.0, "wavelength (m) driving per-path phase"),
        "bandwidth": ("float", 1.0e8, "signal bandwidth (Hz)"),
        "reflection_gain": ("float", 0.6, "bounce-path gain factor"),
        "include_los": ("bool", True, "include the line-of-sight path"),
    },
    "array": {
        "n_x": ("int", 4, "antennas along x"),
        "n_y": ("int", 4, "antennas along y"),
        "n_z": ("int", 1, "antennas along z"),
        "d_x": ("float", 0.5, "x spacing in wavelengths"),
        "d_y": ("float", 0.5, "y spacing in wavelengths"),
        "d_z": ("float", 0.5, "z spacing in wavelengths"),
        "phase_convention": ("str", "standard_2pi", "standard_2pi or paper_literal"),
    },
    "selection": {
        "m_t": ("int", 4, "antennas to select"),
        "asn_layers": ("int", 3, "dense layers in the selection head"),
        "asn_width": ("opt_int", None, "hidden width (blank: N_t)"),
    },
    "network": {
        "aden_width": ("opt_int", None, "subnet width (blank: task default)"),
        "oversampling": ("int", 1, "codebook oversampling per axis"),
    },
    "loss": {
        "alpha1": ("float", 1.0, "2-norm selection penalty weight"),
        "alpha2": ("float", 1.0, "3-norm selection penalty weight"),
        "beta1": ("float", 1.0, "coarse reconstruction weight"),
        "beta2": ("float", 10.0, "fine reconstruction weight"),
        "rho0": ("float", 5.0, "initial extrapolation loss scale"),
        "rho_factor": ("float", 5.0, "per-epoch scale multiplier"),
        "rho_cap": ("float", 5.0**8, "scale ceiling"),
    },
    "train": {
        "task": ("str", "channel", "channel, beam or ccm"),
        "scheme": ("str", "asn_aden", "asn_aden, asn_dnn, uniform_aden or uniform_dnn"),
        "lr": ("float", 1e-3, "Adam learning rate"),
        "adam_beta1": ("float", 0.9, "Adam first-moment decay"),
        "adam_beta2": ("float", 0.999, "Adam second-moment decay"),
        "adam_eps": ("float", 1e-8, "Adam epsilon"),
        "batch_size": ("int", 64, "mini-batch size"),
        "epochs": ("int", 30, "training epochs"),
        "split_fraction": ("float", 0.8, "training share of the dataset"),
        "seed": ("int", 0, "run seed"),
        "snr_db": ("opt_float", None, "input corruption SNR (blank: clean)"),
        "block_rows": ("int", 16, "covariance blocks per column"),
        "block_cols": ("int", 16, "covariance blocks per row"),
    },
}


class ConfigError(ValueError):
    pass


class RunConfig:
    """Validated flat configuration; values live in ``self.values[sec][key]``."""

    def __init__(self, values=None):
        self.values = {
            sec: {key: spec[1] for key, spec in keys.items()} for sec, keys in SCHEMA.items()
        }
        if values:
            for sec, keys in values.items():
                for key, val in keys.items():
                    self.set(sec, key, val)

    def get(self, sec, key):
        return self.values[sec][key]

    def set(self, sec, key, value):
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown configuration key [{sec}] {key}")
        self.values[sec][key] = value

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values


def _parse_value(tag, raw, where):
    raw = raw.strip()
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "str":
            return raw
        if tag == "bool":
            if raw.lower() in ("true", "yes", "1"):
                return True
            if raw.lower() in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if tag == "opt_int":
            return None if raw == "" else int(raw)
        if tag == "opt_float":
            return None if raw == "" else float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {where}: {raw!r}") from exc
    raise ConfigError(f"unknown type tag {tag}")


def _format_value(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def loads(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparsable configuration: {exc}") from exc
    cfg = RunConfig()
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown configuration section [{sec}]")
        for key, raw in parser[sec].items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown configuration key [{sec}] {key}")
            cfg.values[sec][key] = _parse_value(SCHEMA[sec][key][0], raw, f"[{sec}] {key}")
    return cfg


def load(path) -> RunConfig:
    return loads(Path(path).read_text())


def dumps(cfg: RunConfig) -> str:
    out = io.StringIO()
    for sec, keys in SCHEMA.items():
        out.write(f"[{sec}]\n")
        for key in keys:
            out.write(f"{key} = {_format_value(cfg.values[sec][key])}\n")
        out.write("\n")
    return out.getvalue()


def save(cfg: RunConfig, path):
    Path(path).write_text(dumps(cfg))


def template() -> str:
    """Default configuration with every key documented."""
    out = io.StringIO()
    for sec, keys in SCHEMA.items():
        out.write(f"[{sec}]\n")
        for key, (tag, default, doc) in keys.items():
            out.write(f"# {doc}\n")
            out.write(f"{key} = {_format_value(default)}\n")
        out.write("\n")
    return out.getvalue()


def to_experiment(cfg: RunConfig) -> ExperimentConfig:
    v = cfg.values
    scene = Scene(
        grid_rows=v["scene"]["grid_rows"],
        grid_cols=v["scene"]["grid_cols"],
        pitch=v["scene"]["pitch"],
        bs_position=np.array([v["scene"]["bs_x"], v["scene"]["bs_y"], v["scene"]["bs_z"]]),
        n_scatterers=v["scene"]["n_scatterers"],
        seed=v["scene"]["scene_seed"],
        carrier_wavelength=v["scene"]["carrier_wavelength"],
        bandwidth=v["scene"]["bandwidth"],
        reflection_gain=v["scene"]["reflection_gain"],
        include_los=v["scene"]["include_los"],
    )
    geom = ArrayGeometry(
        n_x=v["array"]["n_x"],
        n_y=v["array"]["n_y"],
        n_z=v["array"]["n_z"],
        d_x=v["array"]["d_x"],
        d_y=v["array"]["d_y"],
        d_z=v["array"]["d_z"],
        phase_convention=v["array"]["phase_convention"],
    )
    weights = LossWeights(
        alpha1=v["loss"]["alpha1"],
        alpha2=v["loss"]["alpha2"],
        beta1=v["loss"]["beta1"],
        beta2=v["loss"]["beta2"],
        rho0=v["loss"]["rho0"],
        rho_factor=v["loss"]["rho_factor"],
        rho_cap=v["loss"]["rho_cap"],
    )
    return ExperimentConfig(
        task=v["train"]["task"],
        scheme=v["train"]["scheme"],
        m_t=v["selection"]["m_t"],
        geom=geom,
        scene=scene,
        weights=weights,
        oversampling=v["network"]["oversampling"],
        aden_width=v["network"]["aden_width"],
        asn_width=v["selection"]["asn_width"],
        asn_layers=v["selection"]["asn_layers"],
        lr=v["train"]["lr"],
        adam_beta1=v["train"]["adam_beta1"],
        adam_beta2=v["train"]["adam_beta2"],
        adam_eps=v["train"]["adam_eps"],
        batch_size=v["train"]["batch_size"],
        epochs=v["train"]["epochs"],
        split_fraction=v["train"]["split_fraction"],
        seed=v["train"]["seed"],
        snr_db=v["train"]["snr_db"],
        block_rows=v["train"]["block_rows"],
        block_cols=v["train"]["block_cols"],
    )
