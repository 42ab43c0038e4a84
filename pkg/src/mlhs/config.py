"""Sectioned key-value experiment configuration.

Uses INI syntax via configparser. Every key has a default; unknown sections
or keys are rejected so typos fail loudly. ``default_config_text`` emits the
full default file for --print-defaults.
"""

import configparser
import io
from dataclasses import dataclass, field, fields

from .errors import ConfigError

EXPERIMENTS = ("linear_toy", "rd_sweep", "ns_sweep")


@dataclass
class ExperimentConfig:
    # [experiment]
    experiment: str = "linear_toy"
    data_dir: str = "data"
    out_dir: str = "out"
    horizon: int = 500          # hybrid-simulation steps for the PDE sweeps
    k_threshold: float = 100.0  # stopping-time threshold K
    n_seeds: int = 3
    # [linear]
    linear_base_seed: int = 179
    linear_seeds: int = 10
    linear_steps: int = 50
    linear_sigma: float = 0.001
    lambda_grid: tuple = (1.0, 1e2, 1e4, 1e6)
    # [rd]
    rd_gammas: tuple = (0.05, 0.25)
    rd_gammas_full: tuple = (0.05, 0.10, 0.15, 0.20, 0.25)
    rd_coarse_n: int = 32
    rd_fine_n: int = 64
    rd_n_traj: int = 8
    rd_n_steps: int = 240
    rd_n_discard: int = 200
    rd_radius: int = 2
    rd_hidden: int = 64
    rd_epochs: int = 150
    rd_lr: float = 1e-3
    rd_batch: int = 40
    # [ns]
    ns_re: tuple = (100.0, 200.0)
    ns_re_full: tuple = (100.0, 200.0, 300.0, 400.0, 500.0)
    ns_ny: int = 16
    ns_n_traj: int = 2
    ns_n_steps: int = 400
    ns_n_discard: int = 100
    ns_hidden: int = 128
    ns_epochs: int = 800
    # dt multiplier on the stability estimate, one entry per ns_re value
    # (the last entry covers any extra Reynolds numbers); values above 1
    # run the hybrid in the marginally stable regime
    ns_dt_scale: tuple = (2.0, 2.5)
    # [training]
    lr: float = 1e-4
    epochs: int = 2000
    lambda_: float = 10.0
    objectives: tuple = ("OLS", "mOLS", "aOLS", "TR")
    latent_grid: tuple = (4, 8, 16, 32)
    ae_epochs: int = 2000

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        for name in ("lambda_grid", "rd_gammas", "ns_re", "objectives",
                     "latent_grid", "ns_dt_scale"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be non-empty")
        if any(s <= 0 for s in self.ns_dt_scale):
            raise ConfigError("ns_dt_scale entries must be positive")
        if self.horizon < 1 or self.n_seeds < 1:
            raise ConfigError("horizon and n_seeds must be >= 1")
        if self.k_threshold <= 0:
            raise ConfigError("k_threshold must be positive")
        if self.rd_fine_n != 2 * self.rd_coarse_n:
            raise ConfigError("rd_fine_n must equal 2 * rd_coarse_n")
        return self


_SECTION_KEYS = {
    "experiment": {
        "experiment": str, "data_dir": str, "out_dir": str, "horizon": int,
        "k_threshold": float, "n_seeds": int,
    },
    "linear": {
        "linear_base_seed": int, "linear_seeds": int, "linear_steps": int,
        "linear_sigma": float,
        "lambda_grid": "floats",
    },
    "rd": {
        "rd_gammas": "floats", "rd_gammas_full": "floats", "rd_coarse_n": int,
        "rd_fine_n": int, "rd_n_traj": int, "rd_n_steps": int,
        "rd_n_discard": int, "rd_radius": int, "rd_hidden": int,
        "rd_epochs": int, "rd_lr": float, "rd_batch": int,
    },
    "ns": {
        "ns_re": "floats", "ns_re_full": "floats", "ns_ny": int,
        "ns_n_traj": int, "ns_n_steps": int, "ns_n_discard": int,
        "ns_hidden": int, "ns_epochs": int, "ns_dt_scale": "floats",
    },
    "training": {
        "lr": float, "epochs": int, "lambda_": float, "objectives": "strs",
        "latent_grid": "ints", "ae_epochs": int,
    },
}


def _parse_value(raw, kind):
    if kind is str:
        return raw.strip()
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if kind == "floats":
        return tuple(float(p) for p in parts)
    if kind == "ints":
        return tuple(int(p) for p in parts)
    return tuple(parts)


def load_config(path=None, text=None):
    """Config from a file path or literal text; defaults fill missing keys."""
    cfg = ExperimentConfig()
    if path is None and text is None:
        return cfg.validate()
    parser = configparser.ConfigParser()
    try:
        if text is not None:
            parser.read_string(text)
        else:
            with open(path) as fh:
                parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        keys = _SECTION_KEYS[section]
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            try:
                setattr(cfg, key, _parse_value(raw, keys[key]))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return cfg.validate()


def default_config_text():
    cfg = ExperimentConfig()
    buf = io.StringIO()
    for section, keys in _SECTION_KEYS.items():
        buf.write(f"[{section}]\n")
        for key in keys:
            val = getattr(cfg, key)
            if isinstance(val, tuple):
                val = ", ".join(format(v, "g") if isinstance(v, float) else str(v)
                                for v in val)
            buf.write(f"{key} = {val}\n")
        buf.write("\n")
    return buf.getvalue()
