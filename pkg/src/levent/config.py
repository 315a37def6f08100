"""Flat ``key = value`` experiment files and the figure presets.

Keys carry their units (``g_over_omega_m``, ``radius_m``); dimensionless
rates are in units of omega_m, physical inputs in SI. ``#`` starts a comment.
Every :class:`ExperimentSpec` serializes to a file that parses back to an
equal spec.
"""
import math
from dataclasses import dataclass, fields, replace

from .analysis import METRICS, Axis, Numerics
from .errors import ConfigError
from .model import ModelConfig, PhysicalParams, derive_physical

MODES = ("steady", "trajectory", "ensemble", "scan", "reproduce")
FORMATS = ("csv", "json")

# config key -> ModelConfig field
MODEL_KEYS = {
    "alpha": "alpha",
    "Omega_over_omega_m": "Omega",
    "g_over_omega_m": "g",
    "eta": "eta",
    "kba_over_omega_x": "kba_ratio",
    "kth_over_omega_m": "kth",
    "gamma_over_omega_m": "gamma",
    "strategy": "strategy",
    "charge_ratio": "charge_ratio",
    "q_over_omega_m": "q",
    "p_over_omega_m": "p_cost",
}
FIELD_KEYS = {v: k for k, v in MODEL_KEYS.items()}

# config key -> PhysicalParams field; charges are split in two keys
PHYSICAL_KEYS = {
    "radius_m": "radius",
    "density_kg_per_m3": "density",
    "charge1_e": None,
    "charge2_e": None,
    "separation_m": "separation",
    "omega_m_rad_per_s": "trap_frequency",
    "temperature_K": "temperature",
    "backaction_over_omega_x": "backaction_ratio",
    "damping_over_omega_m": "damping_ratio",
    "thermal_over_omega_m": "thermal_ratio",
}

NUMERIC_KEYS = {
    "steps_per_period": int,
    "tol": float,
    "max_periods": int,
    "gain_mode": str,
}

RUN_KEYS = {
    "n_periods": int,
    "t_end_periods": float,
    "n_trajectories": int,
    "seed": int,
    "stride": int,
    "record_form": str,
    "dump_trajectories": bool,
    "dt": float,
}


@dataclass(frozen=True)
class RunSettings:
    n_periods: int = 3
    t_end_periods: float = 5.0
    n_trajectories: int = 2000
    seed: int = 0
    stride: int = 1
    record_form: str = "consistent"
    dump_trajectories: bool = False
    dt: float = None

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("must be > 0", key="dt")
        for name in ("n_periods", "n_trajectories", "stride"):
            if getattr(self, name) < 1:
                raise ConfigError("must be >= 1", key=name)
        if self.t_end_periods <= 0:
            raise ConfigError("must be > 0", key="t_end_periods")
        if self.seed < 0:
            raise ConfigError("must be >= 0", key="seed")
        if self.record_form not in ("consistent", "half"):
            raise ConfigError("must be 'consistent' or 'half'", key="record_form")


@dataclass(frozen=True)
class ScanSettings:
    metric: str
    x: Axis
    y: Axis = None

    def __post_init__(self):
        allowed = METRICS + ("squeezing",)
        if self.metric not in allowed:
            raise ConfigError(f"must be one of {allowed}", key="metric")
        if self.metric == "squeezing" and self.x.name not in ("g", "alpha"):
            raise ConfigError("squeezing sweeps run over g or alpha", key="scan_x")
        if self.metric != "squeezing" and self.y is None:
            raise ConfigError("a 2-D scan needs scan_y", key="scan_y")


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str
    model: ModelConfig = ModelConfig()
    physical: PhysicalParams = None
    numerics: Numerics = Numerics()
    run: RunSettings = RunSettings()
    scan: ScanSettings = None
    target: str = None
    out_dir: str = None
    fmt: str = "csv"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"must be one of {MODES}, got {self.mode!r}", key="mode")
        if self.fmt not in FORMATS:
            raise ConfigError(f"must be one of {FORMATS}", key="format")
        if self.mode == "scan" and self.scan is None:
            raise ConfigError("scan mode needs scan_x, scan_y and metric", key="scan_x")
        if self.mode == "reproduce" and self.target is None:
            raise ConfigError("reproduce mode needs a target", key="target")

    def model_config(self):
        """Effective dimensionless parameters, derived from SI inputs when present."""
        if self.physical is None:
            return self.model
        cfg, _ = derive_physical(self.physical, template=self.model)
        return cfg


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _format_axis(axis):
    return f"{FIELD_KEYS[axis.name]}:{axis.start!r}:{axis.stop!r}:{axis.num}"


def serialize(spec):
    """Render ``spec`` as a config file with every key written out."""
    lines = [f"mode = {spec.mode}"]
    if spec.target is not None:
        lines.append(f"target = {spec.target}")
    lines.append("")
    lines.append("# model, in units of omega_m")
    for f in fields(ModelConfig):
        lines.append(f"{FIELD_KEYS[f.name]} = {_format_value(getattr(spec.model, f.name))}")
    if spec.physical is not None:
        p = spec.physical
        lines.append("")
        lines.append("# physical inputs, SI")
        for key, name in PHYSICAL_KEYS.items():
            if key == "charge1_e":
                value = p.charges[0]
            elif key == "charge2_e":
                value = p.charges[1]
            else:
                value = getattr(p, name)
            if value is not None:
                lines.append(f"{key} = {_format_value(value)}")
    lines.append("")
    lines.append("# numerics")
    for key in NUMERIC_KEYS:
        lines.append(f"{key} = {_format_value(getattr(spec.numerics, key))}")
    for key in RUN_KEYS:
        value = getattr(spec.run, key)
        if value is not None:
            lines.append(f"{key} = {_format_value(value)}")
    if spec.scan is not None:
        lines.append("")
        lines.append(f"metric = {spec.scan.metric}")
        lines.append(f"scan_x = {_format_axis(spec.scan.x)}")
        if spec.scan.y is not None:
            lines.append(f"scan_y = {_format_axis(spec.scan.y)}")
    lines.append("")
    lines.append(f"format = {spec.fmt}")
    if spec.out_dir is not None:
        lines.append(f"out = {spec.out_dir}")
    return "\n".join(lines) + "\n"


def _convert(key, raw, kind, line):
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError(raw)
            return int(value)
        if kind is float:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError(raw)
            return value
        return raw
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {raw!r}", key=key, line=line) from None


def _parse_axis(key, raw, line):
    parts = raw.split(":")
    if len(parts) != 4 or parts[0] not in MODEL_KEYS:
        raise ConfigError("expected <param_key>:<start>:<stop>:<num>, e.g. g_over_omega_m:-0.3:0.3:41",
                          key=key, line=line)
    try:
        return Axis(MODEL_KEYS[parts[0]], float(parts[1]), float(parts[2]),
                    _convert(key, parts[3], int, line))
    except ValueError as exc:
        raise ConfigError(str(exc), key=key, line=line) from None


def _read_pairs(text):
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("missing key", line=lineno)
        if key in pairs:
            raise ConfigError("duplicate key", key=key, line=lineno)
        pairs[key] = (value, lineno)
    return pairs


def _build(cls, kwargs, lines, keymap=None):
    # re-raise dataclass validation errors with the config key and its line
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        key = (keymap or {}).get(exc.key, exc.key)
        msg = str(exc).replace(f"{exc.key}:", f"{key}:", 1)
        raise ConfigError(msg, key=key, line=lines.get(exc.key)) from None


def parse(text):
    """Parse a config file into an :class:`ExperimentSpec`.

    Raises
    ------
    ConfigError
        Naming the key, its line and the violated constraint.
    """
    pairs = _read_pairs(text)
    known = (set(MODEL_KEYS) | set(PHYSICAL_KEYS) | set(NUMERIC_KEYS) | set(RUN_KEYS)
             | {"mode", "target", "metric", "scan_x", "scan_y", "format", "out"})
    for key, (_, lineno) in pairs.items():
        if key not in known:
            raise ConfigError("unknown key", key=key, line=lineno)

    model_kw, model_lines = {}, {}
    for key, name in MODEL_KEYS.items():
        if key in pairs:
            raw, lineno = pairs[key]
            kind = str if name == "strategy" else float
            model_kw[name] = _convert(key, raw, kind, lineno)
            model_lines[name] = lineno
    model = _build(ModelConfig, model_kw, model_lines, FIELD_KEYS)

    physical = None
    if any(key in pairs for key in PHYSICAL_KEYS):
        phys_kw, phys_lines = {}, {}
        charges = list(PhysicalParams().charges)
        for key, name in PHYSICAL_KEYS.items():
            if key not in pairs:
                continue
            raw, lineno = pairs[key]
            if name is None:
                charges[0 if key == "charge1_e" else 1] = _convert(key, raw, int, lineno)
                phys_lines["charges"] = lineno
            else:
                phys_kw[name] = _convert(key, raw, float, lineno)
                phys_lines[name] = lineno
        phys_kw["charges"] = tuple(charges)
        phys_kw["eta"] = model.eta
        keymap = {name: key for key, name in PHYSICAL_KEYS.items() if name}
        keymap["charges"] = "charge1_e"
        physical = _build(PhysicalParams, phys_kw, phys_lines, keymap)

    def section(keys):
        kw, lines = {}, {}
        for key, kind in keys.items():
            if key in pairs:
                raw, lineno = pairs[key]
                kw[key] = _convert(key, raw, kind, lineno)
                lines[key] = lineno
        return kw, lines

    numerics = _build(Numerics, *section(NUMERIC_KEYS))
    run = _build(RunSettings, *section(RUN_KEYS))

    scan = None
    if "scan_x" in pairs or "metric" in pairs:
        if "scan_x" not in pairs:
            raise ConfigError("metric given without scan_x", key="scan_x")
        x = _parse_axis("scan_x", *pairs["scan_x"])
        y = _parse_axis("scan_y", *pairs["scan_y"]) if "scan_y" in pairs else None
        metric, lineno = pairs.get("metric", ("conditional_EN", None))
        scan = _build(ScanSettings, {"metric": metric, "x": x, "y": y},
                      {"metric": lineno, "scan_x": pairs["scan_x"][1]})

    top = {"mode": pairs.get("mode", ("steady", None))[0]}
    top_lines = {"mode": pairs.get("mode", (None, None))[1]}
    for key, attr in (("target", "target"), ("out", "out_dir"), ("format", "fmt")):
        if key in pairs:
            top[attr] = pairs[key][0]
            top_lines[key] = pairs[key][1]
    try:
        return ExperimentSpec(model=model, physical=physical, numerics=numerics, run=run,
                              scan=scan, **top)
    except ConfigError as exc:
        raise ConfigError(str(exc), key=exc.key, line=top_lines.get(exc.key)) from None


def load(path):
    with open(path) as fh:
        return parse(fh.read())


def save(spec, path):
    with open(path, "w") as fh:
        fh.write(serialize(spec))


# Parameters shared by every figure: K_ba/omega_x = 0.05, K_th = 2.5e-3,
# gamma = 1e-10, Omega = 2 omega_m.
FIGURE_BASE = ModelConfig(alpha=0.2, Omega=2.0, g=0.2, eta=1.0, kba_ratio=0.05, kth=2.5e-3,
                          gamma=1e-10, strategy="independent", charge_ratio=3.0, q=0.1)

_G_AXIS = Axis("g", -0.3, 0.3, 41)
_ETA_AXIS = Axis("eta", 0.0, 1.0, 41)


def _scan_preset(name, metric, x, y, **model):
    return ExperimentSpec(mode="reproduce", target=name, model=replace(FIGURE_BASE, **model),
                          scan=ScanSettings(metric, x, y))


def _series_preset(name, **model):
    return ExperimentSpec(mode="reproduce", target=name, model=replace(FIGURE_BASE, **model))


PRESETS = {
    "fig1a": lambda: _scan_preset("fig1a", "conditional_EN", _G_AXIS, _ETA_AXIS, alpha=0.0),
    "fig1b": lambda: _scan_preset("fig1b", "conditional_EN", _G_AXIS, _ETA_AXIS, alpha=0.2),
    "fig1c": lambda: _series_preset("fig1c", g=0.2, eta=1.0),
    "fig1d": lambda: _series_preset("fig1d", g=-0.2, eta=1.0),
    "fig2a": lambda: _scan_preset("fig2a", "unconditional_EN", _G_AXIS, _ETA_AXIS, alpha=0.0,
                                  strategy="identical"),
    "fig2b": lambda: _scan_preset("fig2b", "unconditional_EN", _G_AXIS, _ETA_AXIS, alpha=0.2,
                                  strategy="identical"),
    "fig2c": lambda: _scan_preset("fig2c", "unconditional_EN", _G_AXIS, _ETA_AXIS, alpha=0.0,
                                  strategy="independent"),
    "fig2d": lambda: _scan_preset("fig2d", "unconditional_EN", _G_AXIS, _ETA_AXIS, alpha=0.2,
                                  strategy="independent"),
    "fig2e": lambda: _series_preset("fig2e", g=0.2, eta=1.0, strategy="independent"),
    "fig2f": lambda: _series_preset("fig2f", g=-0.2, eta=1.0, strategy="independent"),
    "fig3": lambda: _scan_preset("fig3", "conditional_EN", Axis("Omega", 1.0, 7.0, 61),
                                 Axis("g", -0.5, 1.0, 61), alpha=0.2, eta=1.0),
    "fig4a": lambda: _scan_preset("fig4a", "conditional_EN", Axis("g", 0.0, 0.5, 41),
                                  Axis("alpha", 0.0, 0.5, 41), eta=1.0),
    "fig4b": lambda: _scan_preset("fig4b", "squeezing", Axis("g", 0.0, 0.5, 41), None,
                                  alpha=0.2, eta=1.0),
    "fig4c": lambda: _scan_preset("fig4c", "squeezing", Axis("alpha", 0.0, 0.5, 41), None,
                                  g=0.2, eta=1.0),
}

SERIES_TARGETS = {"fig1c": False, "fig1d": False, "fig2e": True, "fig2f": True}


def preset(name):
    """Fully populated spec for a figure target, e.g. ``preset("fig1b")``."""
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}",
                          key="target") from None
