"""Plain key=value configuration for scenarios.

Files use configparser syntax with five sections: domain, orography,
solver, monitor, output.  Every key has a default equal to the control
experiment, so an empty file (or no file) reproduces it.  Values parse
strictly: unknown sections or keys, malformed numbers and out-of-range
settings all raise ConfigError naming the offending key.

``serialise_config`` emits a file that parses back to an identical
configuration; floats are written with repr so they round-trip exactly.
"""

from __future__ import annotations

import configparser
import io as _io

from .orography import KINDS, OrographySpec
from .scenarios import INITIAL_CONDITIONS, MONITOR_SOURCES, ScenarioConfig


class ConfigError(ValueError):
    pass


_OROGRAPHY_ALIASES = {
    "flat": "flat",
    "smooth": "smooth_cosine",
    "smooth_cosine": "smooth_cosine",
    "steep": "steep_cylinder",
    "steep_cylinder": "steep_cylinder",
}


def _to_int(text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _to_float(text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _to_revolutions(text):
    # plain float syntax, or a fraction like 1/12 for partial revolutions
    num, slash, den = str(text).partition("/")
    try:
        value = float(num) / float(den) if slash else float(num)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"expected a number or fraction, got {text!r}") from None
    return value


def _to_bool(text):
    low = str(text).strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _choice(options, mapping=None):
    def convert(text):
        key = str(text).strip()
        if mapping is not None:
            if key not in mapping:
                raise ConfigError(f"expected one of {sorted(set(mapping))}, got {text!r}")
            return mapping[key]
        if key not in options:
            raise ConfigError(f"expected one of {list(options)}, got {text!r}")
        return key

    return convert


# section -> key -> (converter, ScenarioConfig/OrographySpec field)
_SCHEMA = {
    "domain": {
        "n": (_to_int, "n"),
        "half_length": (_to_float, "half_length"),
        "height": (_to_float, "height"),
        "dt": (_to_float, "dt"),
        "revolutions": (_to_revolutions, "revolutions"),
        "omega": (_to_float, "omega"),
        "r_inner": (_to_float, "r_inner"),
        "r_outer": (_to_float, "r_outer"),
        "tracer_radius": (_to_float, "tracer_radius"),
        "tracer_x": (_to_float, "tracer_x"),
        "tracer_y": (_to_float, "tracer_y"),
        "initial_condition": (_choice(INITIAL_CONDITIONS), "initial_condition"),
    },
    "orography": {
        "kind": (_choice(KINDS, _OROGRAPHY_ALIASES), "kind"),
        "hill_x": (_to_float, "hill_x"),
        "hill_y": (_to_float, "hill_y"),
        "valley_x": (_to_float, "valley_x"),
        "valley_y": (_to_float, "valley_y"),
        "radius": (_to_float, "radius"),
        "h_max": (_to_float, "h_max"),
        "h_min": (_to_float, "h_min"),
        "h_c": (_to_float, "h_c"),
    },
    "solver": {
        "use_volume_adjust": (_to_bool, "use_volume_adjust"),
        "move_mesh": (_to_bool, "move_mesh"),
        "alpha": (_to_float, "alpha"),
        "initial_outer": (_to_int, "initial_outer"),
        "step_outer": (_to_int, "step_outer"),
        "newton_rel_tol": (_to_float, "newton_rel_tol"),
        "newton_abs_tol": (_to_float, "newton_abs_tol"),
        "max_inner": (_to_int, "max_inner"),
        "delta_reg": (_to_float, "delta_reg"),
    },
    "monitor": {
        "r_max": (_to_float, "r_max"),
        "smoothing": (_to_float, "monitor_smoothing"),
        "source": (_choice(MONITOR_SOURCES), "monitor_source"),
    },
    "output": {
        "every": (_to_int, "output_every"),
        "name": (str, "name"),
    },
}


def _defaults() -> dict:
    cfg = ScenarioConfig()
    oro = cfg.orography
    return {
        "domain.n": cfg.n,
        "domain.half_length": cfg.half_length,
        "domain.height": cfg.height,
        "domain.dt": cfg.dt,
        "domain.revolutions": cfg.revolutions,
        "domain.omega": cfg.omega,
        "domain.r_inner": cfg.r_inner,
        "domain.r_outer": cfg.r_outer,
        "domain.tracer_radius": cfg.tracer_radius,
        "domain.tracer_x": cfg.tracer_centre[0],
        "domain.tracer_y": cfg.tracer_centre[1],
        "domain.initial_condition": cfg.initial_condition,
        "orography.kind": oro.kind,
        "orography.hill_x": oro.hill_center[0],
        "orography.hill_y": oro.hill_center[1],
        "orography.valley_x": oro.valley_center[0],
        "orography.valley_y": oro.valley_center[1],
        "orography.radius": oro.radius,
        "orography.h_max": oro.h_max,
        "orography.h_min": oro.h_min,
        "orography.h_c": oro.h_c,
        "solver.use_volume_adjust": cfg.use_volume_adjust,
        "solver.move_mesh": cfg.move_mesh,
        "solver.alpha": cfg.alpha,
        "solver.initial_outer": cfg.initial_outer,
        "solver.step_outer": cfg.step_outer,
        "solver.newton_rel_tol": cfg.newton_rel_tol,
        "solver.newton_abs_tol": cfg.newton_abs_tol,
        "solver.max_inner": cfg.max_inner,
        "solver.delta_reg": cfg.delta_reg,
        "monitor.r_max": cfg.r_max,
        "monitor.smoothing": cfg.monitor_smoothing,
        "monitor.source": cfg.monitor_source,
        "output.every": cfg.output_every,
        "output.name": cfg.name,
    }


def _convert(section, key, raw):
    if section not in _SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    if key not in _SCHEMA[section]:
        raise ConfigError(f"unknown key '{key}' in section [{section}]")
    converter, _ = _SCHEMA[section][key]
    if isinstance(raw, str):
        try:
            return converter(raw)
        except ConfigError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    return raw


def parse_config(path=None, overrides=None) -> ScenarioConfig:
    """Build a ScenarioConfig from an optional file plus dotted overrides.

    overrides maps 'section.key' to a value (strings are converted like
    file values and win over the file).
    """
    values = _defaults()

    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as handle:
                parser.read_file(handle)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from None
        for section in parser.sections():
            for key, raw in parser.items(section):
                values[f"{section}.{key}"] = _convert(section, key, raw)

    for dotted, raw in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"override {dotted!r} is not of the form section.key")
        values[dotted] = _convert(section, key, raw)

    orography = OrographySpec(
        kind=values["orography.kind"],
        hill_center=(values["orography.hill_x"], values["orography.hill_y"]),
        valley_center=(values["orography.valley_x"], values["orography.valley_y"]),
        radius=values["orography.radius"],
        h_max=values["orography.h_max"],
        h_min=values["orography.h_min"],
        h_c=values["orography.h_c"],
    )
    try:
        return ScenarioConfig(
            name=values["output.name"],
            n=values["domain.n"],
            half_length=values["domain.half_length"],
            height=values["domain.height"],
            dt=values["domain.dt"],
            revolutions=values["domain.revolutions"],
            orography=orography,
            initial_condition=values["domain.initial_condition"],
            use_volume_adjust=values["solver.use_volume_adjust"],
            move_mesh=values["solver.move_mesh"],
            alpha=values["solver.alpha"],
            omega=values["domain.omega"],
            r_inner=values["domain.r_inner"],
            r_outer=values["domain.r_outer"],
            tracer_radius=values["domain.tracer_radius"],
            tracer_centre=(values["domain.tracer_x"], values["domain.tracer_y"]),
            r_max=values["monitor.r_max"],
            monitor_smoothing=values["monitor.smoothing"],
            monitor_source=values["monitor.source"],
            initial_outer=values["solver.initial_outer"],
            step_outer=values["solver.step_outer"],
            newton_rel_tol=values["solver.newton_rel_tol"],
            newton_abs_tol=values["solver.newton_abs_tol"],
            max_inner=values["solver.max_inner"],
            delta_reg=values["solver.delta_reg"],
            output_every=values["output.every"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialise_config(cfg: ScenarioConfig) -> str:
    """Config-file text that parses back to an identical configuration."""
    snapshot = {
        "domain.tracer_x": cfg.tracer_centre[0],
        "domain.tracer_y": cfg.tracer_centre[1],
        "orography.hill_x": cfg.orography.hill_center[0],
        "orography.hill_y": cfg.orography.hill_center[1],
        "orography.valley_x": cfg.orography.valley_center[0],
        "orography.valley_y": cfg.orography.valley_center[1],
    }
    out = _io.StringIO()
    for section, keys in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key, (_, attr) in keys.items():
            dotted = f"{section}.{key}"
            if dotted in snapshot:
                value = snapshot[dotted]
            elif section == "orography":
                value = getattr(cfg.orography, attr)
            else:
                value = getattr(cfg, attr)
            out.write(f"{key} = {_format(value)}\n")
        out.write("\n")
    return out.getvalue()
