"""Run configuration: flat INI-style files with dotted keys plus command-line overrides.

A file may use dotted keys at the top level (``basis.psi.family = bspline``)
or ordinary sections, where ``[basis.psi]`` followed by ``family = bspline``
means the same thing.  Values given on the command line win over the file;
``PROXBRIDGE_SEED`` is consulted only when neither sets a seed.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .basis import FAMILIES, BasisSpec
from .errors import ConfigError, ProxBridgeError
from .inference import EstimatorConfig
from .oracle import DiscreteJoint
from .simulation import PRESETS, DgpSpec, McConfig, linear_spec_fields, preset

COMMANDS = ("estimate", "simulate", "mc", "oracle")
SEED_ENV = "PROXBRIDGE_SEED"
_ROOT = "__root__"


def _int(lo=None):
    def parse(key, raw):
        try:
            val = int(str(raw).strip())
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        if lo is not None and val < lo:
            raise ConfigError(f"{key}: must be >= {lo}, got {val}")
        return val
    return parse


def _float(lo=None, hi=None, open_lo=False, open_hi=False):
    def parse(key, raw):
        try:
            val = float(str(raw).strip())
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
        if val != val:
            raise ConfigError(f"{key}: must be a number, got nan")
        if lo is not None and (val < lo or (open_lo and val == lo)):
            raise ConfigError(f"{key}: must be {'>' if open_lo else '>='} {lo}, got {val}")
        if hi is not None and (val > hi or (open_hi and val == hi)):
            raise ConfigError(f"{key}: must be {'<' if open_hi else '<='} {hi}, got {val}")
        return val
    return parse


def _choice(options):
    def parse(key, raw):
        val = str(raw).strip()
        if val not in options:
            raise ConfigError(f"{key}: must be one of {list(options)}, got {val!r}")
        return val
    return parse


def _bool(key, raw):
    val = str(raw).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _text(key, raw):
    val = str(raw).strip()
    if not val:
        raise ConfigError(f"{key}: empty value")
    return val


def _optional_count(key, raw):
    val = str(raw).strip().lower()
    if val in ("", "auto", "none"):
        return None
    return _int(1)(key, raw)


def _degree(key, raw):
    # "3" or "w:2,x1:4,default:3"
    val = str(raw).strip()
    if ":" not in val:
        return _int(1)(key, val)
    out = {}
    for part in val.split(","):
        name, _, deg = part.partition(":")
        out[name.strip()] = _int(1)(key, deg)
    return out


def _discrete(key, raw):
    val = str(raw).strip()
    if val == "auto":
        return "auto"
    if val in ("", "none"):
        return ()
    return tuple(v.strip() for v in val.split(",") if v.strip())


def _ladder(key, raw):
    parts = [p for p in str(raw).replace(" ", "").split(",") if p]
    if not parts:
        raise ConfigError(f"{key}: empty sample-size list")
    vals = [_int(2)(key, p) for p in parts]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"{key}: sample sizes must be strictly increasing, got {vals}")
    return tuple(vals)


# key -> (parser, default); a default of None means "not set".
SCHEMA: dict = {
    "seed": (_int(0), None),
    "output": (_text, "proxbridge-out"),
    "level": (_float(0.0, 1.0, open_lo=True, open_hi=True), 0.95),
    "kappa": (_float(0.0), 1.0),
    "criterion": (_choice(("arm", "pooled")), "arm"),
    "data.path": (_text, None),
    "dgp.preset": (_choice(PRESETS), "nonunique"),
    "dgp.joint": (_text, None),
    "dgp.n": (_int(1), 1000),
    "mc.n_ladder": (_ladder, (500, 2000, 8000)),
    "mc.replications": (_int(2), 100),
    "mc.jobs": (_int(1), 1),
}
for _side in ("psi", "phi"):
    SCHEMA.update({
        f"basis.{_side}.family": (_choice(FAMILIES), "polynomial"),
        f"basis.{_side}.degree": (_degree, 3),
        f"basis.{_side}.knots": (_int(0), 4),
        f"basis.{_side}.per_arm": (_bool, True),
        f"basis.{_side}.count": (_optional_count, None),
        f"basis.{_side}.discrete": (_discrete, "auto"),
    })
for _name in linear_spec_fields():
    SCHEMA[f"dgp.{_name}"] = (_int(0) if _name == "d" else _float(), None)

PATH_KEYS = ("data.path", "dgp.joint")


def read_file(path) -> dict[str, str]:
    """Raw dotted key -> string value from a config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(f"[{_ROOT}]\n" + path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc.message.splitlines()[0]}") from None
    out = {}
    for section in parser.sections():
        prefix = "" if section == _ROOT else section.strip() + "."
        for key, value in parser.items(section):
            out[prefix + key.strip()] = value
    base = path.resolve().parent
    for key in PATH_KEYS:
        if key in out and not Path(out[key]).is_absolute():
            out[key] = str(base / out[key])
    return out


def parse_assignments(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        out[key.strip()] = value.strip()
    return out


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one command.

    ``values`` holds every schema key with its typed value (``None`` when
    unset); it is what the artifacts echo.
    """

    command: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def output(self) -> Path:
        return Path(self.values["output"])

    def echo(self) -> dict:
        out = {"command": self.command}
        for key in sorted(self.values):
            val = self.values[key]
            out[key] = list(val) if isinstance(val, tuple) else val
        return out

    def basis_spec(self, side: str) -> BasisSpec:
        v = self.values
        try:
            return BasisSpec(
                family=v[f"basis.{side}.family"],
                degree=v[f"basis.{side}.degree"],
                knots=v[f"basis.{side}.knots"],
                per_arm=v[f"basis.{side}.per_arm"],
                count=v[f"basis.{side}.count"],
                discrete=v[f"basis.{side}.discrete"],
            )
        except ProxBridgeError as exc:
            raise ConfigError(f"basis.{side}: {exc}") from None

    def estimator(self) -> EstimatorConfig:
        v = self.values
        return EstimatorConfig(self.basis_spec("psi"), self.basis_spec("phi"), v["kappa"], v["level"], v["criterion"])

    def dgp(self) -> DgpSpec:
        v = self.values
        if v["dgp.joint"] is not None:
            joint = DiscreteJoint.from_json(Path(v["dgp.joint"]).read_text())
            return DgpSpec("discrete", joint=joint, name=Path(v["dgp.joint"]).stem)
        overrides = {k[4:]: v[k] for k in v if k.startswith("dgp.") and k[4:] in linear_spec_fields()
                     and v[k] is not None}
        if overrides and v["dgp.preset"] == "nonunique":
            names = ", ".join(f"dgp.{k}" for k in sorted(overrides))
            raise ConfigError(f"{names}: only the linear presets take coefficient overrides")
        return preset(v["dgp.preset"], **overrides)

    def mc(self) -> McConfig:
        v = self.values
        return McConfig(self.dgp(), v["mc.n_ladder"], v["mc.replications"], self.seed, self.estimator(), v["mc.jobs"])


REQUIRED = {"estimate": ("data.path",), "simulate": (), "mc": (), "oracle": ()}


def parse_config(command: str, path=None, overrides: dict | None = None, env=None) -> RunConfig:
    """Merge defaults, the config file and overrides, then validate.

    ``overrides`` maps dotted keys to raw strings (from flags).  Unknown keys
    are rejected by name, as are out-of-range values.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {list(COMMANDS)}")
    env = os.environ if env is None else env
    raw = read_file(path) if path is not None else {}
    raw.update(overrides or {})
    unknown = sorted(k for k in raw if k not in SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}" + (f" (and {len(unknown) - 1} more)" if len(unknown) > 1 else ""))
    values = {}
    for key, (parser, default) in SCHEMA.items():
        values[key] = parser(key, raw[key]) if key in raw else default
    if values["seed"] is None:
        values["seed"] = _int(0)(SEED_ENV, env[SEED_ENV]) if env.get(SEED_ENV, "").strip() else 0
    for key in REQUIRED[command]:
        if values[key] is None:
            raise ConfigError(f"missing required key {key!r} for {command}")
    for key in PATH_KEYS:
        if values[key] is not None:
            p = Path(values[key]).resolve()
            if not p.is_file():
                raise ConfigError(f"{key}: file not found: {values[key]}")
            values[key] = str(p)
    return RunConfig(command, values)
