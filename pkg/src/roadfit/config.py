"""
Run configuration.

The on-disk form is an INI file with one section per concern plus one
``[class.<name>]`` section per object class, e.g.::

    [weights]
    kerb = 1.0
    position = 0.05

    [class.barrier]
    behaviour = BORDER_OUT
    expected_border_distance = 0.2

Unknown sections or keys are rejected. ``roadfit config --dump`` prints every
default.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .observation import Behaviour, ObjectClass, default_registry


@dataclass
class Weights:
    kerb: float = 1.0
    object: float = 0.3
    direction: float = 1.0
    position: float = 0.05
    length: float = 0.1
    width: float = 0.1
    angle: float = 0.1

    def without_regularisation(self) -> "Weights":
        return dataclasses.replace(self, position=0.0, length=0.0, width=0.0, angle=0.0)


@dataclass
class LossConfig:
    kind: str = "SOFT_L1"                 # applied to observation forces
    scale: float = 1.0
    regularisation_kind: str = "SQUARED"


@dataclass
class BoundsConfig:
    width_min: float = 1.0
    width_max: float = 20.0
    width_delta: float = 10.0
    node_delta: float = 5.0


@dataclass
class SolverConfig:
    g_tol: float = 1e-10
    f_tol: float = 1e-8
    max_iter: int = 100
    initial_damping: float = 1e-4
    strategy: str = "joint"               # joint | alternating
    freeze_z: bool = True
    max_alternations: int = 50
    coupled_variants: bool = False        # node/width variant rows carry both derivatives


@dataclass
class ObservationConfig:
    l1: float = 2.0
    l2: float = 4.0
    user_multiplier: float = 10.0
    use_confidence: bool = False
    directions_from_user: bool = True


@dataclass
class DirectionConfig:
    threshold_deg: float = 20.0


@dataclass
class MatchingConfig:
    search_radius: float = 10.0
    intersection_radius_factor: float = 1.2
    rematch_every: int = 0


@dataclass
class NetworkConfig:
    max_segment_length: float = 10.0      # 0 disables splitting


@dataclass
class PostprocessConfig:
    dbscan_eps: float = 0.5
    min_pts: int = 1


@dataclass
class EvaluationConfig:
    sample_step: float = 2.0
    bin_width: float = 0.1
    overflow: float = 5.0


@dataclass
class Config:
    weights: Weights = field(default_factory=Weights)
    loss: LossConfig = field(default_factory=LossConfig)
    bounds: BoundsConfig = field(default_factory=BoundsConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    observation: ObservationConfig = field(default_factory=ObservationConfig)
    direction: DirectionConfig = field(default_factory=DirectionConfig)
    matching: MatchingConfig = field(default_factory=MatchingConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    classes: dict = field(default_factory=default_registry)

    def validate(self):
        if self.loss.kind not in ("SQUARED", "SOFT_L1") or self.loss.regularisation_kind not in ("SQUARED", "SOFT_L1"):
            raise ConfigError("loss kinds must be SQUARED or SOFT_L1")
        if self.loss.scale <= 0:
            raise ConfigError("loss.scale must be > 0")
        if self.solver.strategy not in ("joint", "alternating"):
            raise ConfigError("solver.strategy must be joint or alternating")
        for k, v in dataclasses.asdict(self.weights).items():
            if v < 0:
                raise ConfigError(f"weights.{k} must be >= 0")
        if not 0 < self.bounds.width_min < self.bounds.width_max:
            raise ConfigError("bounds need 0 < width_min < width_max")
        for name, value in (("observation.l1", self.observation.l1), ("observation.l2", self.observation.l2),
                            ("matching.search_radius", self.matching.search_radius),
                            ("postprocess.dbscan_eps", self.postprocess.dbscan_eps),
                            ("evaluation.sample_step", self.evaluation.sample_step),
                            ("direction.threshold_deg", self.direction.threshold_deg)):
            if value <= 0:
                raise ConfigError(f"{name} must be > 0")
        return self


SECTIONS = [f.name for f in fields(Config) if f.name != "classes"]
CLASS_KEYS = ("behaviour", "expected_border_distance", "class_weight", "default_precision", "kerb")


def _coerce(kind, raw: str, where: str):
    try:
        if kind is bool or kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "1", "yes", "on")
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None


def set_value(cfg: Config, dotted: str, raw: str):
    """Apply one ``section.key=value`` override."""
    section, _, key = dotted.partition(".")
    if section not in SECTIONS:
        raise ConfigError(f"unknown config section {section!r}")
    obj = getattr(cfg, section)
    types = {f.name: f.type for f in fields(obj)}
    if key not in types:
        raise ConfigError(f"unknown config key {dotted!r}")
    setattr(obj, key, _coerce(types[key], raw, dotted))


def load_config(path=None, text: str | None = None) -> Config:
    cfg = Config()
    if path is None and text is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        if text is not None:
            parser.read_string(text)
        else:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    classes = dict(cfg.classes)
    for section in parser.sections():
        if section.startswith("class."):
            name = section[len("class."):]
            items = dict(parser.items(section))
            bad = set(items) - set(CLASS_KEYS)
            if bad:
                raise ConfigError(f"unknown key(s) {sorted(bad)} in [{section}]")
            base = classes.get(name) or ObjectClass(len(classes), name, Behaviour.UNDEFINED)
            kwargs = {}
            for k, v in items.items():
                if k == "behaviour":
                    try:
                        kwargs[k] = Behaviour(v.strip().upper())
                    except ValueError:
                        raise ConfigError(f"[{section}] unknown behaviour {v!r}") from None
                elif k == "kerb":
                    kwargs[k] = _coerce(bool, v, f"{section}.{k}")
                else:
                    kwargs[k] = _coerce(float, v, f"{section}.{k}")
            try:
                classes[name] = dataclasses.replace(base, **kwargs)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {exc}") from None
            continue
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            set_value(cfg, f"{section}.{key}", raw)
    cfg.classes = classes
    return cfg.validate()


def dump_config(cfg: Config | None = None) -> str:
    cfg = cfg or Config()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section in SECTIONS:
        obj = getattr(cfg, section)
        parser[section] = {f.name: str(getattr(obj, f.name)).lower() if isinstance(getattr(obj, f.name), bool)
                           else str(getattr(obj, f.name)) for f in fields(obj)}
    for name, c in cfg.classes.items():
        parser[f"class.{name}"] = {
            "behaviour": c.behaviour.value,
            "expected_border_distance": str(c.expected_border_distance),
            "class_weight": str(c.class_weight),
            "default_precision": str(c.default_precision),
            "kerb": str(c.kerb).lower(),
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
