"""Pipeline configuration: sections, file loading, overrides and the canonical hash."""

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import __version__
from .errors import ConfigError
from .features.catalog import FeatureConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class DataSection:
    source: str = "path"  # "path": read manifest; "synth": generate from [synth]
    path: str = ""
    window_fraction: float = 0.70

    def validate(self):
        if self.source not in ("path", "synth"):
            raise ConfigError(f"data.source must be 'path' or 'synth', got {self.source!r}")
        if self.source == "path" and not self.path:
            raise ConfigError("data.path is required when data.source = 'path'")
        if not 0 < self.window_fraction <= 1:
            raise ConfigError("data.window_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class MiceSection:
    n_iter: int = 10
    seed: int = 0
    noise: bool = True

    def validate(self):
        if self.n_iter < 1:
            raise ConfigError("mice.n_iter must be positive")


@dataclass(frozen=True)
class LmmSection:
    tol: float = 1e-6
    maxiter: int = 200
    df_method: str = "residual"  # or "between"

    def validate(self):
        if not self.tol > 0 or self.maxiter < 1:
            raise ConfigError("lmm.tol and lmm.maxiter must be positive")
        if self.df_method not in ("residual", "between"):
            raise ConfigError(f"lmm.df_method must be 'residual' or 'between', got {self.df_method!r}")


@dataclass(frozen=True)
class AuditSection:
    fdr_family: str = "joint"  # or "per-demographic"
    alpha: float = 0.05
    eta2_min: float = 0.06

    def validate(self):
        if self.fdr_family not in ("joint", "per-demographic"):
            raise ConfigError(f"audit.fdr_family must be 'joint' or 'per-demographic', got {self.fdr_family!r}")
        if not 0 < self.alpha < 1 or not 0 < self.eta2_min < 1:
            raise ConfigError("audit.alpha and audit.eta2_min must lie in (0, 1)")


@dataclass(frozen=True)
class SplsSection:
    keep_x: int = 50
    n_comp: int = 2
    k_folds: int = 5
    seed: int = 0
    q2_threshold: float = 0.0975

    def validate(self):
        if self.keep_x < 1 or self.n_comp < 1:
            raise ConfigError("spls.keep_x and spls.n_comp must be positive")
        if self.k_folds < 2:
            raise ConfigError("spls.k_folds must be at least 2")


SECTIONS = {
    "data": DataSection,
    "features": FeatureConfig,
    "mice": MiceSection,
    "lmm": LmmSection,
    "audit": AuditSection,
    "spls": SplsSection,
}


@dataclass(frozen=True)
class PipelineConfig:
    data: DataSection = field(default_factory=DataSection)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    mice: MiceSection = field(default_factory=MiceSection)
    lmm: LmmSection = field(default_factory=LmmSection)
    audit: AuditSection = field(default_factory=AuditSection)
    spls: SplsSection = field(default_factory=SplsSection)
    synth: dict = field(default_factory=dict)  # SynthSpec fields
    out_dir: str = "semgaudit_out"
    jobs: int = 1

    def validate(self):
        for name in ("data", "mice", "lmm", "audit", "spls"):
            getattr(self, name).validate()
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.data.source == "synth":
            self.synth_spec()
        return self

    def synth_spec(self):
        from .synth.generator import SynthSpec

        try:
            return SynthSpec.from_dict(self.synth)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [synth] section: {exc}") from exc

    def to_dict(self):
        d = {name: asdict(getattr(self, name)) for name in SECTIONS}
        d["features"] = self.features.to_dict()
        d["synth"] = self.synth_spec().to_dict() if self.synth else {}
        return d

    def canonical(self):
        """Sorted compact JSON of everything that affects results.

        The output directory and worker count are excluded: they never change
        what is computed.
        """
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def section_hash(self, *names):
        d = self.to_dict()
        blob = json.dumps({n: d[n] for n in names}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def stamp(self):
        return f"semgaudit {__version__} config {self.hash()}"


def _build_section(cls, values, name):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    try:
        if cls is FeatureConfig:
            return FeatureConfig.from_dict(values)
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{name}] section: {exc}") from exc


def config_from_dict(d, base_dir=None):
    d = dict(d)
    kwargs = {}
    for name, cls in SECTIONS.items():
        section = d.pop(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        kwargs[name] = _build_section(cls, section, name)
    kwargs["synth"] = dict(d.pop("synth", {}))
    for key in ("out_dir", "jobs"):
        if key in d:
            kwargs[key] = d.pop(key)
    if d:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(d))}")
    cfg = PipelineConfig(**kwargs)
    if base_dir is not None and cfg.data.path and not Path(cfg.data.path).is_absolute():
        cfg = replace(cfg, data=replace(cfg.data, path=str(Path(base_dir) / cfg.data.path)))
    return cfg.validate()


def load_config(path):
    """Read a TOML (or JSON, by extension) configuration file.

    A relative ``data.path`` is resolved against the file's directory.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            d = json.loads(path.read_text())
        else:
            d = tomllib.loads(path.read_text())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(d, base_dir=path.parent)


def _coerce(text):
    try:
        return json.loads(text)
    except ValueError:
        return text


def with_overrides(cfg, assignments):
    """Apply ``section.key=value`` strings (values parsed as JSON when possible)."""
    d = cfg.to_dict()
    d["out_dir"], d["jobs"] = cfg.out_dir, cfg.jobs
    if not cfg.synth:
        d.pop("synth")
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        target = d
        for p in parts[:-1]:
            target = target.setdefault(p, {})
            if not isinstance(target, dict):
                raise ConfigError(f"override {key!r} does not name a config field")
        target[parts[-1]] = _coerce(value)
    return config_from_dict(d)
