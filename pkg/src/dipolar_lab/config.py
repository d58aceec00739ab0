"""Run configuration: an INI file with one section per concern.

Every key has an explicit default (see :func:`default_text`); unknown sections
or keys are rejected, and all ranges are checked before any computation.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

__all__ = ["RunConfig", "load_config", "parse_config", "default_text", "read_kernel_table",
           "write_kernel_table"]


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def _complexes(text):
    return tuple(complex(v.replace(" ", "")) for v in text.split(","))


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _number(text):
    return float("inf") if text.strip().lower() in ("inf", "infinity") else float(text)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if any(isinstance(v, complex) for v in value):
            return ", ".join(_fmt_complex(v) for v in value)
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return str(value)


def _fmt_complex(z):
    re, im = float(z.real), float(z.imag)
    if im == 0:
        return repr(re)
    return f"{re!r}{im:+}j"


_PARSERS = {"int": int, "float": _number, "str": str, "bool": _bool,
            "floats": _floats, "ints": _ints, "complexes": _complexes}


def _key(kind, default, doc=""):
    return field(default=default, metadata={"kind": kind, "doc": doc})


@dataclass(frozen=True)
class GridSection:
    n: int = _key("int", 64, "points per axis (even, >= 4)")
    L: float = _key("float", 16.0, "box edge length")


@dataclass(frozen=True)
class KernelSection:
    omega: str = _key("str", "dipolar", "'dipolar' or path to a table file")
    axis: tuple = _key("floats", (0.0, 0.0, 1.0), "dipole axis")
    R: float = _key("float", 0.25, "truncation radius")


@dataclass(frozen=True)
class PotentialSection:
    w0_kind: str = _key("str", "gaussian", "gaussian or ball")
    w0_width: float = _key("float", 0.25, "Gaussian standard deviation or ball radius")
    a: float = _key("float", 1.0, "integral of w0")
    b: float = _key("float", 0.2, "dipolar coupling (>= 0)")
    beta: float = _key("float", 0.25, "scaling exponent (> 0)")


@dataclass(frozen=True)
class DynamicsSection:
    equation: str = _key("str", "limiting", "limiting or scaled")
    N: float = _key("float", 64.0, "particle number for the scaled equation (inf allowed)")
    initial: str = _key("str", "gaussian", "gaussian or bump")
    initial_width: float = _key("float", 1.0, "Gaussian width or bump radius")
    dt: float = _key("float", 1e-3, "time step")
    t_final: float = _key("float", 1.0, "final time")
    diagnostics_every: int = _key("int", 10, "steps between diagnostics rows")
    snapshot_stride: int = _key("int", 0, "steps between field snapshots (0 = none)")
    dealias: bool = _key("bool", False, "2/3-rule filter on the density")


@dataclass(frozen=True)
class SweepSection:
    Ns: tuple = _key("ints", (8, 16, 32, 64, 128, 256), "particle numbers")
    t_final: float = _key("float", 0.5, "comparison time")
    dt: float = _key("float", 0.00625, "time step shared by every trajectory")
    slope_tolerance: float = _key("float", 0.15, "accepted distance of the slope from -beta")


@dataclass(frozen=True)
class FockSection:
    m: int = _key("int", 5, "number of plane-wave modes")
    ell: float = _key("float", 2 * math.pi, "torus length")
    coupling: float = _key("float", 1.0, "w_hat(0)")
    width: float = _key("float", 0.5, "Gaussian width of w_hat")
    beta: float = _key("float", 0.25, "scaling exponent")
    N_list: tuple = _key("ints", (3, 4, 5, 6), "particle numbers")
    M: int = _key("int", 2, "localization level for the structural checks")
    t_final: float = _key("float", 0.5, "final time")
    dt: float = _key("float", 0.01, "time step")
    extra_cap: int = _key("int", 4, "Bogoliubov Fock space cap is N + extra_cap")
    u0: tuple = _key("complexes", (0.2 + 0j, 0.5 + 0j, 1.0 + 0j, 0.4j, 0.1 + 0j), "initial condensate (normalized on use)")
    identity_tol: float = _key("float", 1e-10, "tolerance of the structural identities")
    dump_operators: bool = _key("bool", False, "write COO dumps of H_N, the Bogoliubov and generator matrices")


@dataclass(frozen=True)
class ChecksSection:
    cancellation_tol: float = _key("float", 1e-10, "")
    bound_directions: int = _key("int", 100, "directions for the small-|k|R scan")
    bound_kR: tuple = _key("floats", (0.1, 0.05, 0.02, 0.01, 0.001), "|k|R values of the scan")
    bound_constant: float = _key("float", 4.0, "accepted ratio |K_<=R| / (R^2 k^2)")
    limit_samples: int = _key("int", 50, "directions for the large-|k|R comparison")
    limit_kR: float = _key("float", 1000.0, "|k|R of the comparison")
    limit_tol: float = _key("float", 1e-3, "")


_SECTIONS = {
    "grid": GridSection,
    "kernel": KernelSection,
    "potential": PotentialSection,
    "dynamics": DynamicsSection,
    "sweep": SweepSection,
    "fock": FockSection,
    "checks": ChecksSection,
}


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    potential: PotentialSection = field(default_factory=PotentialSection)
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    fock: FockSection = field(default_factory=FockSection)
    checks: ChecksSection = field(default_factory=ChecksSection)
    base_dir: Path = field(default=Path("."), compare=False)

    def canonical_text(self):
        return _render(self, with_docs=False)

    def digest(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    def validate(self):
        _validate(self)
        return self


def _render(cfg, with_docs):
    lines = []
    for name in _SECTIONS:
        sec = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in dataclasses.fields(sec):
            if with_docs and f.metadata.get("doc"):
                lines.append(f"# {f.metadata['doc']}")
            lines.append(f"{f.name} = {_fmt(getattr(sec, f.name))}")
        lines.append("")
    return "\n".join(lines)


def default_text():
    return _render(RunConfig(), with_docs=True)


def parse_config(text, base_dir="."):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config syntax error: {exc}") from exc
    sections = {}
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ValidationError(f"unknown config section [{name}]")
        cls = _SECTIONS[name]
        known = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in parser.items(name):
            if key not in known:
                raise ValidationError(f"unknown key {key!r} in section [{name}]")
            kind = known[key].metadata["kind"]
            try:
                values[key] = _PARSERS[kind](raw)
            except ValueError as exc:
                raise ValidationError(f"[{name}] {key}: cannot parse {raw!r} ({exc})") from exc
        sections[name] = cls(**values)
    return RunConfig(**sections, base_dir=Path(base_dir)).validate()


def load_config(path=None):
    if path is None:
        return RunConfig().validate()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


def _require(cond, message):
    if not cond:
        raise ValidationError(message)


def _validate(cfg):
    g = cfg.grid
    _require(g.n >= 4 and g.n % 2 == 0, f"[grid] n must be even and >= 4, got {g.n}")
    _require(g.L > 0 and math.isfinite(g.L), f"[grid] L must be positive, got {g.L}")
    k = cfg.kernel
    _require(k.R > 0 and math.isfinite(k.R), f"[kernel] R must be positive, got {k.R}")
    _require(len(k.axis) == 3 and np.linalg.norm(k.axis) > 0, "[kernel] axis must be a nonzero 3-vector")
    p = cfg.potential
    _require(p.w0_kind in ("gaussian", "ball"), f"[potential] unknown w0_kind {p.w0_kind!r}")
    _require(p.w0_width > 0, "[potential] w0_width must be positive")
    _require(math.isfinite(p.a), "[potential] a must be finite")
    _require(p.b >= 0, f"[potential] b must be >= 0, got {p.b}")
    _require(p.beta > 0, f"[potential] beta must be positive, got {p.beta}")
    d = cfg.dynamics
    _require(d.equation in ("limiting", "scaled"), f"[dynamics] unknown equation {d.equation!r}")
    _require(d.N >= 2, "[dynamics] N must be >= 2")
    _require(d.initial in ("gaussian", "bump"), f"[dynamics] unknown initial datum {d.initial!r}")
    _require(d.initial_width > 0, "[dynamics] initial_width must be positive")
    _require(d.dt > 0 and d.t_final > 0, "[dynamics] dt and t_final must be positive")
    _require(d.dt <= d.t_final, "[dynamics] dt must not exceed t_final")
    _require(d.diagnostics_every >= 1, "[dynamics] diagnostics_every must be >= 1")
    _require(d.snapshot_stride >= 0, "[dynamics] snapshot_stride must be >= 0")
    s = cfg.sweep
    _require(len(s.Ns) >= 2 and all(n >= 2 for n in s.Ns), "[sweep] Ns needs >= 2 entries, each >= 2")
    _require(all(b > a for a, b in zip(s.Ns, s.Ns[1:])), "[sweep] Ns must be strictly increasing")
    _require(s.dt > 0 and s.t_final > 0, "[sweep] dt and t_final must be positive")
    _require(s.slope_tolerance > 0, "[sweep] slope_tolerance must be positive")
    f = cfg.fock
    _require(1 <= f.m <= 8, f"[fock] m must be in 1..8, got {f.m}")
    _require(f.ell > 0 and f.width > 0 and f.beta >= 0, "[fock] ell and width must be positive, beta >= 0")
    _require(len(f.N_list) >= 1 and all(2 <= n <= 10 for n in f.N_list), "[fock] N_list entries must be in 2..10")
    _require(1 <= f.M <= min(f.N_list), "[fock] M must satisfy 1 <= M <= min(N_list)")
    _require(f.dt > 0 and f.t_final > 0, "[fock] dt and t_final must be positive")
    _require(f.extra_cap >= 0, "[fock] extra_cap must be >= 0")
    _require(len(f.u0) == f.m, f"[fock] u0 needs {f.m} entries, got {len(f.u0)}")
    _require(np.linalg.norm(f.u0) > 0, "[fock] u0 must be nonzero")
    c = cfg.checks
    _require(c.bound_directions >= 1 and c.limit_samples >= 1, "[checks] sample counts must be >= 1")
    _require(all(0 < x <= 0.1 for x in c.bound_kR), "[checks] bound_kR values must lie in (0, 0.1]")
    _require(c.limit_kR > 0, "[checks] limit_kR must be positive")


# --- kernel tables -------------------------------------------------------------
#
# First line "# sphere-rule degree=<d>", then one Omega value per line in the
# node order of SphereRule(d).

def read_kernel_table(path):
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read kernel table {path}: {exc}") from exc
    if not lines or not lines[0].startswith("# sphere-rule degree="):
        raise ValidationError(f"{path}: missing '# sphere-rule degree=<d>' header")
    try:
        degree = int(lines[0].split("=", 1)[1])
        values = tuple(float(v) for v in lines[1:] if v.strip() and not v.startswith("#"))
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return degree, values


def write_kernel_table(path, values, degree):
    with open(path, "w") as fh:
        fh.write(f"# sphere-rule degree={degree}\n")
        for v in values:
            fh.write(f"{float(v)!r}\n")
