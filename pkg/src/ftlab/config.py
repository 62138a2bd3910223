"""Run configuration: INI parsing, defaults, validation and a tiny expression grammar.

Expressions describe ``f``, ``g`` and optional exact solutions in terms of the
coordinates ``x1``, ``x2`` (``x`` is ``x1`` in 1D), the radius ``r = |x|``,
numeric constants, ``+ - * /``, powers (``^`` or ``**``), ``abs(...)`` or
``|...|`` and ``piecewise_sign(pos, neg[, s])``, which picks ``pos`` where
``s > 0`` and ``neg`` where ``s < 0`` (their mean where ``s = 0``); ``s``
defaults to ``x1``.
"""

from __future__ import annotations

import ast
import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .degeneracy import DegeneracyParams
from .errors import ConfigurationError
from .grid import DomainSpec, Shape, fmt
from .operators import EllipticOperatorSpec, OperatorKind
from .regularity import default_alpha0
from .solver import Gradient, Schedule, SolveConfig
from .verification import TouchingTestConfig

# --- expressions --------------------------------------------------------------

_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}


def _bars_to_abs(text):
    """Rewrite ``|a|`` as ``abs(a)``; a bar opens after an operator or at the start."""
    out, depth = [], 0
    prev = ""
    for ch in text:
        if ch == "|":
            if prev == "" or prev in "(+-*/^,|" or (prev == "(" ):
                out.append("abs(")
                depth += 1
                prev = "|"
                continue
            if depth == 0:
                raise ConfigurationError(f"unbalanced '|' in {text!r}")
            out.append(")")
            depth -= 1
            prev = ")"
            continue
        out.append(ch)
        if not ch.isspace():
            prev = ch
    if depth:
        raise ConfigurationError(f"unbalanced '|' in {text!r}")
    return "".join(out)


@dataclass(frozen=True)
class Expression:
    source: str
    tree: ast.Expression = field(repr=False, compare=False)

    def __call__(self, coords):
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            val = _Eval(coords).visit(self.tree.body)
        val = np.broadcast_to(np.asarray(val, dtype=float), (len(coords),)).copy()
        if not np.isfinite(val).all():
            raise ConfigurationError(f"expression {self.source!r} is not finite on the grid")
        return val


class _Eval(ast.NodeVisitor):
    def __init__(self, coords):
        self.x = coords

    def generic_visit(self, node):
        raise ConfigurationError(f"unsupported syntax {type(node).__name__}")

    def visit_Constant(self, node):
        return float(node.value)

    def visit_Name(self, node):
        x, d = self.x, self.x.shape[1]
        if node.id == "r":
            return np.linalg.norm(x, axis=1)
        if node.id == "x" and d == 1 or node.id == "x1":
            return x[:, 0]
        if node.id == "x2" and d >= 2:
            return x[:, 1]
        if node.id == "pi":
            return math.pi
        raise ConfigurationError(f"unknown name {node.id!r} in a {d}-D expression")

    def visit_UnaryOp(self, node):
        v = self.visit(node.operand)
        if isinstance(node.op, ast.USub):
            return -v
        if isinstance(node.op, ast.UAdd):
            return v
        raise ConfigurationError("unsupported unary operator")

    def visit_BinOp(self, node):
        fn = _BINOPS.get(type(node.op))
        if fn is None:
            raise ConfigurationError("unsupported binary operator")
        return fn(self.visit(node.left), self.visit(node.right))

    def visit_Call(self, node):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise ConfigurationError("unsupported call")
        name, args = node.func.id, node.args
        if name == "abs" and len(args) == 1:
            a = args[0]
            if isinstance(a, ast.Name) and a.id == "x":
                return np.linalg.norm(self.x, axis=1)
            return np.abs(self.visit(a))
        if name == "piecewise_sign" and len(args) in (2, 3):
            pos, neg = self.visit(args[0]), self.visit(args[1])
            s = self.visit(args[2]) if len(args) == 3 else self.x[:, 0]
            return np.where(s > 0, pos, np.where(s < 0, neg, 0.5 * (np.asarray(pos) + np.asarray(neg))))
        raise ConfigurationError(f"unknown function {name!r}/{len(args)}")


def _check_tree(tree):
    allowed = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Constant, ast.Name, ast.Call, ast.Load,
               ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)
    for node in ast.walk(tree):
        if not isinstance(node, allowed):
            raise ConfigurationError(f"unsupported syntax {type(node).__name__}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigurationError("only numeric constants are allowed")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                               and node.func.id in ("abs", "piecewise_sign")):
            raise ConfigurationError("only abs() and piecewise_sign() may be called")


def parse_expression(text) -> Expression:
    src = str(text).strip()
    if not src:
        raise ConfigurationError("empty expression")
    py = _bars_to_abs(src).replace("^", "**")
    try:
        tree = ast.parse(py, mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse expression {src!r}: {exc.msg}") from exc
    _check_tree(tree)
    return Expression(src, tree)


def parse_number(text, key):
    try:
        val = parse_expression(text)(np.zeros((1, 1)))[0]
    except ConfigurationError as exc:
        raise ConfigurationError(f"not a number: {text!r} ({exc})", key) from exc
    return float(val)


# --- run configuration --------------------------------------------------------------

@dataclass
class DataSection:
    f: str = "0"
    g: str = "0"
    exact: str = ""  # optional closed-form solution for error reporting


@dataclass
class VerificationSection:
    touching: TouchingTestConfig = field(default_factory=TouchingTestConfig)
    gamma: float = 1.0
    C0: float | None = None  # default |f|_inf
    pucci_tol: float | None = None  # default h^(1/2)


@dataclass
class RegularitySection:
    probes: tuple | None = None  # default: free-boundary nodes and the centre
    rho: float = 0.5
    n_scales: int = 4
    r0: float | None = None
    tau: float = 0.5
    alphas: tuple = (0.25, 0.5)
    alpha0: float | None = None  # default by operator kind
    sign_tol: float = 0.0


@dataclass
class BarrierSection:
    eta_levels: int = 6
    epsilons: tuple = (0.5, 0.1, 0.02)


@dataclass
class OracleSection:
    kind: str = "two_phase"  # one_phase, two_phase, two_phase_mollified
    width: float = 0.05


@dataclass
class OutputSection:
    directory: str = "out"
    formats: tuple = ("csv", "pgm")


@dataclass
class RunConfig:
    domain: DomainSpec
    operator: EllipticOperatorSpec
    degeneracy: DegeneracyParams
    data: DataSection = field(default_factory=DataSection)
    solver: SolveConfig = field(default_factory=SolveConfig)
    epsilon_floor: float | None = None  # default h
    verification: VerificationSection = field(default_factory=VerificationSection)
    regularity: RegularitySection = field(default_factory=RegularitySection)
    barriers: BarrierSection = field(default_factory=BarrierSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    output: OutputSection = field(default_factory=OutputSection)
    seed: int = 0

    def __post_init__(self):
        # the touching tests draw from the run seed
        if self.verification.touching.seed != self.seed:
            touching = dataclasses.replace(self.verification.touching, seed=self.seed)
            self.verification = dataclasses.replace(self.verification, touching=touching)

    @property
    def alpha0(self):
        a = self.regularity.alpha0
        return default_alpha0(self.operator.kind) if a is None else a

    def expressions(self):
        return {"f": parse_expression(self.data.f), "g": parse_expression(self.data.g)}

    def to_ini(self):
        """INI text that :func:`parse_config` maps back to this configuration."""
        d, op, p = self.domain, self.operator, self.degeneracy
        s, v, r = self.solver, self.verification, self.regularity
        t = v.touching
        frames = "" if op.frames is None else "; ".join(
            " ".join(f"({','.join(str(c) for c in e)})" for e in fr) for fr in op.frames)
        sec = {
            "run": {"seed": str(self.seed)},
            "domain": {"shape": d.shape.value, "dim": str(d.dim), "extent": fmt(d.extent),
                       "h": fmt(d.h), "R": fmt(d.R)},
            "operator": {"kind": op.kind.value, "lambda": fmt(op.lam), "Lambda": fmt(op.Lam),
                         "weight": fmt(op.weight), "frames": frames},
            "degeneracy": {"theta1": fmt(p.theta1), "theta2": fmt(p.theta2),
                           "allow_equal": str(p.allow_equal).lower()},
            "data": {"f": self.data.f, "g": self.data.g, "exact": self.data.exact},
            "solver": {
                "tol_inner": fmt(s.tol_inner), "tol_fixed_point": fmt(s.tol_fixed_point),
                "tol_continuation": fmt(s.tol_continuation), "damping": fmt(s.damping),
                "pseudo_time_step": fmt(s.pseudo_time_step),
                "max_inner_iters": str(s.max_inner_iters),
                "max_outer_iters": str(s.max_outer_iters),
                "max_continuation_steps": str(s.max_continuation_steps),
                "epsilon_schedule": s.epsilon_schedule.value, "method": s.method,
                "residual_form": s.residual_form, "gradient": s.gradient.value,
                "epsilon_floor": "" if self.epsilon_floor is None else fmt(self.epsilon_floor)},
            "verification": {
                "sample_count": str(t.sample_count), "gradient_range": fmt(t.gradient_range),
                "hessian_range": fmt(t.hessian_range),
                "tol_touch": "" if t.tol_touch is None else fmt(t.tol_touch), "c1": fmt(t.c1),
                "gamma": fmt(v.gamma), "C0": "" if v.C0 is None else fmt(v.C0),
                "pucci_tol": "" if v.pucci_tol is None else fmt(v.pucci_tol)},
            "regularity": {
                "probes": "" if r.probes is None else "; ".join(
                    ", ".join(fmt(c) for c in pt) for pt in r.probes),
                "rho": fmt(r.rho), "n_scales": str(r.n_scales),
                "r0": "" if r.r0 is None else fmt(r.r0), "tau": fmt(r.tau),
                "alphas": ", ".join(fmt(a) for a in r.alphas),
                "alpha0": "" if r.alpha0 is None else fmt(r.alpha0),
                "sign_tol": fmt(r.sign_tol)},
            "barriers": {"eta_levels": str(self.barriers.eta_levels),
                         "epsilons": ", ".join(fmt(e) for e in self.barriers.epsilons)},
            "oracle": {"kind": self.oracle.kind, "width": fmt(self.oracle.width)},
            "output": {"directory": self.output.directory,
                       "formats": ", ".join(self.output.formats)},
        }
        lines = []
        for name, items in sec.items():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {val}" for k, val in items.items())
            lines.append("")
        return "\n".join(lines)


KNOWN = {
    "run": {"seed"},
    "domain": {"shape", "dim", "extent", "h", "r"},
    "operator": {"kind", "lambda", "lambda_", "weight", "frames"},
    "degeneracy": {"theta1", "theta2", "allow_equal"},
    "data": {"f", "g", "exact"},
    "solver": {f.name for f in dataclasses.fields(SolveConfig)} | {"epsilon_floor"},
    "verification": {"sample_count", "gradient_range", "hessian_range", "tol_touch", "c1",
                     "gamma", "c0", "pucci_tol"},
    "regularity": {"probes", "rho", "n_scales", "r0", "tau", "alphas", "alpha0", "sign_tol"},
    "barriers": {"eta_levels", "epsilons"},
    "oracle": {"kind", "width"},
    "output": {"directory", "formats"},
    "manifest": None,  # run record appended by the CLI; ignored on input
}


def _frames(text, key):
    text = text.strip()
    if not text:
        return None
    frames = []
    for part in text.split(";"):
        vecs = []
        for tok in part.replace(" ", "").replace(")(", ")|(").split("|"):
            tok = tok.strip()
            if not tok:
                continue
            if not (tok.startswith("(") and tok.endswith(")")):
                raise ConfigurationError(f"bad direction {tok!r}", key)
            try:
                vecs.append(tuple(int(c) for c in tok[1:-1].split(",")))
            except ValueError as exc:
                raise ConfigurationError(f"bad direction {tok!r}", key) from exc
        if vecs:
            frames.append(tuple(vecs))
    return tuple(frames) or None


class _Reader:
    def __init__(self, parser):
        self.p = parser

    def raw(self, sec, key, default=None):
        if self.p.has_section(sec) and self.p.has_option(sec, key):
            return self.p.get(sec, key).strip()
        return default

    def num(self, sec, key, default, optional=False):
        raw = self.raw(sec, key)
        if raw is None or (optional and raw == ""):
            return default
        return parse_number(raw, f"{sec}.{key}")

    def integer(self, sec, key, default):
        raw = self.raw(sec, key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigurationError(f"expected an integer, got {raw!r}", f"{sec}.{key}") from exc

    def boolean(self, sec, key, default):
        raw = self.raw(sec, key)
        if raw is None:
            return default
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"expected a boolean, got {raw!r}", f"{sec}.{key}")

    def numbers(self, sec, key, default):
        raw = self.raw(sec, key)
        if raw is None or raw == "":
            return default
        return tuple(parse_number(t, f"{sec}.{key}") for t in raw.split(",") if t.strip())


def parse_config_text(text, source="<string>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#", ";"),
                                       interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {source}: {exc}") from exc
    for sec in parser.sections():
        if sec.lower() not in KNOWN:
            raise ConfigurationError(f"unknown section [{sec}]", sec)
        allowed = KNOWN[sec.lower()]
        if allowed is None:
            continue
        for key in parser.options(sec):
            k = key.lower()
            if k not in allowed and not (sec == "operator" and key == "Lambda"):
                raise ConfigurationError("unknown key", f"{sec}.{key}")
    rd = _Reader(parser)

    shape = rd.raw("domain", "shape", "interval")
    try:
        shape = Shape(shape)
    except ValueError as exc:
        raise ConfigurationError(f"unknown shape {shape!r}", "domain.shape") from exc
    dim = rd.integer("domain", "dim", 1 if shape is Shape.INTERVAL else 2)
    domain = DomainSpec(shape, dim, rd.num("domain", "h", 1 / 64), rd.num("domain", "extent", 1.0),
                        rd.num("domain", "R", 1.0))

    kind = rd.raw("operator", "kind", "negative_trace")
    try:
        kind = OperatorKind(kind)
    except ValueError as exc:
        raise ConfigurationError(f"unknown operator {kind!r}", "operator.kind") from exc
    lam = rd.num("operator", "lambda", 1.0)
    Lam = rd.num("operator", "Lambda", 1.0)
    operator = EllipticOperatorSpec(kind, lam, Lam, _frames(rd.raw("operator", "frames", ""),
                                                            "operator.frames"),
                                    rd.num("operator", "weight", 0.5))

    if rd.raw("degeneracy", "theta1") is None or rd.raw("degeneracy", "theta2") is None:
        raise ConfigurationError("theta1 and theta2 are required", "degeneracy")
    degeneracy = DegeneracyParams(rd.num("degeneracy", "theta1", None),
                                  rd.num("degeneracy", "theta2", None), 0.5,
                                  rd.boolean("degeneracy", "allow_equal", False))

    data = DataSection(rd.raw("data", "f", "0"), rd.raw("data", "g", "0"), rd.raw("data", "exact", ""))
    for key in ("f", "g", "exact"):
        val = getattr(data, key)
        if val:
            try:
                parse_expression(val)(np.zeros((1, domain.dim)))
            except ConfigurationError as exc:
                raise ConfigurationError(str(exc), f"data.{key}") from exc

    sd = SolveConfig()
    solver = SolveConfig(
        tol_inner=rd.num("solver", "tol_inner", sd.tol_inner),
        tol_fixed_point=rd.num("solver", "tol_fixed_point", sd.tol_fixed_point),
        tol_continuation=rd.num("solver", "tol_continuation", sd.tol_continuation),
        damping=rd.num("solver", "damping", sd.damping),
        pseudo_time_step=rd.num("solver", "pseudo_time_step", sd.pseudo_time_step),
        max_inner_iters=rd.integer("solver", "max_inner_iters", sd.max_inner_iters),
        max_outer_iters=rd.integer("solver", "max_outer_iters", sd.max_outer_iters),
        max_continuation_steps=rd.integer("solver", "max_continuation_steps",
                                          sd.max_continuation_steps),
        epsilon_schedule=_enum(Schedule, rd.raw("solver", "epsilon_schedule", sd.epsilon_schedule.value),
                               "solver.epsilon_schedule"),
        method=rd.raw("solver", "method", sd.method),
        residual_form=rd.raw("solver", "residual_form", sd.residual_form),
        gradient=_enum(Gradient, rd.raw("solver", "gradient", sd.gradient.value), "solver.gradient"),
        keep_snapshots=rd.boolean("solver", "keep_snapshots", sd.keep_snapshots),
    )
    floor = rd.num("solver", "epsilon_floor", None, optional=True)
    if floor is not None and not 0 < floor < 1:
        raise ConfigurationError("must lie in (0, 1)", "solver.epsilon_floor")

    td = TouchingTestConfig()
    seed = rd.integer("run", "seed", 0)
    touching = TouchingTestConfig(
        sample_count=rd.integer("verification", "sample_count", td.sample_count), seed=seed,
        gradient_range=rd.num("verification", "gradient_range", td.gradient_range),
        hessian_range=rd.num("verification", "hessian_range", td.hessian_range),
        tol_touch=rd.num("verification", "tol_touch", None, optional=True),
        c1=rd.num("verification", "c1", td.c1))
    C0 = rd.num("verification", "C0", None, optional=True)
    if C0 is not None and C0 < 0:
        raise ConfigurationError("must be >= 0", "verification.C0")
    gamma = rd.num("verification", "gamma", 1.0)
    if not gamma > 0:
        raise ConfigurationError("must be positive", "verification.gamma")
    verification = VerificationSection(touching, gamma, C0,
                                       rd.num("verification", "pucci_tol", None, optional=True))

    probes_raw = rd.raw("regularity", "probes", "")
    probes = None
    if probes_raw:
        probes = []
        for part in probes_raw.split(";"):
            if part.strip():
                pt = tuple(parse_number(c, "regularity.probes") for c in part.split(","))
                if len(pt) != domain.dim:
                    raise ConfigurationError(f"probe {part.strip()!r} is not {domain.dim}-D",
                                             "regularity.probes")
                probes.append(pt)
        probes = tuple(probes)
    regularity = RegularitySection(
        probes, rd.num("regularity", "rho", 0.5), rd.integer("regularity", "n_scales", 4),
        rd.num("regularity", "r0", None, optional=True), rd.num("regularity", "tau", 0.5),
        rd.numbers("regularity", "alphas", (0.25, 0.5)),
        rd.num("regularity", "alpha0", None, optional=True),
        rd.num("regularity", "sign_tol", 0.0))
    if not 0 < regularity.rho < 1:
        raise ConfigurationError("must lie in (0, 1)", "regularity.rho")
    if not 0 < regularity.tau < 1:
        raise ConfigurationError("must lie in (0, 1)", "regularity.tau")
    if regularity.alpha0 is not None and not 0 < regularity.alpha0 <= 1:
        raise ConfigurationError("must lie in (0, 1]", "regularity.alpha0")
    if any(not 0 < a <= 1 for a in regularity.alphas):
        raise ConfigurationError("exponents must lie in (0, 1]", "regularity.alphas")

    barriers = BarrierSection(rd.integer("barriers", "eta_levels", 6),
                              rd.numbers("barriers", "epsilons", (0.5, 0.1, 0.02)))
    if barriers.eta_levels < 1:
        raise ConfigurationError("must be >= 1", "barriers.eta_levels")
    if any(not 0 < e < 1 for e in barriers.epsilons):
        raise ConfigurationError("must lie in (0, 1)", "barriers.epsilons")

    oracle = OracleSection(rd.raw("oracle", "kind", "two_phase"), rd.num("oracle", "width", 0.05))
    if oracle.kind not in ("one_phase", "two_phase", "two_phase_mollified"):
        raise ConfigurationError(f"unknown oracle {oracle.kind!r}", "oracle.kind")

    formats = tuple(t.strip() for t in rd.raw("output", "formats", "csv, pgm").split(",") if t.strip())
    if any(f not in ("csv", "pgm") for f in formats):
        raise ConfigurationError(f"formats must be csv and/or pgm, got {formats}", "output.formats")
    output = OutputSection(rd.raw("output", "directory", "out"), formats)

    return RunConfig(domain, operator, degeneracy, data, solver, floor, verification, regularity,
                     barriers, oracle, output, seed)


def _enum(cls, raw, key):
    try:
        return cls(raw)
    except ValueError as exc:
        raise ConfigurationError(f"unknown value {raw!r}", key) from exc


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file {path} does not exist", "config") from exc
    except UnicodeDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not UTF-8", "config") from exc
    return parse_config_text(text, str(path))
