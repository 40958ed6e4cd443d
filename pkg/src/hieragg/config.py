"""Experiment configuration files (JSON).

Example::

    {
      "mode": "mc",
      "tree": {"shapes": [[3, 6], [729, 1]]},
      "marginal": {"kind": "lognormal", "mean": 670000, "sd": 8.1e6},
      "copula": {"kind": "gaussian", "grid": [0, 0.2, 0.4, 0.6, 0.8, 1]},
      "alpha": 0.01,
      "n_sims": 100000,
      "seed": 7,
      "output": "lognormal_gauss.csv"
    }

``tree`` also accepts ``{"k": 3, "m": 6}`` or ``{"k": 3, "m": [1, 2, 3]}``.
Clayton grids may contain the string ``"inf"`` for the comonotone limit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any

from .copulas import CopulaKind, CopulaSpec
from .errors import ConfigError, HieraggError
from .marginals import MarginalKind, MarginalSpec

MODES = ("analytic", "mc", "both", "covariance", "compare-shapes")

# Monte-Carlo stand-ins for the rho = 1 and theta = inf endpoints
RHO_ONE_MC = 0.999
THETA_INF_MC = 50.0


@dataclass(frozen=True)
class ExperimentConfig:
    shapes: tuple[tuple[int, int], ...]
    marginal_kind: MarginalKind = MarginalKind.NORMAL
    mean: float = 0.0
    sd: float = 1.0
    copula_kind: CopulaKind = CopulaKind.GAUSSIAN
    grid: tuple[float, ...] = (0.0,)
    alpha: float = 0.01
    n_sims: int = 100_000
    seed: int = 0
    output: str | None = None
    mode: str = "analytic"

    def marginal(self) -> MarginalSpec:
        if self.marginal_kind is MarginalKind.NORMAL:
            return MarginalSpec.normal(self.mean, self.sd)
        return MarginalSpec.lognormal_moments(self.mean, self.sd)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "tree": {"shapes": [list(s) for s in self.shapes]},
            "marginal": {"kind": self.marginal_kind.value, "mean": self.mean, "sd": self.sd},
            "copula": {"kind": self.copula_kind.value, "grid": [_dump_param(g) for g in self.grid]},
            "alpha": self.alpha,
            "n_sims": self.n_sims,
            "seed": self.seed,
            "output": self.output,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "mode" in kw and kw["mode"] not in MODES:
            raise ConfigError(f"unknown mode {kw['mode']!r}", field="mode")
        return validate(replace(self, **kw))


def _dump_param(g: float):
    return "inf" if math.isinf(g) else g


def _number(value, field: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=field)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", field=field)
    if not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {value!r}", field=field)
    return int(value) if integer else float(value)


def _grid_value(value, field: str) -> float:
    if value == "inf":
        return math.inf
    return _number(value, field)


def _shapes(tree: Any) -> tuple[tuple[int, int], ...]:
    if not isinstance(tree, dict):
        raise ConfigError("expected an object", field="tree")
    if "shapes" in tree:
        raw = tree["shapes"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("expected a non-empty list of [k, m] pairs", field="tree.shapes")
        out = []
        for i, s in enumerate(raw):
            if not isinstance(s, list) or len(s) != 2:
                raise ConfigError(f"expected [k, m], got {s!r}", field=f"tree.shapes[{i}]")
            out.append((_number(s[0], f"tree.shapes[{i}][0]", True), _number(s[1], f"tree.shapes[{i}][1]", True)))
        return tuple(out)
    if "k" not in tree or "m" not in tree:
        raise ConfigError("needs either 'shapes' or both 'k' and 'm'", field="tree")
    k = _number(tree["k"], "tree.k", True)
    ms = tree["m"] if isinstance(tree["m"], list) else [tree["m"]]
    return tuple((k, _number(m, f"tree.m[{i}]", True)) for i, m in enumerate(ms))


def from_dict(doc: Any) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object")
    known = {"mode", "tree", "marginal", "copula", "alpha", "n_sims", "seed", "output"}
    for key in doc:
        if key not in known:
            raise ConfigError("unknown field", field=key)
    mode = doc.get("mode", "analytic")
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}", field="mode")
    if "tree" not in doc:
        raise ConfigError("missing", field="tree")
    marg = doc.get("marginal", {"kind": "normal", "mean": 0.0, "sd": 1.0})
    cop = doc.get("copula", {"kind": "gaussian", "grid": [0.0]})
    if not isinstance(marg, dict):
        raise ConfigError("expected an object", field="marginal")
    if not isinstance(cop, dict):
        raise ConfigError("expected an object", field="copula")
    try:
        mkind = MarginalKind(marg.get("kind", "normal"))
    except ValueError:
        raise ConfigError(f"unknown marginal kind {marg.get('kind')!r}", field="marginal.kind") from None
    try:
        ckind = CopulaKind(cop.get("kind", "gaussian"))
    except ValueError:
        raise ConfigError(f"unknown copula kind {cop.get('kind')!r}", field="copula.kind") from None
    grid = cop.get("grid", [0.0])
    if not isinstance(grid, list) or not grid:
        raise ConfigError("expected a non-empty list", field="copula.grid")
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("expected a string path", field="output")
    cfg = ExperimentConfig(
        shapes=_shapes(doc["tree"]),
        marginal_kind=mkind,
        mean=_number(marg.get("mean", 0.0), "marginal.mean"),
        sd=_number(marg.get("sd", 1.0), "marginal.sd"),
        copula_kind=ckind,
        grid=tuple(_grid_value(g, f"copula.grid[{i}]") for i, g in enumerate(grid)),
        alpha=_number(doc.get("alpha", 0.01), "alpha"),
        n_sims=_number(doc.get("n_sims", 100_000), "n_sims", True),
        seed=_number(doc.get("seed", 0), "seed", True),
        output=output,
        mode=mode,
    )
    return validate(cfg)


def loads(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from None
    return from_dict(doc)


def load(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return loads(text)


def copula_for(kind: CopulaKind, k: int, value: float, mc: bool) -> tuple[CopulaSpec, float]:
    """Copula for one grid value, and the parameter actually used.

    In Monte-Carlo mode rho = 1 becomes 0.999 and theta = inf becomes 50.
    Clayton theta = 0 is the independence copula.
    """
    used = value
    if kind is CopulaKind.INDEPENDENCE:
        return CopulaSpec.independence(k), 0.0
    if kind is CopulaKind.GAUSSIAN:
        if mc and value >= 1.0:
            used = RHO_ONE_MC
        return CopulaSpec.gaussian(k, used), used
    if mc and math.isinf(value):
        used = THETA_INF_MC
    if used == 0.0:
        return CopulaSpec.independence(k), used
    return CopulaSpec.clayton(k, used), used


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    for i, (k, m) in enumerate(cfg.shapes):
        if k < 2:
            raise ConfigError(f"k must be >= 2, got {k}", field=f"tree.shapes[{i}][0]")
        if m < 1:
            raise ConfigError(f"m must be >= 1, got {m}", field=f"tree.shapes[{i}][1]")
    if not 0.0 < cfg.alpha < 1.0:
        raise ConfigError(f"must lie in (0, 1), got {cfg.alpha}", field="alpha")
    if cfg.n_sims < 2:
        raise ConfigError(f"must be >= 2, got {cfg.n_sims}", field="n_sims")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise ConfigError(f"must be an unsigned 64-bit integer, got {cfg.seed}", field="seed")
    try:
        cfg.marginal()
    except HieraggError as exc:
        raise ConfigError(str(exc), field="marginal") from None

    gaussian_only = cfg.mode in ("analytic", "both", "covariance", "compare-shapes")
    if gaussian_only:
        if cfg.marginal_kind is not MarginalKind.NORMAL:
            raise ConfigError(f"mode {cfg.mode!r} needs a normal marginal", field="marginal.kind")
        if cfg.copula_kind is not CopulaKind.GAUSSIAN:
            raise ConfigError(f"mode {cfg.mode!r} needs a gaussian copula", field="copula.kind")
    if cfg.mode == "compare-shapes":
        sizes = {k**m for k, m in cfg.shapes}
        if len(sizes) != 1:
            raise ConfigError("all shapes must have the same number of leaves", field="tree.shapes")
    if cfg.mode == "covariance" and (len(cfg.shapes) != 1 or len(cfg.grid) != 1):
        raise ConfigError("covariance mode takes exactly one shape and one grid value", field="tree")

    mc = cfg.mode in ("mc", "both")
    for i, g in enumerate(cfg.grid):
        f = f"copula.grid[{i}]"
        if cfg.copula_kind is CopulaKind.GAUSSIAN and math.isinf(g):
            raise ConfigError("rho must be finite", field=f)
        if cfg.copula_kind is CopulaKind.CLAYTON and g < 0:
            raise ConfigError(f"theta must be >= 0, got {g}", field=f)
        if cfg.copula_kind is CopulaKind.GAUSSIAN and g > 1.0:
            raise ConfigError(f"rho must be <= 1, got {g}", field=f)
        for k, _ in cfg.shapes:
            if cfg.mode in ("analytic", "compare-shapes"):
                # closed forms accept rho = 1 as a limit
                if not g > -1.0 / (k - 1):
                    raise ConfigError(f"rho must exceed {-1.0 / (k - 1):.6g} for k={k}, got {g}", field=f)
                continue
            try:
                copula_for(cfg.copula_kind, k, g, mc)
            except HieraggError as exc:
                raise ConfigError(str(exc), field=f) from None
    return cfg
