"""Run configuration: flat ``key = value`` files merged with command-line flags."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from fdacov.errors import ConfigError
from fdacov.inference import ALL_METHODS, InferenceConfig, Method
from fdacov.kernels import KernelFamily, make_kernel
from fdacov.polyfit import QuadratureGrid


def _int_list(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _methods(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(Method(v).value for v in text)
    if str(text).strip() == "all":
        return tuple(mt.value for mt in ALL_METHODS)
    return tuple(Method(v.strip()).value for v in str(text).split(",") if v.strip())


def _dgps(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    text = str(text).strip()
    return (1, 2) if text == "both" else _int_list(text)


def _float_pair(text):
    if text is None or text == "" or str(text) == "None":
        return None
    if isinstance(text, (tuple, list)):
        vals = tuple(float(v) for v in text)
    else:
        vals = tuple(float(v) for v in str(text).split(","))
    if len(vals) != 2:
        raise ValueError("expected two comma-separated numbers")
    return vals


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of the command-line tool, with its default."""

    kernel: str = "gaussian"
    regime: str = "dense"
    alpha: float = 0.1
    seed: int = 0
    nodes_2d: int = 41
    nodes_3d: int = 31
    cov_variant: str = "diagonal"
    derivative_criterion: str = "curve-cv"
    max_quadruples_per_curve: int = 2000
    cv_max_points: int = 800
    grid_size: int = 11
    dgp: tuple = (1,)
    m: tuple = (5, 10, 15)
    n: int = 100
    reps: int = 300
    methods: tuple = tuple(mt.value for mt in ALL_METHODS)
    gamma_weights: tuple | None = None

    def validate(self) -> "RunConfig":
        checks = [
            (self.kernel in {f.value for f in KernelFamily}, "kernel must be gaussian or epanechnikov"),
            (self.regime in ("sparse", "dense"), "regime must be sparse or dense"),
            (0.0 < self.alpha < 1.0, "alpha must lie in (0, 1)"),
            (self.seed >= 0, "seed must be non-negative"),
            (self.nodes_2d >= 3 and self.nodes_3d >= 3, "quadrature needs at least 3 nodes per axis"),
            (self.cov_variant in ("diagonal", "cube"), "cov_variant must be diagonal or cube"),
            (self.derivative_criterion in ("gcv", "curve-cv"), "derivative_criterion must be gcv or curve-cv"),
            (self.max_quadruples_per_curve >= 1, "max_quadruples_per_curve must be positive"),
            (self.cv_max_points >= 10, "cv_max_points must be at least 10"),
            (self.grid_size >= 2, "grid_size must be at least 2"),
            (all(d in (1, 2) for d in self.dgp) and self.dgp, "dgp must be 1, 2 or both"),
            (all(v >= 2 for v in self.m) and self.m, "every m must be at least 2"),
            (self.n >= 5, "n must be at least 5"),
            (self.reps >= 1, "reps must be positive"),
            (len(self.methods) > 0, "methods must not be empty"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def inference_config(self) -> InferenceConfig:
        return InferenceConfig(
            kernel=make_kernel(self.kernel),
            grid=QuadratureGrid(self.nodes_2d, self.nodes_3d),
            cov_variant=self.cov_variant,
            max_quadruples_per_curve=self.max_quadruples_per_curve,
            cv_max_points=self.cv_max_points,
            derivative_criterion=self.derivative_criterion,
            seed=self.seed,
        )


_COERCE = {
    "kernel": str,
    "regime": str,
    "alpha": float,
    "seed": int,
    "nodes_2d": int,
    "nodes_3d": int,
    "cov_variant": str,
    "derivative_criterion": str,
    "max_quadruples_per_curve": int,
    "cv_max_points": int,
    "grid_size": int,
    "dgp": _dgps,
    "m": _int_list,
    "n": int,
    "reps": int,
    "methods": _methods,
    "gamma_weights": _float_pair,
}
assert set(_COERCE) == {f.name for f in fields(RunConfig)}

KNOWN_KEYS = frozenset(_COERCE)


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then config-file values, then command-line overrides (``None`` means unset)."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(merged) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    typed = {}
    for key, value in merged.items():
        try:
            typed[key] = _COERCE[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for {key}: {value!r} ({exc})") from exc
    return replace(RunConfig(), **typed).validate()
