"""Run configurations: the four built-in examples and a flat key = value file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .mesh import SubdomainSpec

PI = np.pi


def _ex1_target(x, y):
    return -(x - 0.5) ** 2 - (y - 0.5) ** 2 + 0.125


def _ex1_shape(x, y):
    return 0.875 - x ** 2 - y ** 2


def _ex2_force(x, y):
    return 2 * PI ** 2 * np.sin(PI * x) * np.sin(PI * y) + 1.0


def _sine_force(x, y):
    return 2 * PI ** 2 * np.sin(PI * x) * np.sin(PI * y)


def _sine(x, y):
    return np.sin(PI * x) * np.sin(PI * y)


def _ex4_target(x, y):
    return -(x - 0.25) ** 2 - (y - 0.25) ** 2 + 1.0 / 25.0


def _ex4_shape(x, y):
    r2 = x ** 2 + y ** 2
    return np.minimum(np.minimum(1.0 - r2, r2 - 1.0 / 64.0), (x - 0.5) ** 2 + y ** 2 - 1.0 / 16.0)


FUNCTIONS = {
    "ex1_target": _ex1_target,
    "ex1_shape": _ex1_shape,
    "ex2_force": _ex2_force,
    "ex2_target": _sine,
    "ex2_target_mirrored": lambda x, y: -_sine(x, y),
    "sine": _sine,
    "sine_force": _sine_force,
    "ex4_target": _ex4_target,
    "ex4_shape": _ex4_shape,
}


def resolve_function(tag: str):
    """Registered closed form by name, or ``const:<value>``."""
    if tag.startswith("const:"):
        value = float(tag[len("const:"):])
        return lambda x, y: np.full(np.shape(x), value)
    try:
        return FUNCTIONS[tag]
    except KeyError:
        raise ValueError(f"unknown function tag {tag!r}") from None


@dataclass(frozen=True)
class RunConfig:
    example_id: int = 0            # 0 = custom
    grid_n: int = 128
    eps: float = 1e-5
    rho: float = 0.01
    n_samples: int = 100
    seed: int = 0
    max_iters: int = 1000
    direction: str = "simplified"
    objective: str = "on_O"
    subdomain_kind: str = "square"
    subdomain_size: float = 0.5
    subdomain_center: tuple = (0.0, 0.0)
    constrain: bool = True
    f: str = "const:2"
    ud: str = "ex1_target"
    g0: str = "ex1_shape"
    alpha_min: float = 1.0
    alpha_max: float = 10.0
    armijo_c: float = 1e-4
    momentum_beta: float = 0.9
    tol_cost: float = 1e-8
    tol_g: float = 1e-8
    gradient_scaling: str = "lumped"
    cg_tol: float = 1e-10
    preconditioner: str = "jacobi"
    resample: bool = False
    out_dir: str = "out"

    def __post_init__(self):
        from .optimizer import DIRECTION_MODES
        if self.direction not in DIRECTION_MODES:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.objective not in ("on_O", "on_K"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.grid_n < 2 or self.n_samples < 1 or self.seed < 0:
            raise ValueError("grid_n >= 2, n_samples >= 1 and seed >= 0 required")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        from .optimizer import GRADIENT_SCALINGS
        if self.gradient_scaling not in GRADIENT_SCALINGS:
            raise ValueError(f"unknown gradient scaling {self.gradient_scaling!r}")
        if self.preconditioner not in ("jacobi", "mean"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        self.subdomain  # validates the geometry
        for tag in (self.f, self.ud, self.g0):
            resolve_function(tag)

    @property
    def subdomain(self) -> SubdomainSpec:
        if self.subdomain_kind == "none":
            return SubdomainSpec()
        return SubdomainSpec(self.subdomain_kind, float(self.subdomain_size),
                             tuple(float(c) for c in self.subdomain_center))

    def optimizer_params(self):
        from .optimizer import OptimizerParams
        return OptimizerParams(alpha_min=self.alpha_min, alpha_max=self.alpha_max,
                               armijo_c=self.armijo_c, momentum_beta=self.momentum_beta,
                               max_iters=self.max_iters, tol_cost=self.tol_cost,
                               tol_g=self.tol_g, gradient_scaling=self.gradient_scaling)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_EXAMPLE_1 = RunConfig(example_id=1)


def preset(example_id: int) -> RunConfig:
    if example_id == 1:
        return _EXAMPLE_1
    if example_id == 2:
        return _EXAMPLE_1.replace(example_id=2, f="ex2_force", ud="ex2_target")
    if example_id == 3:
        return preset(2).replace(example_id=3, subdomain_kind="disk")
    if example_id == 4:
        return _EXAMPLE_1.replace(example_id=4, objective="on_K", direction="reduced",
                                  subdomain_kind="none", subdomain_size=0.0,
                                  constrain=False, ud="ex4_target", g0="ex4_shape")
    raise ValueError(f"no preset for example {example_id!r}; choose 1-4")


# ---------------------------------------------------------------- file format

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(float(v)) for v in value)
    return str(value)


def _parse_value(name: str, text: str):
    kind = type(getattr(RunConfig, name)) if hasattr(RunConfig, name) else str
    if kind is bool:
        if text.lower() not in ("true", "false"):
            raise ValueError(f"{name}: expected true/false, got {text!r}")
        return text.lower() == "true"
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is tuple:
        return tuple(float(v) for v in text.split(","))
    return text


def format_config(cfg: RunConfig) -> str:
    lines = ["# penshape run configuration"]
    for name in _FIELDS:
        lines.append(f"{name} = {_format_value(getattr(cfg, name))}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) over ``base``.

    An ``example = N`` line selects preset N as the base.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "example":
            key = "example_id"
        if key not in _FIELDS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, val)
    if base is None:
        ex = values.get("example_id", 0)
        base = preset(ex) if ex else RunConfig()
    return dataclasses.replace(base, **values)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_config(cfg))


# ---------------------------------------------------------------- building

@dataclass
class Setup:
    """Concrete objects for a RunConfig."""
    mesh: object
    problem: object
    g0: np.ndarray
    constraint_mask: np.ndarray | None


def build(cfg: RunConfig, threads: int = 1, mesh=None) -> Setup:
    from .assembly import interpolate_nodal
    from .mesh import build_structured_mesh, subdomain_mask
    from .pde import ObjectiveSpec, PenalizedProblem
    from .penalty import sample_set

    if mesh is None:
        mesh = build_structured_mesh(cfg.grid_n)
    u_d = interpolate_nodal(mesh, resolve_function(cfg.ud))
    objective = ObjectiveSpec(cfg.objective, u_d,
                              cfg.subdomain if cfg.objective == "on_O" else SubdomainSpec())
    problem = PenalizedProblem(
        mesh, interpolate_nodal(mesh, resolve_function(cfg.f)), objective, cfg.eps,
        sample_set(mesh, cfg.rho, cfg.seed, cfg.n_samples), tol=cfg.cg_tol,
        threads=threads, preconditioner=cfg.preconditioner)
    mask = None
    if cfg.constrain and cfg.subdomain_kind != "none":
        mask = subdomain_mask(mesh, cfg.subdomain)
    g0 = interpolate_nodal(mesh, resolve_function(cfg.g0))
    return Setup(mesh, problem, g0, mask)
