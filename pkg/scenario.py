"""
VTSI Sim - Scenario Module
Scenario configuration, builtin case catalog, run dispatch, speed sweeps and convergence studies
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml

from bridge import BC_KINDS, BridgeModel, assemble_bridge, dead_load_deflection, natural_frequencies, rayleigh_damping
from contact_lcp import contact_multipliers
from coupling import INTERP_KINDS, Coupling, influence_row
from exceptions import ConfigError, IntegrationError, ModelError, SingularSystemError, VtsiError
from integrate_bathe import BatheIntegrator
from integrate_bauchau import BauchauIntegrator, rolling_start, solve_coupling, static_init
from irregularity import CLASS6_TOLERANCE, PSD_DEFAULTS, generate
from metrics import compare_traces, convergence_deltas
from oracle import DaeModel, DirectCoupledSolver, bdf_solve
from simulation_trace import CSV_FLOAT_FORMAT, Probe, SimulationTrace
from train import CarSpec, TrainModel, build_train, load_train_matrices, suspension_damping

logger = logging.getLogger(__name__)


# ============================================================================
# CONSTANTS
# ============================================================================

SCHEMES = ("bauchau", "bathe", "oracle-bdf1", "oracle-bdf2", "oracle-direct")
CONTACT_MODES = ("bilateral", "lcp")
DEFAULT_PROBES = ("bridge:u@midspan", "bridge:a@midspan", "train:u@car1.wheel1")
CLEAR_MARGIN = 0.1   # s simulated after the last wheel leaves the span

MIDSPAN_U = "bridge:u@midspan"
MIDSPAN_A = "bridge:a@midspan"


# ============================================================================
# CONFIGURATION TYPES
# ============================================================================

@dataclass(frozen=True)
class BridgeSpec:
    """Continuous beam: equal element count per span, Rayleigh damping on modes 1 and 2."""
    spans: Tuple[float, ...] = (30.0, 30.0)
    elements: int = 100
    E: float = 29e9
    I_y: float = 8.65
    mu: float = 36000.0
    bc: str = "fixed_ends"
    approach_elements: int = 0
    damping_ratio: float = 0.05
    damping_modes: Tuple[int, int] = (1, 2)
    self_weight: bool = False

    def __post_init__(self):
        if not self.spans or any(not s > 0 for s in self.spans):
            raise ConfigError(f"bridge.spans must be positive lengths, got {self.spans}")
        if self.elements < 1:
            raise ConfigError(f"bridge.elements must be >= 1, got {self.elements}")
        if min(self.E, self.I_y, self.mu) <= 0:
            raise ConfigError("bridge.E, bridge.I_y and bridge.mu must be positive")
        if self.bc not in BC_KINDS:
            raise ConfigError(f"bridge.bc must be one of {BC_KINDS}, got '{self.bc}'")
        if self.approach_elements < 0:
            raise ConfigError("bridge.approach_elements must be >= 0")
        if self.damping_ratio < 0:
            raise ConfigError("bridge.damping_ratio must be >= 0")


@dataclass(frozen=True)
class TrainSpec:
    """
    Cars rear to front. n_cars repeats a single listed car; matrix_file
    replaces the car list with an imported model.
    """
    cars: Tuple[CarSpec, ...] = ()
    n_cars: Optional[int] = None
    gaps: Optional[Tuple[float, ...]] = None
    articulation: Tuple[Tuple[str, str], ...] = ()
    matrix_file: Optional[str] = None

    def __post_init__(self):
        if self.matrix_file is None and not self.cars:
            raise ConfigError("train needs cars or a matrix_file")
        if self.n_cars is not None:
            if len(self.cars) != 1:
                raise ConfigError("train.n_cars requires exactly one listed car")
            if self.n_cars < 1:
                raise ConfigError(f"train.n_cars must be >= 1, got {self.n_cars}")

    def car_list(self) -> List[CarSpec]:
        return list(self.cars) * (self.n_cars or 1)


@dataclass(frozen=True)
class IrregularitySpec:
    """
    Seeded PSD profile. params overrides PSD_DEFAULTS and is stored as
    sorted (name, value) pairs; a mapping is accepted on construction.
    """
    enabled: bool = False
    seed: int = 0
    params: Tuple[Tuple[str, float], ...] = ()
    tolerance: float = CLASS6_TOLERANCE
    zero_before: float = 0.0

    def __post_init__(self):
        try:
            raw = self.params or ()
            pairs = dict(raw.items() if isinstance(raw, Mapping) else raw)
            params = tuple(sorted((str(k), float(v)) for k, v in pairs.items()))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"irregularity.params must map names to numbers: {exc}") from None
        object.__setattr__(self, "params", params)
        unknown = {k for k, _ in params} - set(PSD_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown irregularity.params keys: {sorted(unknown)}")
        if not self.tolerance > 0:
            raise ConfigError("irregularity.tolerance must be positive")

    def param_dict(self) -> Dict[str, float]:
        return dict(self.params)


@dataclass(frozen=True)
class ScenarioConfig:
    """
    One simulation run.

    position is the front wheel's x at t = 0 (the first span starts at 0);
    t_end None runs until the last wheel has left the bridge plus CLEAR_MARGIN.
    """
    name: str = "custom"
    bridge: BridgeSpec = field(default_factory=BridgeSpec)
    train: TrainSpec = field(default_factory=lambda: TrainSpec(cars=(case_car(0.0),)))
    speed: float = 110.0
    position: float = 0.0
    dt: float = 1e-3
    t_end: Optional[float] = None
    scheme: str = "bauchau"
    constraint_interp: str = "hermite"
    contact_mode: str = "bilateral"
    irregularity: IrregularitySpec = field(default_factory=IrregularitySpec)
    probes: Tuple[str, ...] = DEFAULT_PROBES
    output: Optional[str] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_end is not None and not self.t_end > 0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got '{self.scheme}'")
        if self.constraint_interp not in INTERP_KINDS:
            raise ConfigError(f"constraint_interp must be one of {INTERP_KINDS}, got '{self.constraint_interp}'")
        if self.contact_mode not in CONTACT_MODES:
            raise ConfigError(f"contact_mode must be one of {CONTACT_MODES}, got '{self.contact_mode}'")
        check_compatibility(self)


def check_compatibility(config: ScenarioConfig) -> None:
    """Reject option combinations no solver path supports."""
    if config.constraint_interp == "bspline" and config.bridge.bc != "fixed_ends":
        raise ConfigError("B-spline constraint interpolation needs fixed bridge ends")
    if config.contact_mode == "lcp" and config.scheme != "bathe":
        raise ConfigError("unilateral (lcp) contact is only available with the bathe scheme")
    if config.scheme.startswith("oracle") and config.constraint_interp != "hermite":
        raise ConfigError(f"{config.scheme} supports Hermite constraint interpolation only")
    if config.scheme == "oracle-direct" and config.contact_mode != "bilateral":
        raise ConfigError("oracle-direct supports bilateral contact only")


# ============================================================================
# DICT / YAML I/O
# ============================================================================

def _check_keys(data: Any, cls, path: str) -> Dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    allowed = {f.name for f in fields(cls)}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path + '.' if path else ''}{key}'")
    return dict(data)


def _tuple(value: Any, path: str, item: Callable = float) -> Tuple:
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
    try:
        return tuple(item(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _numbers(data: Dict, keys: Sequence[str], path: str, kind: Callable = float) -> None:
    """Coerce scalar entries in place; YAML reads '29e9' (no dot) as a string."""
    for key in keys:
        if data.get(key) is None:
            continue
        try:
            data[key] = kind(data[key])
        except (TypeError, ValueError):
            raise ConfigError(f"{path}{key}: expected a number, got {data[key]!r}") from None


def _car_from_dict(data: Any, path: str) -> CarSpec:
    data = _check_keys(data, CarSpec, path)
    try:
        return CarSpec(**{k: (int(v) if k == "n_wheels" else float(v)) for k, v in data.items()})
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except ModelError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _bridge_from_dict(data: Any) -> BridgeSpec:
    data = _check_keys(data, BridgeSpec, "bridge")
    _numbers(data, ("E", "I_y", "mu", "damping_ratio"), "bridge.")
    _numbers(data, ("elements", "approach_elements"), "bridge.", int)
    if "spans" in data:
        data["spans"] = _tuple(data["spans"], "bridge.spans")
    if "damping_modes" in data:
        data["damping_modes"] = _tuple(data["damping_modes"], "bridge.damping_modes", int)
    return BridgeSpec(**data)


def _train_from_dict(data: Any) -> TrainSpec:
    data = _check_keys(data, TrainSpec, "train")
    if "cars" in data:
        data["cars"] = tuple(_car_from_dict(c, f"train.cars[{i}]") for i, c in enumerate(data["cars"] or ()))
    if data.get("gaps") is not None:
        data["gaps"] = _tuple(data["gaps"], "train.gaps")
    if "articulation" in data:
        pairs = data["articulation"] or ()
        data["articulation"] = tuple(_tuple(p, "train.articulation", str) for p in pairs)
    return TrainSpec(**data)


def config_from_dict(data: Any) -> ScenarioConfig:
    """
    Build a ScenarioConfig from nested plain data.

    Raises:
        ConfigError: unknown keys, wrong types or incompatible options
    """
    data = _check_keys(data, ScenarioConfig, "")
    _numbers(data, ("speed", "position", "dt", "t_end"), "")
    if "bridge" in data:
        data["bridge"] = _bridge_from_dict(data["bridge"])
    if "train" in data:
        data["train"] = _train_from_dict(data["train"])
    if "irregularity" in data:
        irr = _check_keys(data["irregularity"], IrregularitySpec, "irregularity")
        _numbers(irr, ("tolerance", "zero_before"), "irregularity.")
        _numbers(irr, ("seed",), "irregularity.", int)
        data["irregularity"] = IrregularitySpec(**irr)
    if "probes" in data:
        data["probes"] = _tuple(data["probes"], "probes", str)
    try:
        return ScenarioConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _plain(value: Any) -> Any:
    if isinstance(value, IrregularitySpec):
        data = {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
        data["params"] = value.param_dict()
        return data
    if hasattr(value, "__dataclass_fields__"):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, Mapping):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return value.item()
    return value


def config_to_dict(config: ScenarioConfig) -> Dict:
    """Nested plain data (lists, dicts, Python scalars) accepted by config_from_dict."""
    return _plain(config)


def config_hash(config: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form."""
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return config_from_dict(data or {})


def save_config(config: ScenarioConfig, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=False)
    logger.info("Config written to %s", path)


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=False)


def apply_overrides(
    config: ScenarioConfig,
    scheme: Optional[str] = None,
    dt: Optional[float] = None,
    elements: Optional[int] = None,
    speed: Optional[float] = None,
    seed: Optional[int] = None,
    t_end: Optional[float] = None,
    probes: Optional[Sequence[str]] = None,
    output: Optional[str] = None,
) -> ScenarioConfig:
    """Command-line overrides; a seed also switches the irregularity on."""
    changes: Dict[str, Any] = {}
    if scheme is not None:
        changes["scheme"] = scheme
    if dt is not None:
        changes["dt"] = dt
    if speed is not None:
        changes["speed"] = speed
    if t_end is not None:
        changes["t_end"] = t_end
    if probes:
        changes["probes"] = tuple(probes)
    if output is not None:
        changes["output"] = output
    if elements is not None:
        changes["bridge"] = replace(config.bridge, elements=elements)
    if seed is not None:
        changes["irregularity"] = replace(config.irregularity, enabled=True, seed=seed)
    return replace(config, **changes) if changes else config


# ============================================================================
# CASE CATALOG
# ============================================================================

def case_car(m_w: float) -> CarSpec:
    """Single passenger car used by Cases 1-5."""
    return CarSpec(
        m_c=60000.0, I_c=1.125e6, m_w=m_w,
        k_s=5e6, c_s=suspension_damping(0.05, 5e6, 60000.0),
        l_c=15.0, l_ct=20.0,
    )


def _two_span(bc: str) -> BridgeSpec:
    approach = 3 if bc == "fixed_ends" else 0
    return BridgeSpec(spans=(30.0, 30.0), elements=100, bc=bc, approach_elements=approach)


def _case6(irregular: bool) -> ScenarioConfig:
    car = CarSpec(
        m_c=100000.0, I_c=506670.0, m_w=1000.0,
        k_s=5e7, c_s=suspension_damping(0.05, 5e7, 100000.0),
        l_c=6.0, l_ct=9.0,
    )
    return ScenarioConfig(
        name="case6-irregular" if irregular else "case6",
        bridge=BridgeSpec(spans=(25.0, 25.0), elements=100, E=22e9, I_y=4.0, mu=38000.0, approach_elements=3,
                          self_weight=True),
        train=TrainSpec(cars=(car, car), gaps=(3.0,)),
        speed=110.0,
        scheme="bathe",
        contact_mode="lcp",
        irregularity=IrregularitySpec(enabled=irregular, seed=6),
        probes=DEFAULT_PROBES + ("train:u@car1.wheel2", "train:u@car2.wheel1"),
    )


CASES: Dict[str, Tuple[str, Callable[[], ScenarioConfig]]] = {
    "case1": ("Two-span fixed bridge, one car, massless wheels",
              lambda: ScenarioConfig(name="case1", bridge=_two_span("fixed_ends"),
                                     train=TrainSpec(cars=(case_car(0.0),)))),
    "case2": ("Two-span fixed bridge, one car, 1000 kg wheels",
              lambda: ScenarioConfig(name="case2", bridge=_two_span("fixed_ends"),
                                     train=TrainSpec(cars=(case_car(1000.0),)))),
    "case3": ("Two-span simply supported bridge, one car, massless wheels",
              lambda: ScenarioConfig(name="case3", bridge=_two_span("simply_supported"),
                                     train=TrainSpec(cars=(case_car(0.0),)))),
    "case4": ("Two-span simply supported bridge, one car, 1000 kg wheels",
              lambda: ScenarioConfig(name="case4", bridge=_two_span("simply_supported"),
                                     train=TrainSpec(cars=(case_car(1000.0),)))),
    "case5": ("Single 30 m simply supported span, ten cars (resonance)",
              lambda: ScenarioConfig(name="case5",
                                     bridge=BridgeSpec(spans=(30.0,), elements=50, bc="simply_supported"),
                                     train=TrainSpec(cars=(case_car(1000.0),), n_cars=10),
                                     speed=94.0, dt=2e-3, scheme="bathe")),
    "case6": ("Two-span fixed bridge, two cars, unilateral contact",
              lambda: _case6(False)),
    "case6-irregular": ("Case 6 with a Class-6 irregularity profile",
                        lambda: _case6(True)),
}


def builtin_case(name: str) -> ScenarioConfig:
    try:
        return CASES[name][1]()
    except KeyError:
        raise ConfigError(f"unknown case '{name}', expected one of {list(CASES)}") from None


def list_cases() -> pd.DataFrame:
    rows = []
    for name, (description, factory) in CASES.items():
        cfg = factory()
        rows.append({
            "case": name,
            "description": description,
            "scheme": cfg.scheme,
            "contact": cfg.contact_mode,
            "speed": cfg.speed,
            "elements": cfg.bridge.elements,
            "dt": cfg.dt,
        })
    return pd.DataFrame(rows)


# ============================================================================
# MODEL BUILDING
# ============================================================================

def build_bridge(spec: BridgeSpec) -> BridgeModel:
    element_length = spec.spans[0] / spec.elements
    approach = (spec.approach_elements * element_length, spec.approach_elements) if spec.approach_elements else None
    model = assemble_bridge(
        [(length, spec.elements) for length in spec.spans],
        EI=spec.E * spec.I_y,
        mu=spec.mu,
        bc_kind=spec.bc,
        approach=approach,
        self_weight=spec.self_weight,
    )
    if spec.damping_ratio > 0:
        model = rayleigh_damping(model, spec.damping_ratio, spec.damping_modes)
    return model


def build_train_model(spec: TrainSpec) -> TrainModel:
    if spec.matrix_file is not None:
        return load_train_matrices(spec.matrix_file)
    return build_train(spec.car_list(), gaps=spec.gaps, shared_dofs=spec.articulation or None)


def build_models(config: ScenarioConfig) -> Tuple[BridgeModel, TrainModel, Coupling]:
    """Bridge, train and the coupling evaluator of a scenario."""
    bridge = build_bridge(config.bridge)
    train = build_train_model(config.train)

    profile = None
    irr = config.irregularity
    if irr.enabled:
        profile = generate(
            irr.seed, irr.param_dict(), tolerance=irr.tolerance,
            domain=(float(bridge.node_x[0]), float(bridge.node_x[-1])),
            zero_before=irr.zero_before,
        )

    coupling = Coupling(train, bridge, config.speed, config.position, profile, config.constraint_interp)
    return bridge, train, coupling


def resolve_t_end(config: ScenarioConfig, coupling: Coupling) -> float:
    if config.t_end is not None:
        return config.t_end
    t_clear = coupling.clear_time()
    if not np.isfinite(t_clear) or t_clear <= 0:
        raise ConfigError("t_end cannot be derived for a train that never leaves the bridge")
    return t_clear + CLEAR_MARGIN


def resolve_probes(labels: Sequence[str], bridge: BridgeModel, train: TrainModel) -> List[Probe]:
    """
    Parse probe labels.

    bridge:<u|v|a|r>@<x|midspan> reads the deflection (or rotation for r) at
    x; train:<u|v|a>@<dof label> reads one train DOF.
    """
    probes = []
    for label in labels:
        try:
            target, where = label.split("@", 1)
            subsystem, quantity = target.split(":", 1)
        except ValueError:
            raise ConfigError(f"malformed probe '{label}'") from None

        if subsystem == "bridge":
            x = bridge.span_midpoint(0) if where == "midspan" else _parse_float(where, label)
            x_start, x_end = bridge.span_extent
            if not x_start <= x <= x_end:
                raise ConfigError(f"probe '{label}' lies off the span [{x_start}, {x_end}]")
            if quantity == "r":
                probes.append(Probe(label, "bridge", "u", influence_row(bridge, x, order=1)))
            elif quantity in ("u", "v", "a"):
                probes.append(Probe(label, "bridge", quantity, influence_row(bridge, x)))
            else:
                raise ConfigError(f"probe '{label}': unknown bridge quantity '{quantity}'")
        elif subsystem == "train":
            if quantity not in ("u", "v", "a"):
                raise ConfigError(f"probe '{label}': unknown train quantity '{quantity}'")
            try:
                dof = train.dof(where)
            except ModelError as exc:
                raise ConfigError(f"probe '{label}': {exc}") from None
            weights = np.zeros(train.n_dof)
            weights[dof] = 1.0
            probes.append(Probe(label, "train", quantity, weights))
        else:
            raise ConfigError(f"probe '{label}': unknown subsystem '{subsystem}'")
    return probes


def _parse_float(text: str, label: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"probe '{label}': '{text}' is neither a position nor 'midspan'") from None


# ============================================================================
# RUN
# ============================================================================

@dataclass(eq=False)
class RunResult:
    """Trace of a run with the models and probes it was produced from."""
    trace: SimulationTrace
    bridge: BridgeModel
    train: TrainModel
    probes: List[Probe]

    def frame(self) -> pd.DataFrame:
        return self.trace.to_frame(self.probes)

    def probe(self, label: str) -> np.ndarray:
        for p in self.probes:
            if p.label == label:
                return self.trace.probe(p)
        (p,) = resolve_probes((label,), self.bridge, self.train)
        return self.trace.probe(p)


def simulate(config: ScenarioConfig) -> RunResult:
    """
    Static initialization followed by the selected scheme up to t_end.

    Raises:
        ConfigError / ModelError: invalid or incompatible input
        IntegrationError: numerical failure, with the step index
    """
    started = time.perf_counter()
    bridge, train, coupling = build_models(config)
    t_end = resolve_t_end(config, coupling)
    probes = resolve_probes(config.probes, bridge, train)
    logger.info(
        "Run '%s': scheme=%s, contact=%s, interp=%s, dt=%g, t_end=%.4g s, %d bridge DOFs, %d wheels",
        config.name, config.scheme, config.contact_mode, config.constraint_interp,
        config.dt, t_end, bridge.n_dof, train.n_wheels,
    )

    try:
        static, lam0 = static_init(train.system, bridge.system, train.Lt, coupling(0.0))
    except SingularSystemError as exc:
        raise IntegrationError(config.scheme, 0, 0.0, exc) from exc
    initial = rolling_start(static, train.Lt, coupling.rates(0.0))

    scheme = config.scheme
    if scheme == "bauchau":
        trace = BauchauIntegrator(train.system, bridge.system, train.Lt, coupling, config.dt).run(initial, lam0, t_end)
    elif scheme == "bathe":
        unilateral = config.contact_mode == "lcp"
        solver = contact_multipliers if unilateral else solve_coupling
        integrator = BatheIntegrator(train.system, bridge.system, train.Lt, coupling, config.dt, solver)
        trace = integrator.run(initial, lam0, t_end, unilateral=unilateral)
    elif scheme in ("oracle-bdf1", "oracle-bdf2"):
        model = DaeModel(train.system, bridge.system, train.Lt, coupling)
        trace = bdf_solve(model, initial, lam0, config.dt, t_end, order=int(scheme[-1]))
    else:
        trace = DirectCoupledSolver(train, bridge.system, coupling, config.dt).run(initial, t_end)

    midspan = influence_row(bridge, bridge.span_midpoint(0))
    trace.metadata.update({
        "case": config.name,
        "config_hash": config_hash(config),
        "contact_mode": config.contact_mode,
        "constraint_interp": config.constraint_interp,
        "t_end": t_end,
        "train_weight": train.total_weight,
        "static_lambda": lam0.tolist(),
        "dead_load_midspan": float(midspan @ dead_load_deflection(bridge)),
        "probes": [p.label for p in probes],
    })
    logger.info("Run '%s' finished in %.2f s", config.name, time.perf_counter() - started)
    return RunResult(trace, bridge, train, probes)


def run(config: ScenarioConfig) -> SimulationTrace:
    return simulate(config).trace


def write_result(result: RunResult, path: Union[str, Path]) -> None:
    """CSV with columns t, <probe labels>, lambda_1..lambda_k."""
    result.trace.to_csv(path, result.probes)


# ============================================================================
# PARALLEL HARNESSES
# ============================================================================

def _map(fn: Callable, items: Sequence, workers: int) -> List:
    """Results in input order; workers <= 1 runs in-process."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _peak(values: np.ndarray) -> float:
    return float(np.max(np.abs(values)))


def _sweep_entry(config: ScenarioConfig) -> Dict:
    row: Dict[str, Any] = {"speed": config.speed, "max_abs_u": np.nan, "max_abs_a": np.nan, "error": None}
    try:
        result = simulate(config)
        row["max_abs_u"] = _peak(result.probe(MIDSPAN_U))
        row["max_abs_a"] = _peak(result.probe(MIDSPAN_A))
    except VtsiError as exc:
        row["error"] = str(exc)
    return row


def sweep_speed(config: ScenarioConfig, speeds: Sequence[float], workers: int = 1) -> pd.DataFrame:
    """
    Independent runs per speed; peak midspan displacement and acceleration.

    Failed speeds are kept as rows with the error message.
    """
    if len(speeds) == 0:
        raise ConfigError("speed sweep needs at least one speed")
    configs = [replace(config, speed=float(v), name=f"{config.name}@{float(v):g}") for v in speeds]
    logger.info("Speed sweep '%s': %d speeds, %d workers", config.name, len(configs), workers)
    rows = _map(_sweep_entry, configs, workers)
    for row in rows:
        if row["error"]:
            logger.warning("Sweep speed %g m/s failed: %s", row["speed"], row["error"])
    return pd.DataFrame(rows, columns=["speed", "max_abs_u", "max_abs_a", "error"])


def _convergence_entry(config: ScenarioConfig) -> Dict:
    result = simulate(config)
    wheel1 = result.trace.train_u @ -result.train.Lt[0]
    return {
        "max_contact_force": float(np.max(result.trace.lam)),
        "max_midspan_u": _peak(result.probe(MIDSPAN_U)),
        "max_wheel1_u": _peak(wheel1),
    }


def convergence_study(
    config: ScenarioConfig,
    elements: Sequence[int] = (),
    dts: Sequence[float] = (),
    workers: int = 1,
) -> pd.DataFrame:
    """
    Refinement in elements per span (at the config dt) and in dt (at the
    config element count), tracking max contact force, max |midspan u| and
    max |wheel-1 u| with successive relative deltas.
    """
    if not elements and not dts:
        raise ConfigError("convergence study needs an element list or a dt list")

    levels: List[Tuple[str, float, ScenarioConfig]] = []
    for n in elements:
        levels.append(("elements", n, replace(config, bridge=replace(config.bridge, elements=int(n)))))
    for dt in dts:
        levels.append(("dt", dt, replace(config, dt=float(dt))))
    logger.info("Convergence study '%s': %d levels, %d workers", config.name, len(levels), workers)

    results = _map(_convergence_entry, [cfg for _, _, cfg in levels], workers)
    frame = pd.DataFrame([{"parameter": p, "value": v, **r} for (p, v, _), r in zip(levels, results)])
    for column in ("max_contact_force", "max_midspan_u", "max_wheel1_u"):
        deltas: List[Optional[float]] = []
        for parameter in ("elements", "dt"):
            values = frame.loc[frame["parameter"] == parameter, column].tolist()
            deltas.extend(convergence_deltas(values))
        frame[f"delta_{column}"] = deltas
    return frame


def compare(config: ScenarioConfig, scheme_a: str, scheme_b: str) -> pd.DataFrame:
    """Relative L-inf delta of scheme_a against scheme_b per probe and contact force."""
    result_a = simulate(replace(config, scheme=scheme_a))
    result_b = simulate(replace(config, scheme=scheme_b))
    table = compare_traces(result_a.trace, result_b.trace, result_a.probes)
    table.insert(0, "schemes", f"{scheme_a} vs {scheme_b}")
    return table


def predicted_resonance_speed(config: ScenarioConfig) -> float:
    """First bridge frequency times the length of the first car."""
    f1 = float(natural_frequencies(build_bridge(config.bridge), 1)[0])
    return f1 * config.train.car_list()[0].l_ct


def write_table(table: pd.DataFrame, path: Union[str, Path]) -> None:
    table.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info("Table written to %s (%d rows)", path, len(table))
