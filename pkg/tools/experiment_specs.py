"""
Experiment and sweep spec files.

Spec files are JSON documents validated by the pydantic models below. Command
line overrides use dotted paths into the raw document (`solver.lambda=4.0`)
and are applied before validation, so an override naming an unknown key
fails exactly like a bad file would.
"""
import json
from pathlib import Path
from typing import Annotated, Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from tools.discrepancy import DiscrepancyConfig
from tools.errors import SpecError
from tools.forward_models import OperatorForm
from tools.regularizer import RegularizationParams
from tools.st_solver import SolverConfig, StepRule

MAX_SEED = 2 ** 64 - 1

SPEC_CONFIG = ConfigDict(extra="forbid", populate_by_name=True, allow_inf_nan=False)


class ModelSpec(BaseModel):
    c: int = Field(default=2, ge=1)
    d: int = Field(default=3, ge=1)
    form: OperatorForm = OperatorForm.ADDITIVE
    rescale: float = Field(default=0.05, gt=0.0)

    model_config = SPEC_CONFIG


class SolverSpec(BaseModel):
    eta: float = Field(default=1.0, ge=0.0, le=1.0)
    lam: float = Field(default=4.0, alias="lambda", gt=0.0)
    step: StepRule = StepRule()
    max_iters: int = Field(default=500, ge=1)
    grad_tol: float | None = Field(default=None, ge=0.0)
    divergence_guard: float = Field(default=1e12, gt=0.0)
    x0_scale: float = Field(default=1e-6, ge=0.0)

    model_config = SPEC_CONFIG


class DiscrepancySpec(BaseModel):
    alpha0: float = Field(default=1.0, gt=0.0)
    tau: float = Field(default=1.1, ge=1.0)
    max_halvings: int = Field(default=12, ge=1)

    model_config = SPEC_CONFIG


class ExperimentSpec(BaseModel):
    name: str = "benchmark"
    n: int = Field(default=200, ge=1)
    m_ratio: float = Field(default=0.4, gt=0.0, le=1.0)
    sparsity_ratio: float = Field(default=0.2, gt=0.0, le=1.0)
    model: ModelSpec = ModelSpec()
    noise_db: float | Literal["none"] = 30.0
    solver: SolverSpec = SolverSpec()
    alpha: Annotated[float, Field(gt=0.0)] | Literal["discrepancy", "a-priori"] = 0.125
    apriori_scale: float = Field(default=0.25, gt=0.0)
    discrepancy: DiscrepancySpec = DiscrepancySpec()
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    trials: int = Field(default=10, ge=1)
    trace_trial: int | None = Field(default=0, ge=0)
    snapshot_iters: list[int] = Field(default_factory=lambda: [5, 40, 80, 100])

    model_config = SPEC_CONFIG

    @property
    def m(self) -> int:
        return round(self.m_ratio * self.n)

    @property
    def s(self) -> int:
        return round(self.sparsity_ratio * self.m)

    @model_validator(mode="after")
    def _check_sizes(self):
        if self.m < 1:
            raise ValueError(f"m = round(m_ratio * n) = {self.m} must be at least 1")
        if self.s < 1:
            raise ValueError(f"s = round(sparsity_ratio * m) = {self.s} must be at least 1")
        if self.trace_trial is not None and self.trace_trial >= self.trials:
            raise ValueError(f"trace_trial {self.trace_trial} is outside 0..{self.trials - 1}")
        return self

    def solver_config(self, alpha: float) -> SolverConfig:
        return SolverConfig(
            reg=RegularizationParams(alpha=alpha, eta=self.solver.eta),
            lam=self.solver.lam,
            step=self.solver.step,
            max_iters=self.solver.max_iters,
            grad_tol=self.solver.grad_tol,
            divergence_guard=self.solver.divergence_guard,
        )

    def discrepancy_config(self, delta: float) -> DiscrepancyConfig:
        return DiscrepancyConfig(delta=delta, **self.discrepancy.model_dump())

    def to_document(self) -> dict:
        return self.model_dump(mode="json", by_alias=True)


class SweepAxis(BaseModel):
    """One table axis: a dotted key, its values, and keys that move in lockstep."""

    key: str
    values: list[Any] = Field(min_length=1)
    labels: list[str] | None = None
    linked: dict[str, list[Any]] = Field(default_factory=dict)

    model_config = SPEC_CONFIG

    @model_validator(mode="after")
    def _same_lengths(self):
        if self.labels is not None and len(self.labels) != len(self.values):
            raise ValueError(f"axis {self.key}: {len(self.labels)} labels for {len(self.values)} values")
        for key, values in self.linked.items():
            if len(values) != len(self.values):
                raise ValueError(f"axis {self.key}: linked key {key} has {len(values)} values, expected {len(self.values)}")
        return self

    def __len__(self) -> int:
        return len(self.values)

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else _label(self.values[i])

    def overrides(self, i: int) -> dict[str, Any]:
        found = {self.key: self.values[i]}
        for key, values in self.linked.items():
            found[key] = values[i]
        return found


class SweepSpec(BaseModel):
    name: str
    base: ExperimentSpec
    columns: SweepAxis
    rows: SweepAxis | None = None
    metric: Literal["snr", "relative_error"] = "snr"

    model_config = SPEC_CONFIG


def _label(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return json.dumps(value, sort_keys=True)
    return str(value)


def parse_override(text: str) -> tuple[str, Any]:
    """'solver.lambda=4.0' -> ('solver.lambda', 4.0). Non-JSON values stay strings."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise SpecError(f"override '{text}' is not of the form KEY=VALUE")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw.strip()
    return key, value


def set_dotted(document: dict, path: str, value: Any) -> dict:
    node = document
    parts = path.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        elif not isinstance(child, dict):
            raise SpecError(f"override '{path}': '{part}' is not a section")
        node = child
    node[parts[-1]] = value
    return document


def read_json(path) -> dict:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError as e:
        raise SpecError(f"spec file not found: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise SpecError(f"could not read spec file {path}: {e}") from e
    if not isinstance(document, dict):
        raise SpecError(f"spec file {path} must hold a JSON object")
    return document


def _apply(document: dict, overrides) -> dict:
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        set_dotted(document, key, value)
    return document


def _validate(model, document: dict, origin: str):
    try:
        return model.model_validate(document)
    except ValidationError as e:
        raise SpecError(f"invalid {origin}:\n{e}") from e


def build_experiment_spec(document: dict, overrides=(), seed: int | None = None) -> ExperimentSpec:
    document = _apply(json.loads(json.dumps(document)), overrides)
    if seed is not None:
        document["seed"] = seed
    return _validate(ExperimentSpec, document, "experiment spec")


def derive_spec(base: ExperimentSpec, overrides: dict[str, Any], name: str | None = None) -> ExperimentSpec:
    """A copy of `base` with dotted-path overrides applied and re-validated."""
    document = base.to_document()
    if name is not None:
        document["name"] = name
    return build_experiment_spec(document, overrides.items())


def is_sweep_document(document: dict) -> bool:
    return "base" in document and "columns" in document


def build_sweep_spec(document: dict, overrides=(), seed: int | None = None) -> SweepSpec:
    document = json.loads(json.dumps(document))
    document["base"] = build_experiment_spec(document.get("base", {}), overrides, seed).to_document()
    return _validate(SweepSpec, document, "sweep spec")


def load_experiment_spec(path, overrides=(), seed: int | None = None) -> ExperimentSpec:
    return build_experiment_spec(read_json(path), overrides, seed)


def load_sweep_spec(path, overrides=(), seed: int | None = None) -> SweepSpec:
    return build_sweep_spec(read_json(path), overrides, seed)
