"""Built-in sweep grids for the table-shaped studies on the benchmark instance."""
from tools.errors import SpecError
from tools.experiment_specs import ExperimentSpec, SweepAxis, SweepSpec, derive_spec


def benchmark_spec(**overrides) -> ExperimentSpec:
    """n=200, m=80, s=16, c=2, d=3 additive, 30 dB, η=1, λ=4, s^k=1, α=0.125."""
    return derive_spec(ExperimentSpec(), overrides)


def step_size_sweep() -> SweepSpec:
    return SweepSpec(
        name="step_size",
        base=benchmark_spec(**{"solver.max_iters": 2000}),
        columns=SweepAxis(key="solver.step", values=[0.001, 0.01, 0.1, 1.0, 1.5, 2.0, 3.0]),
    )


def lambda_sweep() -> SweepSpec:
    return SweepSpec(
        name="lambda",
        base=benchmark_spec(),
        columns=SweepAxis(
            key="solver.lambda",
            values=[2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 6.0, 7.5, 10.0, 12.5, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0],
        ),
    )


def noise_level_sweep() -> SweepSpec:
    return SweepSpec(
        name="noise_level",
        base=benchmark_spec(),
        rows=SweepAxis(
            key="noise_db",
            values=["none", 50.0, 40.0, 30.0, 20.0, 10.0],
            labels=["noise free", "50dB", "40dB", "30dB", "20dB", "10dB"],
            linked={"alpha": [0.015, 0.031, 0.062, 0.125, 0.125, 0.25]},
        ),
        columns=SweepAxis(key="solver.eta", values=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
    )


def nonlinearity_sweep() -> SweepSpec:
    return SweepSpec(
        name="nonlinearity",
        base=benchmark_spec(),
        rows=SweepAxis(key="model.c", values=[1, 2, 3, 4, 5, 6, 15, 20, 50]),
        columns=SweepAxis(key="model.d", values=list(range(1, 10))),
    )


def eta_sweep() -> SweepSpec:
    return SweepSpec(
        name="eta",
        base=benchmark_spec(),
        columns=SweepAxis(key="solver.eta", values=[0.0, 0.4, 0.8, 1.0]),
    )


PRESETS = {
    "step_size": step_size_sweep,
    "lambda": lambda_sweep,
    "noise_level": noise_level_sweep,
    "nonlinearity": nonlinearity_sweep,
    "eta": eta_sweep,
}


def get_preset(name: str) -> SweepSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise SpecError(f"unknown preset '{name}'; choose from {', '.join(sorted(PRESETS))}") from None
