"""Experiment configuration: a single dataclass covering all scenarios, the
JSON (de)serialization used by the CLI, and per-scenario defaults.

Configuration files are JSON objects whose keys are the field names of
:class:`ExperimentConfig`; unknown keys are rejected. Scenario-specific keys
(all optional, defaults per scenario):

  similar_factors   dims, R, sigma_n, sigma_np, sigma_c_grid, methods
  shared_component  dims, R, sigma_n, sigma_np, sigma_c, coupled_cols
  compressed        dims, R, ranks, sigma_c, snr_y_grid, snr_yp, coupled_iters
  gamma_coupling    dims, R, beta/beta_p/beta_c, phi/phi_p/phi_c, collinear_corr
  sampling_rates    dims, R, freqs, t_span, L, sigma_c, hard_sigma_c,
                    sigma_np, sigma_n_grid, variant ("sweep"|"reconstruction"),
                    snr_yp (reconstruction variant), fine_grid_size
  warm_cold         dims, R, sigma_n, sigma_np, sigma_c_grid

``solver`` holds overrides for the solver configuration (AlsConfig fields for
the Gaussian scenarios, MuConfig fields for gamma_coupling).
"""

import dataclasses
import json
from dataclasses import dataclass, field

SCENARIOS = (
    "similar_factors",
    "shared_component",
    "compressed",
    "gamma_coupling",
    "sampling_rates",
    "warm_cold",
)


@dataclass
class ExperimentConfig:
    scenario: str
    trials: int = 50
    seed: int = 0
    workers: int = 1
    out: str | None = None
    methods: tuple = ("uncoupled", "coupled")
    dims: tuple = (10, 10, 10, 10, 10, 10)  # (I, J, K, I', J', K')
    R: int = 3
    solver: dict = field(default_factory=dict)
    # Gaussian noise / coupling parameters
    sigma_n: float | None = None
    sigma_np: float | None = None
    sigma_c: float | None = None
    sigma_c_grid: tuple | None = None
    hard_sigma_c: float | None = None
    sigma_n_grid: tuple | None = None
    snr_y_grid: tuple | None = None
    snr_yp: float | None = None
    coupled_cols: tuple | None = None
    # Tweedie parameters (gamma_coupling)
    beta: float = 2.0
    beta_p: float = 2.0
    beta_c: float = 2.0
    phi: float = 0.5
    phi_p: float = 0.05
    phi_c: float = 0.05
    collinear_corr: float | None = None
    # compression
    ranks: tuple | None = None
    coupled_iters: int = 50
    # interpolation (sampling_rates)
    freqs: tuple | None = None
    t_span: float = 4.0
    L: int = 100
    variant: str = "sweep"
    fine_grid_size: int = 5000

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for name in ("methods", "dims", "sigma_c_grid", "sigma_n_grid", "snr_y_grid",
                     "coupled_cols", "ranks", "freqs"):
            v = getattr(self, name)
            if isinstance(v, list):
                setattr(self, name, tuple(v))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(d: dict) -> ExperimentConfig:
    unknown = set(d) - _FIELDS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**d)


def default_config(scenario: str) -> ExperimentConfig:
    """Scenario defaults matching the reference simulation setups."""
    if scenario == "similar_factors":
        return ExperimentConfig(
            scenario=scenario,
            trials=100,
            dims=(10, 10, 10, 10, 10, 10),
            R=3,
            sigma_n=0.1,
            sigma_np=0.001,
            sigma_c_grid=(0.5, 0.1, 0.01, 5e-4, 5e-6),  # 1/sigma_c from 2 to 2e5
            methods=("uncoupled", "coupled", "hard"),
            solver={"normalization": "first_row", "restarts": 1},
        )
    if scenario == "shared_component":
        return ExperimentConfig(
            scenario=scenario,
            trials=200,
            dims=(10, 10, 10, 10, 10, 10),
            R=2,
            sigma_n=0.05,
            sigma_np=0.05,
            sigma_c=0.001,
            coupled_cols=(0,),
            methods=("uncoupled", "coupled"),
            solver={"restarts": 1},
        )
    if scenario == "compressed":
        return ExperimentConfig(
            scenario=scenario,
            trials=3,
            dims=(100, 100, 100, 100, 100, 100),
            R=5,
            ranks=(5, 5, 5),
            sigma_c=0.001,
            snr_y_grid=(4.0,),
            snr_yp=22.0,
            coupled_iters=50,
            methods=("uncoupled", "coupled", "coupled_compressed"),
            solver={"restarts": 1, "warm_iters": 100, "update_mode": "sequential"},
        )
    if scenario == "gamma_coupling":
        return ExperimentConfig(
            scenario=scenario,
            trials=50,
            dims=(10, 10, 10, 10, 10, 10),
            R=3,
            beta=2.0,
            beta_p=2.0,
            beta_c=2.0,
            phi=0.5,
            phi_p=0.05,
            phi_c=0.05,
            collinear_corr=0.99997,
            methods=("uncoupled", "coupled"),
            solver={"restarts": 1},
        )
    if scenario == "sampling_rates":
        return ExperimentConfig(
            scenario=scenario,
            trials=200,
            dims=(10, 10, 37, 10, 10, 53),
            R=3,
            freqs=(2.05, 2.55, 3.5),
            t_span=4.0,
            L=100,
            sigma_c=0.15,
            hard_sigma_c=1e-4,
            sigma_np=0.01,
            sigma_n_grid=(0.001, 0.0032, 0.01, 0.032, 0.1),
            methods=("uncoupled", "coupled", "hard"),
            solver={"restarts": 1},
        )
    if scenario == "warm_cold":
        return ExperimentConfig(
            scenario=scenario,
            trials=100,
            dims=(10, 10, 10, 10, 10, 10),
            R=3,
            sigma_n=0.03,
            sigma_np=0.01,
            sigma_c_grid=(0.001, 0.01, 0.1, 0.3, 1.0),
            methods=("warm", "cold"),
            solver={"normalization": "first_row", "restarts": 1},
        )
    raise ValueError(f"unknown scenario {scenario!r}")


def reconstruction_defaults() -> ExperimentConfig:
    """The low/high-resolution reconstruction variant of sampling_rates."""
    cfg = default_config("sampling_rates")
    return dataclasses.replace(
        cfg,
        variant="reconstruction",
        dims=(10, 10, 24, 10, 10, 37),
        freqs=(3.22, 3.47, 3.73),
        sigma_n=0.001,
        snr_yp=-5.61,
        sigma_n_grid=None,
        methods=("uncoupled", "coupled"),
        trials=200,
    )


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path) as fh:
        d = json.load(fh)
    if overrides:
        d.update(overrides)
    return config_from_dict(d)


def save_config(path, config: ExperimentConfig):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")
