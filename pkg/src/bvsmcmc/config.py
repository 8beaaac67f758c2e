"""Experiment configuration: schema, presets and YAML round-tripping."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .datagen import SimSpec, generate_yang, load_csv
from .linmodel import Dataset, PriorSpec
from .proposals import DEFAULT_EPS, Balancing
from .samplers import DEFAULT_TAU, SAMPLERS, RunConfig
from .adapt import DEFAULT_PI0

__all__ = [
    "ConfigError",
    "DataConfig",
    "PriorConfig",
    "ExperimentConfig",
    "DATA_PRESETS",
    "PRIOR_PRESETS",
    "DEFAULTS_PROVENANCE",
    "load_config",
    "dump_config",
]

OUTPUT_DIR_ENV = "BVSMCMC_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


DATA_PRESETS = {
    "snr2_small": dict(n=200, p=10, snr=2.0, sigma2=1.0, rho=0.6),
}

PRIOR_PRESETS = ("yang", "tecator_like", "pcr_like", "snp_like")

DEFAULTS_PROVENANCE = {
    "g": "9, simulated-data setup of the reference experiments",
    "h": "10/p for the yang preset (1/2 when p <= 10, see decisions ledger)",
    "L": "25 chains, as in the reference experiments",
    "tau": "0.65 for arni/parni_rm (recommended informed-kernel target); 0.234 for asi/arn",
    "s": "5, suggested target neighbourhood size",
    "pi0": "0.001, configurable shrinkage of the RB estimate inside the proposal",
    "eps": "0.001, bound keeping adaptive parameters inside (eps, 1 - eps)",
    "max_pk": "12, cost guard on ARNI neighbourhood enumeration",
    "rho": "0.6 AR(1) correlation of simulated covariates",
    "sigma2": "1, residual variance of simulated data",
}


def _known(cls, d: dict, where: str) -> dict:
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return d


@dataclass
class DataConfig:
    """Either simulated data (``source: sim``) or a CSV file (``source: csv``)."""

    source: str = "sim"
    preset: str | None = "snr2_small"
    n: int | None = None
    p: int | None = None
    snr: float | None = None
    sigma2: float = 1.0
    rho: float = 0.6
    seed: int = 0
    path: str | None = None
    response: str | None = None
    standardize: bool = False
    expand: bool = False

    def __post_init__(self):
        if self.source not in ("sim", "csv"):
            raise ConfigError(f"data.source must be 'sim' or 'csv', got {self.source!r}")
        if self.source == "csv":
            self.preset = None
        if self.source == "sim":
            if self.preset is not None:
                if self.preset not in DATA_PRESETS:
                    raise ConfigError(f"unknown data preset {self.preset!r}; choose from {sorted(DATA_PRESETS)}")
            elif None in (self.n, self.p, self.snr):
                raise ConfigError("simulated data needs n, p and snr (or a preset)")
        elif not self.path or not self.response:
            raise ConfigError("csv data needs path and response")

    def sim_spec(self) -> SimSpec:
        # explicit fields override the preset
        params = dict(DATA_PRESETS[self.preset]) if self.preset is not None else {}
        params.update({k: v for k, v in dict(n=self.n, p=self.p, snr=self.snr).items() if v is not None})
        params.update(sigma2=self.sigma2, rho=self.rho)
        try:
            return SimSpec(seed=self.seed, **params)
        except ValueError as e:
            raise ConfigError(f"data: {e}") from None

    def build(self, base_dir: Path | None = None) -> Dataset:
        if self.source == "sim":
            return generate_yang(self.sim_spec())[0]
        path = Path(self.path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_csv(path, self.response, standardize=self.standardize, expand=self.expand)


@dataclass
class PriorConfig:
    """Either a named preset or explicit PriorSpec fields; explicit fields override a preset."""

    preset: str | None = None
    g: float | None = None
    v_form: str | None = None
    model_prior: str | None = None
    h: float | None = None
    a: float | None = None
    b: float | None = None

    def __post_init__(self):
        if self.preset is not None and self.preset not in PRIOR_PRESETS:
            raise ConfigError(f"unknown prior preset {self.preset!r}; choose from {list(PRIOR_PRESETS)}")

    def _preset_values(self, p: int) -> dict:
        if self.preset == "yang":
            return dict(g=9.0, v_form="identity", model_prior="fixed", h=10.0 / p if p > 10 else 0.5)
        if self.preset == "tecator_like":
            return dict(g=100.0, v_form="identity", model_prior="fixed", h=5.0 / 100)
        if self.preset == "pcr_like":
            return dict(g=0.5, v_form="identity", model_prior="betabinomial", a=1.0, b=(p - 5) / 5)
        if self.preset == "snp_like":
            return dict(g=0.25, v_form="identity", model_prior="fixed", h=5.0 / p)
        return dict(g=9.0, v_form="identity", model_prior="fixed")

    def build(self, p: int) -> PriorSpec:
        values = self._preset_values(p)
        for f in ("g", "v_form", "model_prior", "h", "a", "b"):
            v = getattr(self, f)
            if v is not None:
                values[f] = v
        if values.get("model_prior") == "fixed":
            values.pop("a", None)
            values.pop("b", None)
            values.setdefault("h", 10.0 / p if p > 10 else 0.5)
        try:
            return PriorSpec(**values)
        except ValueError as e:
            raise ConfigError(f"prior: {e}") from None


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    sampler: str = "parni_kw"
    balancing: str = "hastings"
    L: int = 25
    iterations: int = 5000
    burn_in: int = 1000
    seed: int = 0
    tau: float | None = None
    s: float = 5.0
    pi0: float = DEFAULT_PI0
    eps: float = DEFAULT_EPS
    max_pk: int = 12
    output_dir: str | None = None
    time_budget_s: float | None = None
    workers: int = 1
    keep_trace: bool = True

    def __post_init__(self):
        if isinstance(self.data, dict):
            self.data = DataConfig(**_known(DataConfig, self.data, "data"))
        if isinstance(self.prior, dict):
            self.prior = PriorConfig(**_known(PriorConfig, self.prior, "prior"))
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}; choose from {', '.join(SAMPLERS)}")
        try:
            Balancing(self.balancing)
        except ValueError:
            raise ConfigError(
                f"unknown balancing {self.balancing!r}; choose from {', '.join(b.value for b in Balancing)}"
            ) from None
        if self.L < 1:
            raise ConfigError(f"L must be at least 1, got {self.L}")
        if self.sampler == "parni_kw" and self.L < 2:
            raise ConfigError("parni_kw needs L >= 2")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be positive, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError(f"burn_in must lie in [0, iterations), got {self.burn_in}")
        if self.tau is not None and not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.s <= 0:
            raise ConfigError(f"s must be positive, got {self.s}")
        if not 0 < self.pi0 < 0.5:
            raise ConfigError(f"pi0 must lie in (0, 1/2), got {self.pi0}")
        if not 0 < self.eps < 0.25:
            raise ConfigError(f"eps must lie in (0, 1/4), got {self.eps}")
        if self.max_pk < 1:
            raise ConfigError(f"max_pk must be positive, got {self.max_pk}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.time_budget_s is not None and self.time_budget_s <= 0:
            raise ConfigError(f"time_budget_s must be positive, got {self.time_budget_s}")

    @property
    def target_accept(self) -> float:
        return DEFAULT_TAU[self.sampler] if self.tau is None else self.tau

    def run_config(self) -> RunConfig:
        return RunConfig(
            sampler=self.sampler,
            iterations=self.iterations,
            burn_in=self.burn_in,
            balancing=self.balancing,
            tau=self.tau,
            s=self.s,
            max_pk=self.max_pk,
            time_budget_s=self.time_budget_s,
            workers=self.workers,
            keep_trace=self.keep_trace,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError(f"config must be a mapping, got {type(d).__name__}")
        try:
            return cls(**_known(cls, dict(d), "config"))
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def replace(self, **changes) -> "ExperimentConfig":
        return self.from_dict({**self.to_dict(), **changes})


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from None
    return ExperimentConfig.from_dict(raw or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
