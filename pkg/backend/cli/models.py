from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import Config
from errors import ConfigValidationError, EBCLError
from services.funcspec import FunctionalSpec
from utils.file_ops import file_ops

TOOL_VERSION = "1.0.0"

SUITES = ('smoke', 'acceptance')


class ExperimentConfig(BaseModel):
    """Resolved settings of one run (YAML sections merged with CLI flags)"""

    model_config = ConfigDict(extra='forbid')

    alpha: float = 1.5
    n: int = 1000
    n_ladder: Optional[List[int]] = None
    replicates: int = 200
    functionals: List[str] = Field(default_factory=lambda: ['tau'])
    times: List[float] = Field(default_factory=lambda: [0.0])
    eps: Optional[float] = 0.01
    eps_budget: float = 1e-4
    r_max: Optional[float] = None
    tail_tolerance: float = 1e-4
    seed: int = 20240601
    out: str = 'data/runs'
    format: Literal['csv', 'json'] = 'csv'
    workers: int = 1
    chunk_size: int = 250
    plots: bool = True
    suite: Optional[Literal['smoke', 'acceptance']] = None
    event_log: Optional[str] = None
    block_length: Optional[float] = None
    depth_cap_factor: float = 1e4
    i_max: int = 10_000
    significance: float = 1e-3
    trend_slack: float = 1.2
    reference_size: int = 100_000
    theta_grid: List[float] = Field(default_factory=lambda: [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])

    @field_validator('alpha')
    @classmethod
    def _alpha_range(cls, v):
        if not 1.0 < v < 2.0:
            raise ValueError(f"alpha must lie in (1, 2), got {v}")
        return v

    @field_validator('n')
    @classmethod
    def _n_min(cls, v):
        if v < 2:
            raise ValueError(f"n must be >= 2, got {v}")
        return v

    @field_validator('n_ladder')
    @classmethod
    def _ladder(cls, v):
        if v is None:
            return v
        if any(x < 2 for x in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_ladder must be increasing values >= 2")
        return v

    @field_validator('replicates', 'workers', 'chunk_size', 'i_max', 'reference_size')
    @classmethod
    def _positive_int(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be >= 1, got {v}")
        return v

    @field_validator('eps', 'r_max', 'block_length')
    @classmethod
    def _positive_or_none(cls, v, info):
        if v is not None and not v > 0.0:
            raise ValueError(f"{info.field_name} must be positive, got {v}")
        return v

    @field_validator('eps_budget', 'tail_tolerance', 'significance')
    @classmethod
    def _unit_interval(cls, v, info):
        if not 0.0 < v < 1.0:
            raise ValueError(f"{info.field_name} must lie in (0, 1), got {v}")
        return v

    @field_validator('times')
    @classmethod
    def _increasing_times(cls, v):
        if not v:
            raise ValueError("at least one query time is required")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("times must be strictly increasing")
        return v

    @field_validator('functionals')
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("at least one functional is required")
        return v

    @model_validator(mode='after')
    def _functionals_admissible(self):
        # exponent gate zeta < 1/alpha; x^(1-alpha) fails for alpha >= (1 + sqrt 5)/2
        for text in self.functionals:
            try:
                FunctionalSpec.parse(text, self.alpha)
            except EBCLError as exc:
                raise ValueError(f"functional {text!r}: {exc}") from exc
        return self

    # ------------------------------------------------------------------

    @classmethod
    def from_sources(cls, cfg: Config, overrides: Optional[Dict[str, Any]] = None) -> 'ExperimentConfig':
        """
        Merge config.yaml sections with non-None CLI overrides

        Raises:
            ConfigValidationError: field-level messages for every invalid value
        """
        experiment = cfg.section('experiment')
        limits = cfg.section('limits')
        data: Dict[str, Any] = {
            'alpha': experiment.get('alpha'),
            'n': experiment.get('n'),
            'n_ladder': experiment.get('n_ladder'),
            'replicates': experiment.get('replicates'),
            'functionals': _as_list(experiment.get('functional')),
            'times': experiment.get('times'),
            'seed': cfg.master_seed,
            'eps': limits.get('eps', 0.01),
            'eps_budget': limits.get('eps_budget'),
            'r_max': limits.get('r_max'),
            'tail_tolerance': limits.get('tail_tolerance'),
            'out': cfg.out_dir,
            'format': cfg.output_format,
            'plots': cfg.plots_enabled,
            'workers': cfg.workers,
            'chunk_size': cfg.chunk_size,
            'block_length': cfg.block_length,
            'depth_cap_factor': cfg.depth_cap_factor,
            'i_max': cfg.i_max,
            'significance': cfg.significance,
            'trend_slack': cfg.trend_slack,
            'reference_size': cfg.reference_size,
            'theta_grid': cfg.theta_grid,
        }
        data = {k: v for k, v in data.items() if v is not None or k in ('eps',)}
        for key, value in (overrides or {}).items():
            if value is not None:
                data[key] = value
        try:
            return cls(**data)
        except ValidationError as exc:
            errors = {}
            for err in exc.errors():
                field = '.'.join(str(p) for p in err['loc']) or 'config'
                errors[field] = err['msg']
            raise ConfigValidationError(errors) from None

    def ladder(self) -> List[int]:
        """Sample sizes a run covers: the n-ladder when given, else [n]"""
        return list(self.n_ladder) if self.n_ladder else [self.n]

    def specs(self) -> List[FunctionalSpec]:
        return [FunctionalSpec.parse(text, self.alpha) for text in self.functionals]

    def config_hash(self) -> str:
        """sha256 of the canonical JSON of every setting that affects outputs"""
        payload = self.model_dump(exclude={'workers', 'chunk_size', 'out', 'plots'})
        return file_ops.hash_payload(payload)

    def provenance(self) -> Dict[str, Any]:
        return {'config_hash': self.config_hash(), 'tool_version': TOOL_VERSION, 'seed': self.seed}


def _as_list(value) -> Optional[List[str]]:
    if value is None:
        return None
    if isinstance(value, str):
        return [value]
    return [str(v) for v in value]
