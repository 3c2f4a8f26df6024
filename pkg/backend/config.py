import shutil
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic_settings import BaseSettings, SettingsConfigDict


class RuntimeSettings(BaseSettings):
    """Environment overrides; only the master seed may come from the environment (EBC_SEED)"""

    model_config = SettingsConfigDict(env_prefix='EBC_', extra='ignore')

    seed: Optional[int] = None


class Config:
    """Configuration manager for ebcl"""

    def __init__(self, config_path: str = "config.yaml"):
        # Resolve relative to project root (parent of backend/)
        self.project_root = Path(__file__).resolve().parent.parent
        path = Path(config_path)
        self.config_path = str(path if path.is_absolute() else self.project_root / path)
        self.data = self.load()

    def load(self) -> Dict[str, Any]:
        """Load configuration from YAML file, creating from template if missing"""
        config_file = Path(self.config_path)

        if not config_file.exists():
            example = self.project_root / "config.example.yaml"
            if example.exists():
                shutil.copy(str(example), str(config_file))
                print("✓ Created config.yaml from template (first run)")
            else:
                return {}

        with open(self.config_path, 'r', encoding='utf-8') as f:
            return yaml.safe_load(f) or {}

    def save(self):
        with open(self.config_path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(self.data, f, default_flow_style=False, sort_keys=False)

    def get(self, path: str, default=None):
        """
        Get config value using dot notation
        Example: config.get('experiment.alpha')
        """
        value = self.data
        for key in path.split('.'):
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default
        return value

    def set(self, path: str, value: Any):
        """
        Set config value using dot notation
        Example: config.set('limits.eps', 0.005)
        """
        keys = path.split('.')
        data = self.data
        for key in keys[:-1]:
            if not isinstance(data.get(key), dict):
                data[key] = {}
            data = data[key]
        data[keys[-1]] = value

    def section(self, name: str) -> Dict[str, Any]:
        return dict(self.get(name, {}) or {})

    @property
    def master_seed(self) -> int:
        env_seed = RuntimeSettings().seed
        if env_seed is not None:
            return env_seed
        return int(self.get('experiment.seed', 20240601))

    @property
    def workers(self) -> int:
        return int(self.get('runtime.workers', 1))

    @property
    def chunk_size(self) -> int:
        return int(self.get('runtime.chunk_size', 250))

    @property
    def significance(self) -> float:
        return float(self.get('verify.significance', 1e-3))

    @property
    def trend_slack(self) -> float:
        return float(self.get('verify.trend_slack', 1.2))

    @property
    def reference_size(self) -> int:
        return int(self.get('verify.reference_size', 100_000))

    @property
    def theta_grid(self) -> List[float]:
        return [float(v) for v in self.get('verify.theta_grid', [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])]

    @property
    def i_max(self) -> int:
        return int(self.get('runtime.i_max', 10_000))

    @property
    def depth_cap_factor(self) -> float:
        return float(self.get('evolving.depth_cap_factor', 1e4))

    @property
    def block_length(self) -> Optional[float]:
        value = self.get('evolving.block_length')
        return None if value is None else float(value)

    @property
    def out_dir(self) -> str:
        return self.get('output.dir', 'data/runs')

    @property
    def output_format(self) -> str:
        return self.get('output.format', 'csv')

    @property
    def plots_enabled(self) -> bool:
        return bool(self.get('output.plots', True))

    @property
    def db_path(self) -> str:
        return self.get('database.path', 'data/ebcl.db')

    @property
    def log_level(self) -> str:
        return self.get('logging.level', 'INFO')

    @property
    def log_file(self) -> Optional[str]:
        return self.get('logging.file')


# Global config instance
config = Config()
