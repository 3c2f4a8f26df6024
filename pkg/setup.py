#!/usr/bin/env python3
"""
ebcl - one-time setup: dependencies, config.yaml, run directories and the run ledger
"""

import importlib
import shutil
import subprocess
import sys
from pathlib import Path

import_names = {
    "numpy": "numpy",
    "scipy": "scipy",
    "pandas": "pandas",
    "matplotlib": "matplotlib",
    "aiosqlite": "aiosqlite",
    "pydantic": "pydantic",
    "pydantic-settings": "pydantic_settings",
    "PyYAML": "yaml",
}


def banner(text):
    rule = '=' * 60
    print(f"\n{rule}\n  {text}\n{rule}\n")


def require_python(minimum=(3, 9)):
    if sys.version_info < minimum:
        print(f"❌ ebcl needs Python {minimum[0]}.{minimum[1]}+, found {sys.version.split()[0]}")
        sys.exit(1)
    print(f"✓ Python {sys.version_info.major}.{sys.version_info.minor}")


def install_requirements(requirements="backend/requirements.txt"):
    print(f"Installing {requirements} ...")
    code = subprocess.call([sys.executable, "-m", "pip", "install", "-r", requirements])
    if code != 0:
        print(f"❌ pip exited with status {code}")
        sys.exit(1)
    print("✓ Requirements installed")


def report_stack():
    """Print the version of every numerical and storage package ebcl imports"""
    missing = []
    for dist, module in import_names.items():
        try:
            version = getattr(importlib.import_module(module), "__version__", "?")
            print(f"  {dist:<18} {version}")
        except ImportError:
            missing.append(dist)
    if missing:
        print(f"❌ Not importable after install: {', '.join(missing)}")
        sys.exit(1)


def ensure_config():
    target = Path("config.yaml")
    if target.exists():
        print("⚠ Keeping existing config.yaml")
        return
    shutil.copy("config.example.yaml", target)
    print("✓ config.yaml written from config.example.yaml")


def ensure_run_directories():
    for sub in ("data/runs", "data/logs"):
        Path(sub).mkdir(parents=True, exist_ok=True)
    print("✓ data/runs and data/logs ready")


def create_ledger(db_path="data/ebcl.db"):
    sys.path.insert(0, str(Path("backend").resolve()))
    from init_db import init_database

    try:
        init_database(db_path)
    except Exception as exc:
        print(f"❌ Could not create the run ledger at {db_path}: {exc}")
        sys.exit(1)


def main():
    banner("ebcl setup")
    require_python()
    install_requirements()
    report_stack()
    ensure_run_directories()
    ensure_config()
    create_ledger()
    banner("Ready")
    print("Smoke test:\n  python3 backend/main.py suite --suite smoke\n")


if __name__ == "__main__":
    main()
