import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Union

PathLike = Union[str, Path]


class FileOperations:
    """Atomic writes and hashing for run artifacts"""

    @staticmethod
    def atomic_write_bytes(file_path: PathLike, data: bytes) -> bool:
        """
        Write bytes through a temporary sibling and rename it into place

        Args:
            file_path: destination
            data: payload

        Returns:
            Success boolean
        """
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        temp_path = path.with_name(path.name + '.tmp')

        try:
            with open(temp_path, 'wb') as f:
                f.write(data)
                f.flush()
                os.fsync(f.fileno())
            os.replace(temp_path, path)
            return True
        except Exception:
            if temp_path.exists():
                temp_path.unlink()
            raise

    @staticmethod
    def atomic_write_text(file_path: PathLike, text: str) -> bool:
        return FileOperations.atomic_write_bytes(file_path, text.encode('utf-8'))

    @staticmethod
    def write_json(file_path: PathLike, data: Dict[str, Any]) -> bool:
        # sorted keys keep the bytes stable for a given payload
        text = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=True)
        return FileOperations.atomic_write_text(file_path, text + "\n")

    @staticmethod
    def get_file_hash(file_path: PathLike) -> str:
        """SHA256 of a file's bytes"""
        sha256 = hashlib.sha256()
        with open(file_path, 'rb') as f:
            for chunk in iter(lambda: f.read(65536), b''):
                sha256.update(chunk)
        return sha256.hexdigest()

    @staticmethod
    def hash_payload(data: Dict[str, Any]) -> str:
        """SHA256 of the canonical JSON form of a mapping"""
        canonical = json.dumps(data, sort_keys=True, separators=(',', ':'), default=str)
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


file_ops = FileOperations()
