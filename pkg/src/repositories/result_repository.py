"""
JSON documents and run bookkeeping on disk
"""
import hashlib
import logging
from pathlib import Path
from typing import Union

from pydantic import BaseModel

from src.exceptions import InputError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

def ensure_dir(path: PathLike) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path

def write_json(path: PathLike, document: BaseModel) -> None:
    """Key order follows the model's field declaration order"""
    Path(path).write_text(
        document.model_dump_json(by_alias=True, indent=2) + "\n",
        encoding="utf-8",
        newline="\n",
    )
    logger.info(f"Wrote {path}")

def write_text(path: PathLike, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")
    logger.info(f"Wrote {path}")

def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b""):
                digest.update(chunk)
    except FileNotFoundError:
        raise InputError(f"{path}: file not found")
    return digest.hexdigest()
