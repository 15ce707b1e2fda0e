import csv
import json
import os
import re
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from src.data_utils.container import ContainerKind, read_container, write_container
from src.errors import ValidationFailure

RUN_INDEX = "index.json"
RUN_KINDS = ("synth2d", "synth3d")

# every file name a synth or align run writes into its directory
_RUN_FILE = re.compile(
    r"^(image|target|volume)_\d+\.rra$"
    r"|^(landscapes|kernel|basis|report)_\w+\.(rra|csv|json)$"
    r"|^(index|bench)\.json$"
    r"|^(spectrum|curve)\.csv$"
)


def is_run_file(name: str) -> bool:
    return _RUN_FILE.match(name) is not None


def clear_run_directory(directory_path: Path) -> List[Path]:
    """
    Prepares a directory for a new synthetic set.

    A missing or empty directory is used as is. A directory holding the index of an
    earlier run loses only the files a run writes; anything else in it is kept. Any
    other non-empty directory is refused.

    Args:
        directory_path (Path): The run directory.

    Returns:
        List[Path]: The files removed.

    Raises:
        ValidationFailure: If the path is a file, a foreign non-empty directory, or
            cannot be created.
    """
    path = Path(directory_path)
    if path.exists() and not path.is_dir():
        raise ValidationFailure(f"Output path {path} exists and is not a directory")
    removed = []
    if path.is_dir() and any(path.iterdir()):
        if not _holds_run_index(path):
            raise ValidationFailure(
                f"Refusing to write into {path}: it is not empty and holds no {RUN_INDEX} from an earlier run"
            )
        removed = [p for p in sorted(path.iterdir()) if p.is_file() and is_run_file(p.name)]
        try:
            for p in removed:
                os.remove(p)
        except OSError as exc:
            raise ValidationFailure(f"Cannot clear run directory {path}: {exc}") from exc
    ensure_directory(path)
    return removed


def _holds_run_index(path: Path) -> bool:
    index = path / RUN_INDEX
    if not index.is_file():
        return False
    try:
        with open(index, "r") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError):
        return False
    return isinstance(payload, dict) and payload.get("kind") in RUN_KINDS


def ensure_directory(directory_path: Path) -> Path:
    try:
        os.makedirs(directory_path, exist_ok=True)
    except OSError as exc:
        raise ValidationFailure(f"Cannot create output directory {directory_path}: {exc}") from exc
    return Path(directory_path)


def list_containers(folder_path: Path, prefix: str) -> List[Path]:
    """
    Container files in a folder whose names start with prefix, in index order
    (shorter names first, so image_10000 follows image_9999).

    Raises:
        ValidationFailure: If the folder does not exist.
    """
    if not os.path.isdir(folder_path):
        raise ValidationFailure(f"Invalid folder path: {folder_path}")
    return sorted(Path(folder_path).glob(f"{prefix}*.rra"), key=lambda p: (len(p.name), p.name))


def write_landscape_csv_2d(path: Path, landscapes: np.ndarray) -> None:
    """Rows (image, target, gamma, value) for an (N_A, N_B, Q_out) array."""
    n_a, n_b, q_out = landscapes.shape
    gammas = 2.0 * np.pi * np.arange(q_out) / q_out
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image", "target", "gamma", "value"])
        for i in range(n_a):
            for j in range(n_b):
                for gamma, value in zip(gammas, landscapes[i, j]):
                    writer.writerow([i, j, repr(float(gamma)), repr(float(value))])


def write_landscape_csv_3d(path: Path, landscapes: np.ndarray, betas: Sequence[float]) -> None:
    """Rows (volume, gamma, beta, alpha, value) for an (N_A, n_beta, M, M) array."""
    n_a, n_beta, M, _ = landscapes.shape
    angles = 2.0 * np.pi * np.arange(M) / M
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["volume", "gamma", "beta", "alpha", "value"])
        for i in range(n_a):
            for j in range(n_beta):
                for a in range(M):
                    for g in range(M):
                        writer.writerow([
                            i, repr(float(angles[g])), repr(float(betas[j])),
                            repr(float(angles[a])), repr(float(landscapes[i, j, a, g])),
                        ])


def write_spectrum_csv(path: Path, eigenvalues: np.ndarray, label: str = "") -> None:
    """Rows (label, index, eigenvalue, captured_fraction) for a descending spectrum."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    total = float(np.sum(eigenvalues))
    captured = np.cumsum(eigenvalues) / total if total > 0 else np.ones_like(eigenvalues)
    new_file = not os.path.exists(path)
    with open(path, "a", newline="") as f:
        writer = csv.writer(f)
        if new_file:
            writer.writerow(["label", "index", "eigenvalue", "captured_fraction"])
        for h, (value, frac) in enumerate(zip(eigenvalues, captured)):
            writer.writerow([label, h + 1, repr(float(value)), repr(float(frac))])


class RunStore:
    """
    Files of one run directory: array containers, JSON documents and CSV tables.

    Attributes:
        directory (Path): Run directory.
        logger: Logger instance passed during initialization.
    """

    def __init__(self, directory: Path, logger, reset: bool = False) -> None:
        """
        Args:
            directory (Path): Run directory, created if missing.
            logger: A logger object to record file events.
            reset (bool): Remove the files of an earlier run first; a foreign non-empty
                directory is refused.

        Raises:
            ValueError: If logger is not provided.
            ValidationFailure: If the directory cannot be created, or reset is asked
                for on a foreign non-empty directory.
        """
        if logger is None:
            raise ValueError("A logger instance must be provided.")
        self.logger = logger
        self.directory = Path(directory)
        if reset:
            removed = clear_run_directory(self.directory)
            if removed:
                self.logger.info(f"Removed {len(removed)} files of an earlier run from {self.directory}")
        else:
            ensure_directory(self.directory)
        self.logger.debug(f"Using run directory {self.directory}")

    def path(self, name: str) -> Path:
        return self.directory / name

    def has(self, name: str) -> bool:
        return self.path(name).is_file()

    def write_array(self, name: str, kind: ContainerKind, array: np.ndarray) -> Path:
        path = write_container(self.path(name), kind, array)
        self.logger.debug(f"Wrote {kind.name} container {path.name} with shape {np.shape(array)}")
        return path

    def read_array(self, name: str, kind: ContainerKind) -> np.ndarray:
        return read_container(self.path(name), kind)

    def write_json(self, name: str, payload: Dict) -> Path:
        path = self.path(name)
        try:
            with open(path, "w") as f:
                json.dump(payload, f, indent=4)
        except OSError as exc:
            raise ValidationFailure(f"Cannot write {path}: {exc}") from exc
        return path

    def read_json(self, name: str) -> Dict:
        """
        Raises:
            ValidationFailure: If the file is missing or not valid JSON.
        """
        path = self.path(name)
        if not path.is_file():
            raise ValidationFailure(f"Missing {name} in {self.directory}")
        try:
            with open(path, "r") as f:
                return json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationFailure(f"Malformed JSON in {path}: {exc}") from exc

    def remove(self, name: str) -> None:
        if self.has(name):
            os.remove(self.path(name))
