# fivestar/utils/file_io.py
"""
File input/output utilities for the fivestar package.

Keeps storage details (directories, JSON text, CSV and Parquet encodings) out
of the analysis modules.

Design philosophy:
- load() returns None on errors (a missing replicate log is recoverable)
- write/save methods raise on errors (a report that silently fails to land is
  worse than a crash)
- Paths and compression are injected at initialization
"""

import logging
from pathlib import Path
from typing import Any

import pandas as pd
from pyarrow.lib import (
    ArrowInvalid,  # pyright: ignore[reportUnknownVariableType]
    ArrowIOError,  # pyright: ignore[reportUnknownVariableType]
)
from pydantic import BaseModel

from .config_loader import CompressionType

logger: logging.Logger = logging.getLogger(__name__)


class ReportFileHandler:
    """
    Writes report artifacts (one JSON document plus CSV tables) into a directory.

    Attributes:
        output_dir: Directory receiving every file. Created at construction.
        float_format: Optional printf-style format applied to CSV floats.
    """

    def __init__(self, output_dir: Path, float_format: str | None = None) -> None:
        """
        Initialize the handler and create the output directory.

        Raises:
            OSError: If the directory cannot be created.
        """
        self.output_dir: Path = Path(output_dir)
        self.float_format: str | None = float_format
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.debug('Initialized ReportFileHandler for %r', self.output_dir)

    def write_json(
        self, name: str, model: BaseModel, exclude: set[str] | dict[str, Any] | None = None
    ) -> Path:
        """
        Serialize a pydantic model to <output_dir>/<name> as indented JSON.

        Args:
            name: File name inside the output directory.
            model: Model to serialize.
            exclude: Optional pydantic exclude spec (fields left out of the file).

        Returns:
            The path written.
        """
        path: Path = self.output_dir / name
        try:
            text: str = model.model_dump_json(indent=2, exclude=exclude)
            path.write_text(text + '\n', encoding='utf-8')
        except OSError as exception:
            logger.exception('Failed to write %r: %r', path, exception)
            raise
        logger.info('Wrote %s', path)
        return path

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        """
        Write a DataFrame to <output_dir>/<name> without the index.

        An empty frame still produces a file with its header row.

        Returns:
            The path written.
        """
        path: Path = self.output_dir / name
        try:
            frame.to_csv(path, index=False, float_format=self.float_format)
        except OSError as exception:
            logger.exception('Failed to write %r: %r', path, exception)
            raise
        logger.info('Wrote %s (%d rows)', path, len(frame))
        return path


class ReplicateLogHandler:
    """
    Reads and writes the per-replicate simulation log as a Parquet file.

    One row per (replicate, method) with the raw outcome of that analysis.
    """

    def __init__(self, parquet_file: Path, compression: CompressionType = 'snappy') -> None:
        """
        Initialize the handler.

        Raises:
            OSError: If the parent directory cannot be created.
        """
        self.parquet_file: Path = Path(parquet_file)
        self.compression: CompressionType = compression
        self.parquet_file.parent.mkdir(parents=True, exist_ok=True)
        logger.debug(
            'Initialized ReplicateLogHandler for %r (compression=%s)',
            self.parquet_file,
            self.compression,
        )

    def load(self) -> pd.DataFrame | None:
        """
        Load the replicate log.

        Returns:
            The DataFrame, or None when the file is missing or unreadable.
        """
        if not self.parquet_file.exists():
            return None

        try:
            dataframe: pd.DataFrame = pd.read_parquet(self.parquet_file)
        except (OSError, ArrowInvalid, ArrowIOError) as exception:  # pyright: ignore[reportUnknownVariableType]
            logger.exception(
                'Failed to read Parquet file at %r: %r', self.parquet_file, exception
            )
            return None
        logger.debug('Loaded %d replicate rows from %r', len(dataframe), self.parquet_file)
        return dataframe

    def save(self, dataframe: pd.DataFrame) -> None:
        """
        Save the replicate log, replacing any previous file.

        Raises:
            OSError: If the file cannot be written.
        """
        if dataframe.empty:
            logger.warning('Saving empty replicate log to %r', self.parquet_file)

        try:
            dataframe.to_parquet(
                self.parquet_file,
                index=False,
                compression=self.compression,
            )
        except Exception as exception:
            logger.exception(
                'Failed to save replicate log to %r: %r', self.parquet_file, exception
            )
            raise
        logger.info('Saved %d replicate rows to %r', len(dataframe), self.parquet_file)
