"""
kworst/main/storage.py

Persistence of command outputs: CSV tables and a JSON manifest per output
directory.

Tables are written with every float in its shortest round-trip form and
every undefined value as the literal `undefined`, so identical runs produce
byte-identical files and reloading reproduces the numbers exactly.

Models:
* ArtifactRepository: The tables of one output directory.
* OutputUOW: Stages tables and a manifest, and writes them on commit.

Functions:
* format_cell, parse_cell: The cell conventions.
"""

import json
import logging
import math
import os
from typing import Any, Iterator, Optional

import numpy as np
import pandas as pd

from . import __version__
from .model.errors import ParseError

logger = logging.getLogger(__name__)

UNDEFINED = 'undefined'
MANIFEST = 'manifest.json'


def format_cell(value: Any) -> str:
    """
    Formats one table cell: `None` and `nan` become `undefined`, floats their
    shortest round-trip representation, everything else `str()`.
    """

    if value is None:
        return UNDEFINED
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return UNDEFINED
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def parse_cell(cell: str) -> Optional[float]:
    """Parses a numeric cell written by `format_cell`."""

    if cell == UNDEFINED:
        return None
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f'Malformed number {cell!r}') from None


class ArtifactRepository:
    """
    Stores the tables of an output directory.

    Arguments:
    * directory (keyword-only `str`): The output directory.

    Attributes:
    * directory (`str`): The output directory.
    * _tables (`dict[str, pd.DataFrame]`): Tables staged for writing, by name.

    Methods:
    * add_table (method): Stages a table as `<name>.csv`.
    * get_table (optional `pd.DataFrame` method): A staged table, or the
        stored one read back as strings, or `None`.
    * list (`list[str]` method): The staged table names.
    * discard (method): Drops every staged table.
    """

    __slots__ = ('directory', '_tables')

    def __init__(self, *, directory: str):
        self.directory = directory
        self._tables: dict[str, pd.DataFrame] = {}

    def __iter__(self) -> Iterator[tuple[str, pd.DataFrame]]:
        return iter(self._tables.items())

    def path(self, name: str) -> str:
        return os.path.join(self.directory, f'{name}.csv')

    def add_table(self, name: str, frame: pd.DataFrame) -> None:
        """Stages `frame` to be written as `<name>.csv`."""
        self._tables[name] = frame

    def get_table(self, name: str) -> Optional[pd.DataFrame]:
        """
        Returns the staged table `name`, or the stored `<name>.csv` with every
        cell as a string, or `None` if neither exists.
        """

        if name in self._tables:
            return self._tables[name]
        try:
            return pd.read_csv(self.path(name), dtype=str, keep_default_na=False)
        except FileNotFoundError:
            return None

    def list(self) -> list[str]:
        """Returns the names of the staged tables."""
        return list(self._tables.keys())

    def discard(self) -> None:
        """Drops every staged table."""
        self._tables.clear()


class OutputUOW:
    """
    A unit of work over one output directory.

    Arguments:
    * directory (keyword-only `str`): The output directory, created on commit.
    * command (keyword-only optional `str`): The command producing it.
    * config_hash (keyword-only optional `str`): The run configuration hash.

    Attributes:
    * artifacts (`ArtifactRepository`): The staged tables.
    * manifest (`dict`): The manifest, written as `manifest.json`.

    Methods:
    * commit (method): Writes every staged table and the manifest.
    * read_manifest (`dict` method): Reads a stored manifest back.
    """

    __slots__ = ('artifacts', 'manifest')

    def __init__(
        self,
        *,
        directory: str,
        command: Optional[str] = None,
        config_hash: Optional[str] = None,
    ):
        self.artifacts = ArtifactRepository(directory=directory)
        self.manifest: dict[str, Any] = {'version': __version__}
        if command is not None:
            self.manifest['command'] = command
        if config_hash is not None:
            self.manifest['config_hash'] = config_hash

    def __enter__(self) -> 'OutputUOW':
        return self

    def __exit__(self, exc_type, *args) -> None:
        # uncommitted work is dropped on errors
        if exc_type is not None:
            self.artifacts.discard()

    def commit(self) -> None:
        """Writes every staged table and the manifest."""

        directory = self.artifacts.directory
        os.makedirs(directory, exist_ok=True)

        for name, frame in self.artifacts:
            formatted = frame.map(format_cell) if len(frame) else frame.astype(str)
            formatted.to_csv(
                self.artifacts.path(name),
                index=False,
                encoding='UTF-8',
                lineterminator='\n',
            )

        self.manifest['files'] = sorted(
            f'{name}.csv' for name in self.artifacts.list()
        )
        with open(os.path.join(directory, MANIFEST), 'w', encoding='UTF-8') as f:
            json.dump(self.manifest, f, indent=4, sort_keys=True)
            f.write('\n')
        logger.info(
            'Wrote %d table(s) to %s.', len(self.artifacts.list()), directory
        )

    def read_manifest(self) -> dict:
        """Reads the stored manifest of the directory."""

        path = os.path.join(self.artifacts.directory, MANIFEST)
        with open(path, 'r', encoding='UTF-8') as f:
            return json.load(f)
