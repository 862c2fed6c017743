import textwrap
from collections.abc import Callable
from pathlib import Path

import pytest


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[str], str]:
    """
    Writes a configuration document into ``tmp_path`` and returns its path, ready to
    be passed to ``--config``.
    """

    def write(contents: str) -> str:
        filename = tmp_path / "experiment.yml"
        filename.write_text(textwrap.dedent(contents))
        return str(filename)

    return write
