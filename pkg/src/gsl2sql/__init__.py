"""Compile object models with guarded-command operations to SQL, and check the result."""

from importlib import resources


def fixture_text(name: str = "hrs.boo") -> str:
    """Source text of a bundled fixture model."""
    return resources.files(__package__).joinpath("fixtures", name).read_text(encoding="utf-8")
