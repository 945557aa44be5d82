"""Bundled example data."""

from importlib import resources

from ..core import PointPattern, Rect


def load_whiteoak() -> PointPattern:
    """The bundled 448-point clustering benchmark pattern (unit square).

    A synthetic surrogate for the Lansing Woods white-oak data; the JSON
    file beside the CSV records exactly how it was generated.
    """
    src = resources.files(__package__) / "whiteoak.csv"
    with resources.as_file(src) as path:
        return PointPattern.from_csv(path, Rect(0.0, 1.0, 0.0, 1.0))
