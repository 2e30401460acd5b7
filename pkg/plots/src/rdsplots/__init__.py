"""Figure renderer for the rdslab experiment CSVs.

Reads only the CSV artifacts written by the rdslab CLI and turns them
into the repository's standard figures; it never recomputes anything.
"""

import matplotlib

matplotlib.use("Agg")

from .figures import FigureSpec, InputError, render  # noqa: E402

__version__ = "0.1.0"

__all__ = ["FigureSpec", "InputError", "render", "__version__"]
