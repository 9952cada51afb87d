import numpy as np


def column(rows, key):
    """One training-log column as floats, blanks as NaN."""
    return np.array([np.nan if r[key] in ("", None) else float(r[key]) for r in rows])
