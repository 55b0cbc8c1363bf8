"""Ingestion of third-party predictions into the UQ layer.

The file format is a headered CSV with columns model, bootstrap, sample
(1-based indices) and prediction; every (model, bootstrap, sample) combination
must be present exactly once. The resulting tensor plugs directly into the
gamma-calibration entry points, so external learners can reuse the whole
calibration/interval machinery.
"""

import csv

import numpy as np

from ..exceptions import DataError

_COLUMNS = ("model", "bootstrap", "sample", "prediction")


def load_external_predictions(path) -> np.ndarray:
    """Parse a predictions CSV into a (k, B, n) float tensor."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty predictions file") from None
        if tuple(h.strip() for h in header) != _COLUMNS:
            raise DataError(
                f"{path}: expected header {','.join(_COLUMNS)}, got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                rows.append((int(row[0]), int(row[1]), int(row[2]), float(row[3])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no prediction rows")
    arr = np.asarray(rows)
    k = int(arr[:, 0].max())
    B = int(arr[:, 1].max())
    n = int(arr[:, 2].max())
    if arr[:, :3].min() < 1:
        raise DataError(f"{path}: model/bootstrap/sample indices are 1-based")
    preds = np.full((k, B, n), np.nan)
    preds[arr[:, 0].astype(int) - 1, arr[:, 1].astype(int) - 1,
          arr[:, 2].astype(int) - 1] = arr[:, 3]
    if len(rows) != k * B * n or np.isnan(preds).any():
        raise DataError(
            f"{path}: predictions must cover the full {k}x{B}x{n} grid exactly once"
        )
    return preds
