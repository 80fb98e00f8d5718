"""Small CSV readers with line-numbered diagnostics."""
import csv

import numpy as np

from .errors import DataValidationError


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_numeric_csv(path, header="auto"):
    """Read a numeric CSV into ``(header, matrix, comments)``.

    ``header`` is ``True``, ``False`` or ``"auto"`` (a first row containing a
    non-numeric cell is taken as a header). Lines starting with ``#`` are
    returned separately as comments.
    """
    rows, comments, names = [], [], None
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataValidationError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells):
                continue
            if cells[0].startswith("#"):
                comments.append(",".join(cells).lstrip("#").strip())
                continue
            if names is None and not rows and (
                    header is True or (header == "auto" and not all(map(_is_number, cells)))):
                names = cells
                continue
            try:
                rows.append((lineno, [float(c) for c in cells]))
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise DataValidationError(f"{path}:{lineno}: not a number: {bad!r}") from None
    if not rows:
        raise DataValidationError(f"{path}: no data rows")
    width = len(rows[0][1])
    for lineno, values in rows:
        if len(values) != width:
            raise DataValidationError(
                f"{path}:{lineno}: expected {width} columns, found {len(values)}")
    if names is not None and len(names) != width:
        raise DataValidationError(
            f"{path}: header has {len(names)} columns but data rows have {width}")
    return names, np.array([v for _, v in rows]), comments


def write_rows(path_or_file, rows, columns, fmt="csv", precision=6):
    """Write dict rows as CSV or JSON; floats are printed with ``precision`` significant digits."""
    import json
    import sys

    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return "true" if v else "false"
        if isinstance(v, (float, np.floating)):
            return f"{float(v):.{precision}g}"
        return str(v)

    own = path_or_file not in (None, "-")
    fh = open(path_or_file, "w", newline="") if own else sys.stdout
    try:
        if fmt == "json":
            def jval(v):
                if isinstance(v, (bool, np.bool_)):
                    return bool(v)
                if isinstance(v, (float, np.floating)):
                    return float(f"{float(v):.{precision}g}")
                if isinstance(v, (np.integer,)):
                    return int(v)
                return v
            json.dump([{c: jval(r[c]) for c in columns} for r in rows], fh, indent=2)
            fh.write("\n")
        else:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for r in rows:
                writer.writerow([cell(r[c]) for c in columns])
    finally:
        if own:
            fh.close()
