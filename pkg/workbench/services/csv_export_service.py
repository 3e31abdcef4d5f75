"""
CSV Export Service

Writes the tabular outputs of every subcommand. Each row carries the
seed, method and version columns; headers are mandatory, files are UTF-8
with '.' decimals and no timestamps so exact-mode outputs replay
byte-identically.
"""

import csv
import hashlib
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

LEADING_COLUMNS = ('seed', 'method', 'version')


def format_value(value) -> str:
    """Shortest round-trip text for floats, blank for missing values."""
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        return repr(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (list, tuple, np.ndarray)):
        return ' '.join(format_value(v) for v in value)
    return str(value)


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with Path(path).open('rb') as fh:
        for chunk in iter(lambda: fh.read(65536), b''):
            digest.update(chunk)
    return digest.hexdigest()


class CsvExportService:
    """Service for writing run outputs to CSV"""

    @staticmethod
    def write_rows(path, rows: Iterable[Dict], version: str, fields: Optional[Sequence[str]] = None,
                   method: Optional[str] = None) -> Dict:
        """
        Write dict rows under a header.

        Args:
            path: Destination file; parent directories are created.
            rows: One mapping per row. Missing seed/method columns are filled
                from the arguments.
            version: Artifact version stamped on every row.
            fields: Data columns after the leading ones; defaults to the keys
                of the first row in insertion order.
            method: Method label for rows that do not carry one.

        Returns:
            dict with path, rows and sha256
        """
        rows = list(rows)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if fields is None:
            fields = [k for k in (rows[0] if rows else {}) if k not in LEADING_COLUMNS]
        header: List[str] = [*LEADING_COLUMNS, *fields]

        with path.open('w', newline='', encoding='utf-8') as fh:
            writer = csv.writer(fh, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                record = dict(row)
                record.setdefault('method', method)
                record['version'] = version
                writer.writerow([format_value(record.get(column)) for column in header])

        checksum = sha256_of(path)
        logger.info(f"Exported {len(rows)} rows to {path}")
        return {'path': path, 'rows': len(rows), 'sha256': checksum}

    @staticmethod
    def write_columns(path, columns: Dict[str, Sequence], version: str, method: str,
                      seed=None) -> Dict:
        """Write equal-length column arrays as rows (curves, profiles)."""
        names = list(columns)
        lengths = {len(columns[name]) for name in names}
        if len(lengths) > 1:
            raise ValueError(f"Columns have different lengths: {sorted(lengths)}")
        count = lengths.pop() if lengths else 0
        rows = ({'seed': seed, 'method': method, **{name: columns[name][i] for name in names}}
                for i in range(count))
        return CsvExportService.write_rows(path, rows, version, fields=names, method=method)


csv_export_service = CsvExportService()
