"""From JHU-format CSVs to scaled training windows.

A synthetic archive stands in for the real one here; point
ATTNFC_DATA_DIR at the downloaded JHU CSVs to use real counts.

Run: python3 demos/data_pipeline.py
"""
import os
import tempfile
from datetime import date

from attnfc import data
from attnfc.synthetic import write_jhu_fixture

source = os.environ.get("ATTNFC_DATA_DIR")
if source is None:
    source = write_jhu_fixture(tempfile.mkdtemp())
    print("using a synthetic archive in", source)

tables = data.load_jhu_tables(source)
print("countries:", ", ".join(tables["confirmed"].countries[:8]), "...")

raw = data.build_raw_series(tables, "Canada", date(2020, 2, 21), date(2020, 9, 12))
print(raw.matrix.shape[0], "days, last row", raw.matrix[-1])
print(data.descriptive_stats(raw.matrix[:, 0]))

prepared = data.prepare_series(raw, lookback=7, country="Canada")
for name in ("train", "validation", "test"):
    ds = getattr(prepared, name)
    print(f"{name:>10}: {len(ds)} windows, first target row {ds.target_rows[0]}")

# Scaled values of the training rows span [-1, 1]; later rows may leave it.
print("scaled range of the test targets:", prepared.test.targets.min(), prepared.test.targets.max())
