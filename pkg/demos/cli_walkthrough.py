"""The attnfc command line, end to end on a synthetic archive.

Equivalent shell session:

    export ATTNFC_DATA_DIR=/path/to/jhu/csvs
    attnfc ingest --config run.toml --out out
    attnfc train --config run.toml --out out --seed 42 --jobs 2
    attnfc evaluate --config run.toml --out out --seed 42
    attnfc forecast --config run.toml --out out --country Italy --horizon 14

Run: python3 demos/cli_walkthrough.py
"""
import os
import tempfile
from pathlib import Path

from attnfc.cli import main
from attnfc.synthetic import write_jhu_fixture

work = Path(tempfile.mkdtemp())
os.environ["ATTNFC_DATA_DIR"] = str(write_jhu_fixture(work / "jhu"))

# A deliberately small model so this finishes in seconds.
config = work / "run.toml"
config.write_text("""
[data]
countries = ["Italy", "Canada"]

[model]
encoder_layer_sizes = [6, 4]
time2vec_l = 3

[train]
epochs = 5

[evaluate]
horizons = [2, 4, 6]
""")
common = ["--config", str(config), "--out", str(work / "out")]

for argv in (
    ["ingest", *common],
    ["stats", *common],
    ["train", *common, "--seed", "42", "--jobs", "2"],
    ["evaluate", *common, "--seed", "42"],
    ["forecast", *common, "--country", "Italy", "--horizon", "7"],
):
    code = main(argv)
    print(f"attnfc {argv[0]} -> exit {code}")

print((work / "out" / "report.md").read_text())
for path in sorted((work / "out").rglob("*")):
    if path.is_file():
        print(path.relative_to(work / "out"))
