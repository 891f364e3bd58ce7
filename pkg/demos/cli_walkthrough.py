"""Drive the command line end to end in a temporary directory.

Equivalent shell session::

    polarlens synth --out data
    polarlens report --config data/pipeline.json --out report
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path


def polarlens(*args):
    cmd = [sys.executable, "-m", "polarlens.cli", *args]
    print("$ polarlens", " ".join(args), flush=True)
    subprocess.run(cmd, check=True)


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    polarlens("synth", "--out", str(tmp / "data"))
    print(sorted(p.name for p in (tmp / "data").iterdir()))
    polarlens("report", "--config", str(tmp / "data" / "pipeline.json"), "--out", str(tmp / "report"))
    report = json.loads((tmp / "report" / "report.json").read_text())
    for deb, body in report["debates"].items():
        dip = body["ideology"]["dip"]
        print(f"{deb}: dip D={dip['D']:.4f} p={dip['p_value']:.4f}, "
              f"median user Gini {body['stats']['gini']['median']:.3f}")
    for row in report["cross"]["conditional"]["Majority"]:
        print(f"Majority {row['from']} -> {row['to']}: {row['fraction']:.3f} (n={row['support']})")
