import sys
from pathlib import Path

HERE = Path(__file__).resolve()
ADAPTER_SRC = HERE.parents[1] / "src"
PRIMARY_SRC = HERE.parents[2] / "src"
for path in (str(ADAPTER_SRC), str(PRIMARY_SRC)):
    if path not in sys.path:
        sys.path.insert(0, path)
