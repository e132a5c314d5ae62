import json
from pathlib import Path

import pandas as pd

from echomap.DefectClass import DefectClass
from echomap.Mapping import read_field_json

RUNS_FOLDER = Path("../runs")
COLOR_SCHEME = "category10"
METRICS = {"iou": "IoU", "precision": "Precision", "recall": "Recall", "f1": "F1"}


def list_runs(root: Path = RUNS_FOLDER) -> list[Path]:
    """
    Lab run directories under ``root``, recognised by their ``config.json``.
    """
    if not root.is_dir():
        return []
    return sorted(p.parent for p in root.glob("**/config.json"))


def list_slabs(run: Path) -> list[int]:
    return sorted(int(p.name.split("_")[1]) for p in (run / "slabs").glob("slab_*") if p.is_dir())


def load_table(run: Path, name: str) -> pd.DataFrame | None:
    path = run / "tables" / f"{name}.csv"
    return pd.read_csv(path) if path.is_file() else None


def load_field(run: Path, slab_id: int) -> pd.DataFrame:
    """
    The slab's interpolated field in long form, one row per finite cell.
    """
    f = read_field_json(str(run / "slabs" / f"slab_{slab_id:02d}" / "field.json"))
    xs, ys = f.cell_centers()
    df = pd.DataFrame(f.values, index=ys, columns=xs).stack().reset_index()
    df.columns = ["y_in", "x_in", "f_peak_khz"]
    return df


def load_points(run: Path, slab_id: int, name: str) -> pd.DataFrame:
    path = run / "slabs" / f"slab_{slab_id:02d}" / name
    if not path.is_file():
        return pd.DataFrame(columns=["zone", "x_in", "y_in", "f_peak_khz"])
    return pd.read_csv(path)


def load_overlays(run: Path) -> pd.DataFrame:
    """
    Every zone's overlay metrics across slabs, in long form.
    """
    rows = []
    for slab_id in list_slabs(run):
        path = run / "slabs" / f"slab_{slab_id:02d}" / "overlay.json"
        if path.is_file():
            with open(path) as f:
                for zone, metrics in json.load(f).items():
                    rows.append({"Slab": slab_id, "Zone": DefectClass.parse(zone).display_name,
                                 **{title: metrics[key] for key, title in METRICS.items()}})
    return pd.DataFrame(rows, columns=["Slab", "Zone", *METRICS.values()])


def read_report(run: Path) -> str:
    path = run / "report.md"
    return path.read_text() if path.is_file() else "No report has been written for this run yet."
