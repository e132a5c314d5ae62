import pandas as pd
import streamlit as st
from streamlit import session_state as ss

from components.Heatmap import Heatmap
from components.utils import list_slabs, load_field, load_points


def slab_heatmaps():
    if 'run_dir' not in ss:
        st.switch_page("pages/1_Home.py")
    run = ss['run_dir']
    st.title("Slab Heatmaps")
    slabs = list_slabs(run)
    if not slabs:
        st.error("This run has no slabs.")
        return
    slab_id = st.selectbox("Slab", slabs)
    shared = st.checkbox("Shared colour scale across slabs", value=True)
    show_cluster = st.checkbox("Show Cluster 0 points")
    show_valid = st.checkbox("Show validated points")

    df = load_field(run, slab_id)
    domain = None
    if shared:
        fields = [load_field(run, s)["f_peak_khz"] for s in slabs]
        domain = (min(f.min() for f in fields), max(f.max() for f in fields))
    markers = []
    if show_cluster:
        markers.append(load_points(run, slab_id, "detections.csv").assign(label="Cluster 0"))
    if show_valid:
        markers.append(load_points(run, slab_id, "valid.csv").assign(label="Validated"))
    markers = pd.concat(markers, ignore_index=True) if markers else None
    resolution = float(df["x_in"].sort_values().diff().replace(0, float("nan")).min())
    Heatmap(df, f"Slab {slab_id}", resolution, markers, domain).display()


if __name__ == '__main__':
    slab_heatmaps()
