import altair as alt
import streamlit as st
from streamlit import session_state as ss

from components.utils import COLOR_SCHEME, METRICS, load_overlays, load_table


def overlay_metrics():
    if 'run_dir' not in ss:
        st.switch_page("pages/1_Home.py")
    run = ss['run_dir']
    st.title("Overlay Metrics")
    df = load_overlays(run)
    if df.empty:
        st.warning("This run has no overlay metrics.")
        return
    metric = st.radio("Metric", list(METRICS.values()), horizontal=True)
    chart = alt.Chart(df).mark_bar().encode(
        x=alt.X("Zone:N", title=None), xOffset="Slab:N", y=alt.Y(f"{metric}:Q", scale=alt.Scale(domain=[0, 1])),
        color=alt.Color("Zone:N", scale=alt.Scale(scheme=COLOR_SCHEME)), tooltip=["Slab", "Zone", metric])
    st.altair_chart(chart.properties(height=400), use_container_width=True)

    for name, title in (("iou", "IoU"), ("precision", "Precision"), ("recall", "Recall"), ("f1", "F1"),
                        ("overlap", "Validated points and overlap"), ("centroids", "Zone centroids (kHz)"),
                        ("dense_validated", "Validated field cells")):
        table = load_table(run, name)
        if table is not None:
            st.subheader(title)
            st.dataframe(table, hide_index=True)


if __name__ == '__main__':
    overlay_metrics()
