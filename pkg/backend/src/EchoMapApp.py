import streamlit as st


if __name__ == '__main__':
    HOME = st.Page("pages/1_Home.py", icon=":material/home:")
    SLAB_HEATMAPS = st.Page("pages/2_Slab_Heatmaps.py", icon=":material/grid_on:")
    OVERLAY_METRICS = st.Page("pages/3_Overlay_Metrics.py", icon=":material/analytics:")
    CLASSIFICATION = st.Page("pages/4_Classification.py", icon=":material/category:")
    pg = st.navigation({"Home": [HOME],
                        "Reports": [SLAB_HEATMAPS, OVERLAY_METRICS, CLASSIFICATION]}, expanded=True)
    pg.run()
