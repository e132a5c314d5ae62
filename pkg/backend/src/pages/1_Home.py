import streamlit as st
from streamlit import session_state as ss

from components.utils import RUNS_FOLDER, list_runs, read_report

if __name__ == '__main__':
    st.set_page_config(page_title="Home")
    st.title("Home")
    st.text("The EchoMap viewer shows the outputs of a lab run: the peak-frequency heatmaps of every "
            "slab, the ground-truth overlay metrics and the defect-type classification results.")
    st.markdown("""
    - **Peak frequency**: the dominant frequency of an impact-echo waveform. Defects shift it
    below the intact band.
    - **Zone**: one of the four 30-inch strips of a lab slab, each seeded with one defect type.
    - **Cluster 0**: the lower-frequency cluster of a zone's two-means segmentation, taken as defective.
    - **Validated point**: a Cluster 0 point that falls inside the seeded defect.
    """)
    runs = list_runs()
    if not runs:
        st.warning(f"No lab runs found under {RUNS_FOLDER}. Run `python EchoMapRunner.py run-lab` first.")
    else:
        run = st.selectbox("Run directory", runs, format_func=str)
        ss['run_dir'] = run
        st.markdown(read_report(run))
