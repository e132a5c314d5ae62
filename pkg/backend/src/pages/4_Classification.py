import altair as alt
import streamlit as st
from streamlit import session_state as ss

from components.utils import load_table


def confusion_chart(cm):
    df = cm.rename(columns={cm.columns[0]: "True"}).melt(id_vars="True", var_name="Predicted", value_name="Count")
    base = alt.Chart(df).encode(x=alt.X("Predicted:N", sort=None), y=alt.Y("True:N", sort=None))
    chart = base.mark_rect().encode(color=alt.Color("Count:Q", scale=alt.Scale(scheme="blues"))) + \
        base.mark_text(fontSize=16).encode(text="Count:Q")
    return chart.properties(width=420, height=320)


def classification():
    if 'run_dir' not in ss:
        st.switch_page("pages/1_Home.py")
    run = ss['run_dir']
    st.title("Classification")
    dataset = load_table(run, "dataset")
    if dataset is not None:
        st.subheader("Sequence dataset")
        st.dataframe(dataset, hide_index=True)
    metrics = load_table(run, "classification")
    if metrics is None:
        st.warning("The classifier did not run for this run.")
        return
    for name, title in (("classification", "Test split"), ("full_gtm_classification", "All ground-truth cells")):
        table = load_table(run, name)
        cm = load_table(run, f"{name}_confusion")
        if table is None:
            continue
        st.header(title)
        st.dataframe(table, hide_index=True)
        if cm is not None:
            st.altair_chart(confusion_chart(cm), use_container_width=False)

    history = load_table(run, "history")
    if history is not None:
        st.header("Training history")
        long = history.melt(id_vars="epoch", var_name="Series", value_name="Value")
        st.altair_chart(alt.Chart(long).mark_line().encode(x="epoch:Q", y="Value:Q", color="Series:N")
                        .properties(height=320), use_container_width=True)


if __name__ == '__main__':
    classification()
