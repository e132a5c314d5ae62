import altair as alt
import pandas as pd
import streamlit as st


class Heatmap:
    """
    An interpolated peak-frequency field drawn as one rect per cell, optionally with
    point markers layered on top.
    """

    def __init__(self, df: pd.DataFrame, title: str, resolution_in: float = 1.0,
                 markers: pd.DataFrame | None = None, domain: tuple[float, float] | None = None):
        self.df = df
        self.title = title
        self.resolution_in = resolution_in
        self.markers = markers
        self.domain = domain

    def display(self):
        df = self.df.assign(x_hi=self.df["x_in"] + self.resolution_in / 2,
                            x_lo=self.df["x_in"] - self.resolution_in / 2,
                            y_hi=self.df["y_in"] + self.resolution_in / 2,
                            y_lo=self.df["y_in"] - self.resolution_in / 2)
        scale = alt.Scale(scheme="viridis", domain=list(self.domain)) if self.domain else alt.Scale(scheme="viridis")
        title = alt.TitleParams(self.title, align='center', anchor="middle", fontSize=18)
        chart = alt.Chart(df, title=title).mark_rect().encode(
            x=alt.X("x_lo:Q", title="X (in)"), x2="x_hi:Q",
            y=alt.Y("y_lo:Q", title="Y (in)"), y2="y_hi:Q",
            color=alt.Color("f_peak_khz:Q", scale=scale, title="Peak frequency (kHz)"),
            tooltip=["x_in", "y_in", alt.Tooltip("f_peak_khz:Q", format=".3f")],
        )
        if self.markers is not None and len(self.markers):
            chart = chart + alt.Chart(self.markers).mark_point(filled=True, size=30, stroke="black").encode(
                x="x_in:Q", y="y_in:Q",
                color=alt.Color("label:N", scale=alt.Scale(scheme="category10"), title="Points"),
            )
        width_in = float(df["x_hi"].max() - df["x_lo"].min())
        height_in = float(df["y_hi"].max() - df["y_lo"].min())
        chart = (chart.resolve_scale(color="independent")
                 .properties(width=900, height=max(150, int(900 * height_in / width_in)))
                 .configure_axis(labelFontSize=14, titleFontSize=14))
        st.altair_chart(chart, use_container_width=False)
