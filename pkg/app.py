import streamlit as st
import pandas as pd
import logging
from pathlib import Path
from typing import Dict, Optional

# Import our custom modules
from config import Config
from chart_utils import ChartCreator
from utils import create_gain_summary, format_db, format_duration, list_runs, load_manifest, load_run, setup_logging

setup_logging()
logger = logging.getLogger(__name__)

# Page configuration
st.set_page_config(
    page_title="Rollable Surface Explorer",
    page_icon="📡",
    layout="wide",
    initial_sidebar_state="expanded"
)

st.markdown("""
<style>
    .main-header {
        font-size: 2.2rem;
        font-weight: bold;
        color: #26A69A;
        text-align: center;
        margin-bottom: 1.5rem;
    }
</style>
""", unsafe_allow_html=True)

CHART_TITLES = {
    'power': '📶 Delivered power',
    'utilization': '🔢 Element utilization',
    'elements_needed': '📐 Elements needed',
    'gains': '📈 RSSI gain',
    'roll_lengths': '📏 Roll lengths',
    'panel_dynamics': '🧱 Panel dynamics',
    'timing': '⏱️ Convergence time',
    'speedup': '⚡ Group sweeping speedup',
    'resonance': '〰️ Resonance',
    'oracle_gap': '🎯 Oracle gap',
    'perturbation': '🚶 Endpoint movement',
}


class ResultsExplorerApp:
    """Browses finished experiment runs; it never starts one."""

    def __init__(self, output_dir: str = Config.OUTPUT_DIR):
        self.output_dir = output_dir
        self.run_dir: Optional[Path] = None
        self.manifest: Dict = {}
        self.tables: Dict[str, pd.DataFrame] = {}

    def render_header(self):
        st.markdown('<div class="main-header">📡 Rollable Surface Explorer</div>', unsafe_allow_html=True)

    def render_sidebar(self) -> Optional[Path]:
        """Pick the results directory and one run inside it."""
        st.sidebar.title("⚙️ Runs")
        self.output_dir = st.sidebar.text_input("Results directory", value=self.output_dir)

        runs = list_runs(self.output_dir)
        if not runs:
            st.sidebar.warning("No runs found")
            return None

        names = [run.name for run in runs]
        choice = st.sidebar.selectbox("Experiment run", names, index=len(names) - 1)

        if st.sidebar.button("🔄 Reload", type="primary"):
            st.rerun()

        st.sidebar.markdown("---")
        st.sidebar.markdown("### ℹ️ About")
        st.sidebar.markdown("Runs are produced by `python expcli.py run <experiment>`.")
        return runs[names.index(choice)]

    def load(self, run_dir: Path) -> bool:
        self.run_dir = run_dir
        self.manifest = load_manifest(run_dir)
        self.tables = load_run(run_dir)
        logger.info(f"Loaded {len(self.tables)} table(s) from {run_dir}")
        return bool(self.manifest)

    def render_manifest(self):
        run = self.manifest.get('run', {})
        st.markdown(f"### 🧪 {run.get('experiment', self.run_dir.name)}")
        if run.get('description'):
            st.caption(run['description'])

        col1, col2, col3, col4 = st.columns(4)
        col1.metric("Trials", run.get('trials', 'n/a'))
        col2.metric("Seed", run.get('seed', 'n/a'))
        col3.metric("Algorithm", run.get('algorithm', 'n/a'))
        col4.metric("Transport", run.get('transport', 'n/a'))

        with st.expander("Parameters"):
            params = self.manifest.get('parameters', {})
            st.dataframe(
                pd.DataFrame({'parameter': list(params), 'value': [str(v) for v in params.values()]}),
                use_container_width=True,
                hide_index=True
            )
            overrides = self.manifest.get('overrides', {})
            if overrides:
                st.write("Overrides:", overrides)

    def render_gain_summary(self):
        stats = create_gain_summary(self.tables.get('gains', pd.DataFrame()))
        if not stats:
            return

        col1, col2, col3, col4 = st.columns(4)
        col1.metric("Median gain", format_db(stats['median_gain_db']))
        col2.metric("Max gain", format_db(stats['max_gain_db']))
        col3.metric("Links improved", f"{stats['improved_share']:.0%}")
        col4.metric("Median time", format_duration(stats.get('median_elapsed_s')))

    def render_charts(self):
        figures = ChartCreator.create_run_figures(self.tables)
        if not figures:
            st.info("This run has no tables to chart.")
            return
        for name, fig in figures.items():
            st.markdown(f"### {CHART_TITLES.get(name, name)}")
            st.plotly_chart(fig, use_container_width=True)

    def render_data_tables(self):
        st.markdown("### 📋 Tables")
        for name, frame in self.tables.items():
            with st.expander(f"{name}.csv ({len(frame)} rows)"):
                st.dataframe(frame.round(3), use_container_width=True, hide_index=True)
                st.download_button(
                    label=f"📥 Download {name}.csv",
                    data=frame.to_csv(index=False),
                    file_name=f"{self.run_dir.name}_{name}.csv",
                    mime="text/csv",
                    key=f"download_{name}"
                )

    def run(self):
        """Main application loop."""
        try:
            self.render_header()
            run_dir = self.render_sidebar()
            if run_dir is None:
                st.info(f"No runs under '{self.output_dir}' yet.")
                return

            if not self.load(run_dir):
                st.error(f"Could not read the manifest of {run_dir}.")
                return

            self.render_manifest()
            self.render_gain_summary()
            if 'errors' in self.tables:
                st.warning(f"{len(self.tables['errors'])} trial(s) failed in this run.")
            self.render_charts()
            self.render_data_tables()

        except Exception as e:
            st.error(f"An unexpected error occurred: {e}")
            logger.error(f"Application error: {e}")


def main():
    app = ResultsExplorerApp()
    app.run()


if __name__ == "__main__":
    main()
