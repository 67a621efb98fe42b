import plotly.graph_objects as go
from plotly.subplots import make_subplots
import pandas as pd
from typing import Dict, Optional

from utils import empirical_cdf

DESIGN_COLORS = {
    'tunable': '#26A69A',
    'multi-design': '#FF9800',
    'wideband': '#2196F3',
}
BAND_COLORS = ['#9C27B0', '#2196F3', '#FF9800', '#26A69A', '#EF5350']


def _band_label(frequency: float) -> str:
    if frequency >= 1e9:
        return f"{frequency / 1e9:.2f} GHz"
    return f"{frequency / 1e6:.0f} MHz"


class ChartCreator:
    """Plotly figures for finished experiment runs."""

    @staticmethod
    def create_power_box_chart(df: pd.DataFrame) -> go.Figure:
        """Delivered surface power per design (one box per design)."""

        fig = go.Figure()
        for design, group in df.groupby('design', sort=False):
            fig.add_trace(
                go.Box(
                    y=group['delivered_db'],
                    name=design,
                    marker_color=DESIGN_COLORS.get(design, '#607D8B'),
                    boxmean=True
                )
            )

        fig.update_layout(
            title='Signal power delivered from the surface',
            yaxis_title='Delivered power (dB)',
            height=500,
            template='plotly_white',
            showlegend=False
        )
        return fig

    @staticmethod
    def create_utilization_chart(df: pd.DataFrame) -> go.Figure:
        """Turned-on elements per design, median with min/max whiskers."""

        summary = df.groupby('design', sort=False)['elements_on'].agg(['median', 'min', 'max']).reset_index()
        fig = go.Figure(
            go.Bar(
                x=summary['design'],
                y=summary['median'],
                marker_color=[DESIGN_COLORS.get(d, '#607D8B') for d in summary['design']],
                error_y=dict(
                    type='data',
                    symmetric=False,
                    array=summary['max'] - summary['median'],
                    arrayminus=summary['median'] - summary['min']
                ),
                name='Elements on'
            )
        )
        if 'elements_total' in df.columns:
            fig.add_hline(y=float(df['elements_total'].max()), line_dash="dash", line_color="gray",
                          annotation_text="Elements available")

        fig.update_layout(
            title='Turned-on surface elements',
            yaxis_title='Elements on',
            height=450,
            template='plotly_white'
        )
        return fig

    @staticmethod
    def create_elements_needed_chart(df: pd.DataFrame) -> go.Figure:
        """Elements each design needs, by number of concurrent frequencies."""

        fig = go.Figure()
        for design, group in df.groupby('design', sort=False):
            fig.add_trace(
                go.Scatter(
                    x=group['n_frequencies'],
                    y=group['elements'],
                    mode='lines+markers',
                    name=design,
                    line=dict(color=DESIGN_COLORS.get(design, '#607D8B'), width=2)
                )
            )

        fig.update_layout(
            title='Elements needed for comparable performance',
            xaxis_title='Number of frequencies',
            yaxis_title='Elements',
            xaxis=dict(dtick=1),
            height=450,
            template='plotly_white'
        )
        return fig

    @staticmethod
    def create_gain_cdf_chart(df: pd.DataFrame, by: str = 'frequency') -> go.Figure:
        """CDF of RSSI gain, one curve per value of ``by``."""

        fig = go.Figure()
        for i, (key, group) in enumerate(df.groupby(by)):
            cdf = empirical_cdf(group['gain_db'])
            label = _band_label(key) if by == 'frequency' else str(key)
            fig.add_trace(
                go.Scatter(
                    x=cdf['value'],
                    y=cdf['fraction'],
                    mode='lines',
                    name=label,
                    line=dict(color=BAND_COLORS[i % len(BAND_COLORS)], width=2, shape='hv')
                )
            )
        fig.add_vline(x=0, line_dash="dash", line_color="gray")

        fig.update_layout(
            title='RSSI gain',
            xaxis_title='Gain (dB)',
            yaxis_title='CDF',
            height=450,
            template='plotly_white'
        )
        return fig

    @staticmethod
    def create_length_histogram(df: pd.DataFrame) -> go.Figure:
        """Extended roll length distribution per band."""

        bands = list(df['band'].unique())
        fig = make_subplots(rows=1, cols=max(1, len(bands)), subplot_titles=bands)
        for i, band in enumerate(bands):
            group = df[df['band'] == band]
            fig.add_trace(
                go.Histogram(
                    x=group['length_cm'],
                    name=band,
                    marker_color=BAND_COLORS[i % len(BAND_COLORS)],
                    histnorm='probability'
                ),
                row=1, col=i + 1
            )
            fig.update_xaxes(title_text='Length (cm)', row=1, col=i + 1)

        fig.update_layout(
            title='Extended roll lengths',
            height=400,
            template='plotly_white',
            showlegend=False
        )
        return fig

    @staticmethod
    def create_panel_dynamics_chart(df: pd.DataFrame) -> go.Figure:
        """Median extended rolls per panel as links are added."""

        summary = df.groupby(['n_links', 'panel_id'])['extended_rolls'].median().reset_index()
        fig = go.Figure()
        for i, (panel_id, group) in enumerate(summary.groupby('panel_id')):
            fig.add_trace(
                go.Bar(
                    x=group['n_links'],
                    y=group['extended_rolls'],
                    name=f'Panel {panel_id}',
                    marker_color=BAND_COLORS[i % len(BAND_COLORS)]
                )
            )

        fig.update_layout(
            title='Extended rolls per panel',
            xaxis_title='Concurrent links',
            yaxis_title='Extended rolls (median)',
            barmode='group',
            height=450,
            template='plotly_white'
        )
        return fig

    @staticmethod
    def create_timing_chart(df: pd.DataFrame) -> go.Figure:
        """Convergence time per band, standard and fast motor."""

        summary = df.groupby('frequency')[['elapsed_s', 'elapsed_fast_s']].median().reset_index()
        labels = [_band_label(f) for f in summary['frequency']]
        fig = go.Figure()
        fig.add_trace(go.Bar(x=labels, y=summary['elapsed_s'], name='20 rpm', marker_color='#2196F3'))
        fig.add_trace(go.Bar(x=labels, y=summary['elapsed_fast_s'], name='80 rpm', marker_color='#26A69A'))

        fig.update_layout(
            title='Convergence time',
            yaxis_title='Time (s, median)',
            barmode='group',
            height=450,
            template='plotly_white'
        )
        return fig

    @staticmethod
    def create_speedup_chart(df: pd.DataFrame) -> go.Figure:
        """Group-sweep time over enumeration time, per trial."""

        fig = go.Figure(
            go.Histogram(x=df['ratio'], marker_color='#9C27B0', name='group / enumerate')
        )
        fig.add_vline(x=1.0, line_dash="dash", line_color="red", annotation_text="No speedup")

        fig.update_layout(
            title='Group sweeping time relative to enumeration',
            xaxis_title='Time ratio',
            yaxis_title='Trials',
            height=400,
            template='plotly_white'
        )
        return fig

    @staticmethod
    def create_resonance_chart(df: pd.DataFrame) -> go.Figure:
        """Strip reflectivity over frequency, one curve per length."""

        fig = go.Figure()
        for i, (length, group) in enumerate(df.groupby('length_cm')):
            fig.add_trace(
                go.Scatter(
                    x=group['frequency'] / 1e9,
                    y=group['reflectivity'],
                    mode='lines',
                    name=f'{length} cm',
                    line=dict(color=BAND_COLORS[i % len(BAND_COLORS)], width=2)
                )
            )

        fig.update_layout(
            title='Strip reflectivity',
            xaxis_title='Frequency (GHz)',
            yaxis_title='Power reflectivity',
            height=450,
            template='plotly_white'
        )
        return fig

    @staticmethod
    def create_oracle_gap_chart(df: pd.DataFrame) -> go.Figure:
        """Greedy result as a fraction of the exhaustive optimum (linear power)."""

        fig = go.Figure(
            go.Histogram(x=df['linear_ratio'], marker_color='#26A69A', nbinsx=20, name='greedy / optimum')
        )
        fig.add_vline(x=0.8, line_dash="dash", line_color="orange")

        fig.update_layout(
            title='Greedy sweep against the exhaustive optimum',
            xaxis_title='Linear power ratio',
            yaxis_title='Instances',
            height=400,
            template='plotly_white'
        )
        return fig

    @staticmethod
    def create_perturbation_chart(df: pd.DataFrame) -> go.Figure:
        """Gain before and after the transmitter moves."""

        fig = go.Figure()
        for column, name, color in (('gain_before_db', 'Before', '#2196F3'), ('gain_after_db', 'After move', '#EF5350')):
            cdf = empirical_cdf(df[column])
            fig.add_trace(
                go.Scatter(x=cdf['value'], y=cdf['fraction'], mode='lines', name=name,
                           line=dict(color=color, width=2, shape='hv'))
            )

        fig.update_layout(
            title='Stability under transmitter movement',
            xaxis_title='Gain (dB)',
            yaxis_title='CDF',
            height=450,
            template='plotly_white'
        )
        return fig

    @staticmethod
    def create_run_figures(tables: Dict[str, pd.DataFrame]) -> Dict[str, go.Figure]:
        """Every figure that the tables of one run support."""

        builders = {
            'power': ChartCreator.create_power_box_chart,
            'utilization': ChartCreator.create_utilization_chart,
            'elements_needed': ChartCreator.create_elements_needed_chart,
            'gains': ChartCreator.create_gain_cdf_chart,
            'roll_lengths': ChartCreator.create_length_histogram,
            'panel_dynamics': ChartCreator.create_panel_dynamics_chart,
            'timing': ChartCreator.create_timing_chart,
            'speedup': ChartCreator.create_speedup_chart,
            'resonance': ChartCreator.create_resonance_chart,
            'oracle_gap': ChartCreator.create_oracle_gap_chart,
            'perturbation': ChartCreator.create_perturbation_chart,
        }
        figures = {}
        for name, build in builders.items():
            frame: Optional[pd.DataFrame] = tables.get(name)
            if frame is not None and not frame.empty:
                figures[name] = build(frame)
        return figures
