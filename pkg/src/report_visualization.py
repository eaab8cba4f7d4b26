import logging

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

logger = logging.getLogger(__name__)

REGIME_COLORS = {
    'OPTIMAL': '#2E8B57',       # green
    'SUBOPTIMAL': '#C0392B',    # red
    'INCONCLUSIVE': '#F4D03F',  # yellow
    'EXCLUDED': '#7F7F7F',      # gray
}
REGIME_ORDER = ['OPTIMAL', 'SUBOPTIMAL', 'INCONCLUSIVE', 'EXCLUDED']

SVG_METADATA = {'Date': None, 'Creator': None}


def apply_common_style(fig, ax, title):
    """Apply common styling to all plots"""
    dark_gray = '#2F2F2F'
    fig.patch.set_facecolor(dark_gray)
    ax.set_facecolor(dark_gray)
    ax.set_title(title, color='white', fontsize=14)
    ax.tick_params(colors='white')
    for spine in ax.spines.values():
        spine.set_color('white')
    ax.xaxis.label.set_color('white')
    ax.yaxis.label.set_color('white')
    legend = ax.get_legend()
    if legend is not None:
        legend.get_frame().set_facecolor(dark_gray)
        for text in legend.get_texts():
            text.set_color('white')
    fig.tight_layout()


def save_svg(fig, filepath):
    """Save an SVG whose bytes depend only on the plotted data."""
    with plt.rc_context({'svg.hashsalt': 'disclosure-check', 'svg.fonttype': 'path'}):
        fig.savefig(filepath, format='svg', metadata=SVG_METADATA, facecolor=fig.get_facecolor())
    plt.close(fig)
    logger.info(f"Figure saved to {filepath}")
    return filepath


def plot_envelope(result, filepath):
    """Sender value over the posterior, the full-disclosure chord and the concave envelope."""
    p = result.sample_coords[:, 1]
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot(p, result.sample_values, color='#00FFFF', label='sender value')
    chord = (1 - p) * result.sample_values[0] + p * result.sample_values[-1]
    ax.plot(p, chord, color='#FFD700', linestyle='--', label='full disclosure')
    if result.envelope_values is not None:
        ax.plot(p, result.envelope_values, color='#FF00FF', linestyle=':', label='concave envelope')
    ax.axvline(result.prior[1], color='white', linewidth=0.8, alpha=0.6)
    ax.set_xlabel(f'P(state = {result.states[1]:g})')
    ax.set_ylabel('sender expected utility')
    ax.legend()
    apply_common_style(fig, ax, result.verdict.value.replace('_', ' ').title())
    return save_svg(fig, filepath)


def plot_ratio_field(grid, values, witnesses, filepath, title='V_a / (-U_aa)'):
    """Heat map of the ratio over the grid with witness pairs overlaid."""
    fig, ax = plt.subplots(figsize=(7, 5))
    mesh = ax.pcolormesh(grid.actions, grid.states, values, shading='nearest', cmap='viridis')
    cbar = fig.colorbar(mesh, ax=ax)
    cbar.ax.tick_params(colors='white')
    for w in witnesses:
        ax.plot([w.point_1[1], w.point_2[1]], [w.point_1[0], w.point_2[0]],
                color='#FF00FF', marker='o', markersize=3, linewidth=0.8)
    ax.set_xlabel('action a')
    ax.set_ylabel('state')
    apply_common_style(fig, ax, title)
    return save_svg(fig, filepath)


def plot_regime_map(df, filepath):
    """Regions of the (gamma, rho) lattice; disagreeing validation points circled."""
    gammas = np.sort(df['gamma'].unique())
    rhos = np.sort(df['rho'].unique())
    codes = np.full((rhos.size, gammas.size), np.nan)
    lookup = {name: i for i, name in enumerate(REGIME_ORDER)}
    for row in df.itertuples(index=False):
        codes[np.searchsorted(rhos, row.rho), np.searchsorted(gammas, row.gamma)] = lookup[row.regime]
    cmap = ListedColormap([REGIME_COLORS[name] for name in REGIME_ORDER])

    fig, ax = plt.subplots(figsize=(6, 6))
    ax.pcolormesh(gammas, rhos, codes, shading='nearest', cmap=cmap, vmin=-0.5, vmax=len(REGIME_ORDER) - 0.5)
    if 'agrees' in df.columns:
        bad = df[df['validated'] & ~df['agrees']]
        if not bad.empty:
            ax.scatter(bad['gamma'], bad['rho'], facecolors='none', edgecolors='white', s=60,
                       label='disagreement')
    for name in REGIME_ORDER[:3]:
        ax.plot([], [], marker='s', linestyle='None', color=REGIME_COLORS[name], label=name.lower())
    ax.set_xlabel('agent risk aversion gamma')
    ax.set_ylabel('principal risk aversion rho')
    ax.legend(loc='upper left')
    apply_common_style(fig, ax, 'Full disclosure regimes')
    return save_svg(fig, filepath)
