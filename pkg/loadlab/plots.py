"""
SVG figures of cluster medoids, trends and allocations.
"""

import logging
import os

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

_log = logging.getLogger(__name__)

FORMAT = 'svg'
# fixed element ids and no timestamp keep reruns byte-identical
HASH_SALT = 'loadlab'


def _save(fig, path):
    fig.tight_layout()
    with matplotlib.rc_context({'svg.hashsalt': HASH_SALT}):
        fig.savefig(path, format=FORMAT, metadata={'Date': None})
    plt.close(fig)
    _log.debug('wrote %s', path)
    return path


def plot_medoids(model, hours, path, bins=30):
    """
    One panel per cluster: a 2-d histogram of the members' hourly energy
    with the medoid drawn on top.

    :param model: :class:`loadlab.cluster.ClusterModel` with medoid profiles
    :param hours: ``(p, 24)`` hourly energies of the clustered subset
    """
    hours = np.asarray(hours, dtype=np.float64)
    top = max(float(np.nanmax(hours)), 1.0)
    edges = (np.arange(25) - 0.5, np.linspace(0.0, top, bins + 1))
    fig, axes = plt.subplots(1, model.k, figsize=(3.2 * model.k, 3.2),
                             sharey=True, squeeze=False)
    for c, ax in enumerate(axes[0]):
        members = hours[model.labels == c]
        x = np.tile(np.arange(24), len(members))
        ax.hist2d(x, members.ravel(), bins=edges, cmap='Greys')
        ax.plot(np.arange(24), hours[model.medoid_indices[c]], color='red',
                linewidth=2)
        title = model.names[c] if model.names else 'cluster_{}'.format(c)
        ax.set_title('{} (n={})'.format(title, len(members)))
        ax.set_xlabel('hour')
    axes[0][0].set_ylabel('Wh')
    return _save(fig, path)


def plot_trend(trends, path):
    """Mean daily energy per age with its confidence band, one line per
    trend."""
    fig, ax = plt.subplots(figsize=(8, 4))
    for trend in trends:
        table = trend.table
        line, = ax.plot(table.index, table['mean_wh'], label=trend.variant)
        ax.fill_between(table.index, table['ci_low'], table['ci_high'],
                        color=line.get_color(), alpha=0.2)
    ax.set_xlabel('days since activation')
    ax.set_ylabel('Wh per day')
    ax.legend()
    return _save(fig, path)


def plot_allocation(trend, path):
    """Stacked cluster proportions per age; a dashed line marks the age
    where the household count falls below the trend's threshold."""
    table = trend.table.drop(columns='households')
    fig, ax = plt.subplots(figsize=(8, 4))
    if len(table):
        ax.stackplot(table.index, table.fillna(0.0).to_numpy().T,
                     labels=[str(c) for c in table.columns])
        ax.legend(loc='upper right', fontsize='small')
    if trend.cutoff_age is not None:
        ax.axvline(trend.cutoff_age, color='black', linestyle='--')
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel('days since activation')
    ax.set_ylabel('share of households')
    ax.set_title(trend.variant)
    return _save(fig, path)


def plot_crosstab(crosstab, path):
    """Heatmap of cluster shares per dominant cluster."""
    fig, ax = plt.subplots(figsize=(1.2 * crosstab.shape[1] + 2,
                                    0.8 * crosstab.shape[0] + 1.5))
    image = ax.imshow(crosstab.to_numpy(), cmap='Blues', vmin=0.0, vmax=1.0)
    for (i, j), value in np.ndenumerate(crosstab.to_numpy()):
        ax.text(j, i, '{:.2f}'.format(value), ha='center', va='center')
    ax.set_xticks(range(crosstab.shape[1]))
    ax.set_xticklabels(crosstab.columns, rotation=45, ha='right')
    ax.set_yticks(range(crosstab.shape[0]))
    ax.set_yticklabels(crosstab.index)
    ax.set_xlabel('cluster')
    ax.set_ylabel('dominant cluster')
    fig.colorbar(image, ax=ax)
    return _save(fig, path)


def write_all(out_dir, consumption, allocation, crosstab):
    """Write every analysis figure to ``out_dir`` and return the paths."""
    paths = [plot_trend(consumption,
                        os.path.join(out_dir, 'trend_consumption.svg'))]
    for trend in allocation:
        paths.append(plot_allocation(trend, os.path.join(
            out_dir, 'trend_clusters_{}.svg'.format(trend.variant))))
    paths.append(plot_crosstab(crosstab,
                               os.path.join(out_dir, 'dominant_crosstab.svg')))
    return paths
