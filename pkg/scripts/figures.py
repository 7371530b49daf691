"""
TEM Codec - Sweep Tables
========================
Per-cell aggregates and per-figure pivot tables built from the long-format
trial table written by sweep.py.

Figure tables (median mse_mid90 per cell):
    fig8    bandwidth x number of channels
    fig9    bandwidth x shift configuration
    fig10   bandwidth x integrator shift (fraction of delta)
    fig11a  bandwidth x jitter SNR
    fig11b  shift configuration x jitter SNR

Rows are bandwidths (or shift configurations), columns the second axis.
Plotting is left to whatever tool reads the CSVs.
"""

from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

# =============================================================================
# CONFIGURATION
# =============================================================================

# Columns identifying one sweep cell
CELL_KEYS = ['cell_index', 'omega', 'omega_over_bound', 'm', 'shift_config', 'shift_fraction', 'snr_db']

# figure name -> (row key, column key)
FIGURE_AXES = {
    'fig8': ('omega', 'm'),
    'fig9': ('omega', 'shift_config'),
    'fig10': ('omega', 'shift_fraction'),
    'fig11a': ('omega', 'snr_db'),
    'fig11b': ('shift_config', 'snr_db'),
}

ALL_FIGURES = list(FIGURE_AXES)

TABLE_FLOAT_FORMAT = '%.10g'

# Shift-conditioning trend: at least this many shifts, |rho| above this
MIN_TREND_SHIFTS = 3
TREND_RHO = 0.9

# Bandwidth transition: median MSE below MSE_LIMIT up to TRANSITION_PASS_RATIO
# times the bound, TRANSITION_JUMP times larger at TRANSITION_FAIL_RATIO
MSE_LIMIT = 1e-3
TRANSITION_PASS_RATIO = 0.8
TRANSITION_FAIL_RATIO = 1.5
TRANSITION_JUMP = 100.0

# Shift configurations at one bandwidth stay within this factor of each other
SHIFT_SPREAD = 10.0

# Noise ordering tolerates this many SNR steps where the MSE drops
NOISE_INVERSIONS = 1


# =============================================================================
# CELL AGGREGATES
# =============================================================================

def successful(trials: pd.DataFrame) -> pd.DataFrame:
    """Trials that finished with status 'ok'."""
    return trials[trials['status'] == 'ok']


def aggregate_cells(trials: pd.DataFrame) -> pd.DataFrame:
    """
    One row per sweep cell.

    Columns: the cell keys, n_trials, n_failures, mse_mean, mse_median,
    mse_p90, condition_median, converged_rate, rate_ok_rate.
    """
    rows = []
    for keys, group in trials.groupby('cell_index', sort=True):
        first = group.iloc[0]
        ok = successful(group)
        mse = ok['mse_mid90'].dropna()
        row = {k: first[k] for k in CELL_KEYS}
        row.update({
            'n_trials': len(group),
            'n_failures': int((group['status'] != 'ok').sum()),
            'mse_mean': mse.mean() if len(mse) else np.nan,
            'mse_median': mse.median() if len(mse) else np.nan,
            'mse_p90': np.percentile(mse, 90) if len(mse) else np.nan,
            'condition_median': ok['condition_number'].median() if len(ok) else np.nan,
            'converged_rate': ok['converged'].mean() if len(ok) else np.nan,
            'rate_ok_rate': ok['rate_ok'].mean() if len(ok) else np.nan,
        })
        rows.append(row)
    return pd.DataFrame(rows)


# =============================================================================
# FIGURE PIVOTS
# =============================================================================

def figure_table(trials: pd.DataFrame, figure: str) -> pd.DataFrame:
    """
    Median mse_mid90 pivoted on the two axes of a figure.

    Cells that differ only in dimensions the figure does not show are pooled.
    """
    if figure not in FIGURE_AXES:
        raise ValueError(f"unknown figure '{figure}' (choose from {', '.join(ALL_FIGURES)})")
    row_key, col_key = FIGURE_AXES[figure]
    ok = successful(trials).dropna(subset=[row_key, col_key, 'mse_mid90'])
    if ok.empty:
        return pd.DataFrame(columns=[row_key])

    table = ok.pivot_table(index=row_key, columns=col_key, values='mse_mid90', aggfunc='median')
    table.columns = [f"{col_key}={_label(c)}" for c in table.columns]
    return table.reset_index()


def _label(value) -> str:
    if isinstance(value, str):
        return value
    if np.isinf(value):
        return 'clean'
    return f"{value:g}"


# =============================================================================
# SHIFT CONDITIONING
# =============================================================================

def shift_conditioning(trials: pd.DataFrame, min_shifts: int = MIN_TREND_SHIFTS) -> pd.DataFrame:
    """
    Rank correlation between integrator shift and closed-form conditioning.

    For every bandwidth with at least `min_shifts` distinct shift fractions,
    the median condition number per cell is ranked against the shift. A
    strongly negative rho means conditioning worsens as the shift shrinks.

    Returns:
        DataFrame with omega, n_shifts, spearman_rho, worsens_as_shift_shrinks
    """
    cells = aggregate_cells(trials).dropna(subset=['shift_fraction', 'condition_median'])
    rows = []
    for omega, group in cells.groupby('omega', sort=True):
        by_shift = group.groupby('shift_fraction')['condition_median'].median()
        if len(by_shift) < min_shifts or by_shift.nunique() < 2:
            rho = np.nan
        else:
            rho, _ = spearmanr(by_shift.index.to_numpy(), by_shift.to_numpy())
        rows.append({
            'omega': omega,
            'n_shifts': len(by_shift),
            'spearman_rho': rho,
            'worsens_as_shift_shrinks': bool(rho < -TREND_RHO) if np.isfinite(rho) else False,
        })
    return pd.DataFrame(rows, columns=['omega', 'n_shifts', 'spearman_rho', 'worsens_as_shift_shrinks'])


# =============================================================================
# PHASE CHECKS
# =============================================================================

def bandwidth_transition(trials: pd.DataFrame,
                         pass_ratio: float = TRANSITION_PASS_RATIO,
                         fail_ratio: float = TRANSITION_FAIL_RATIO,
                         mse_limit: float = MSE_LIMIT,
                         jump: float = TRANSITION_JUMP) -> pd.DataFrame:
    """
    Recovery below the bandwidth bound against failure above it, per channel count.

    worst_within is the largest median MSE among cells at or below
    pass_ratio times the bound; above_bound is the median at fail_ratio
    times the bound. A channel count passes when worst_within < mse_limit
    and above_bound is at least `jump` times worst_within.

    Returns:
        DataFrame with m, worst_within, above_bound, jump_ratio, passed
    """
    cells = aggregate_cells(trials).dropna(subset=['mse_median'])
    rows = []
    for m, group in cells.groupby('m', sort=True):
        by_ratio = group.groupby('omega_over_bound')['mse_median'].median()
        ratios = by_ratio.index.to_numpy(dtype=float)
        within = by_ratio[ratios <= pass_ratio * (1 + 1e-9)]
        above = by_ratio[np.isclose(ratios, fail_ratio, rtol=1e-6)]

        worst = float(within.max()) if len(within) else np.nan
        failing = float(above.iloc[0]) if len(above) else np.nan
        if np.isnan(worst) or np.isnan(failing):
            ratio = np.nan
        else:
            ratio = failing / worst if worst > 0 else np.inf
        rows.append({
            'm': int(m),
            'worst_within': worst,
            'above_bound': failing,
            'jump_ratio': ratio,
            'passed': bool(np.isfinite(worst) and worst < mse_limit and ratio >= jump),
        })
    return pd.DataFrame(rows, columns=['m', 'worst_within', 'above_bound', 'jump_ratio', 'passed'])


def shift_independence(trials: pd.DataFrame,
                       spread: float = SHIFT_SPREAD,
                       mse_limit: float = MSE_LIMIT) -> pd.DataFrame:
    """
    Spread of the median MSE across shift configurations at each bandwidth.

    Only multi-machine cells take part. A bandwidth passes when the largest
    median is below mse_limit and within `spread` times the smallest.

    Returns:
        DataFrame with omega, n_configs, mse_min, mse_max, spread, passed
    """
    cells = aggregate_cells(trials)
    cells = cells[cells['m'] > 1].dropna(subset=['mse_median'])
    rows = []
    for omega, group in cells.groupby('omega', sort=True):
        by_config = group.groupby('shift_config')['mse_median'].median()
        low, high = float(by_config.min()), float(by_config.max())
        ratio = high / low if low > 0 else np.inf
        rows.append({
            'omega': omega,
            'n_configs': len(by_config),
            'mse_min': low,
            'mse_max': high,
            'spread': ratio,
            'passed': bool(len(by_config) > 1 and high < mse_limit and ratio <= spread),
        })
    return pd.DataFrame(rows, columns=['omega', 'n_configs', 'mse_min', 'mse_max', 'spread', 'passed'])


def noise_ordering(trials: pd.DataFrame, max_inversions: int = NOISE_INVERSIONS) -> pd.DataFrame:
    """
    Median MSE as the jitter SNR drops, per bandwidth and shift configuration.

    Inversions count the SNR steps (in decreasing SNR order) where the median
    MSE goes down. clean_ratio is the median at the highest finite SNR over
    the noiseless median; it is reported but not judged, since an exact
    decoder leaves the noiseless cell at rounding level.

    Returns:
        DataFrame with omega, shift_config, n_levels, inversions, clean_ratio, passed
    """
    cells = aggregate_cells(trials).dropna(subset=['mse_median'])
    rows = []
    for (omega, config), group in cells.groupby(['omega', 'shift_config'], sort=True):
        by_snr = group.groupby('snr_db')['mse_median'].median().sort_index(ascending=False)
        clean = by_snr[np.isinf(by_snr.index.to_numpy(dtype=float))]
        noisy = by_snr[np.isfinite(by_snr.index.to_numpy(dtype=float))]
        if len(noisy) < 2:
            continue
        inversions = int((np.diff(noisy.to_numpy()) < 0).sum())
        clean_ratio = float(noisy.iloc[0] / clean.iloc[0]) if len(clean) and clean.iloc[0] > 0 else np.nan
        rows.append({
            'omega': omega,
            'shift_config': config,
            'n_levels': len(noisy),
            'inversions': inversions,
            'clean_ratio': clean_ratio,
            'passed': inversions <= max_inversions,
        })
    return pd.DataFrame(rows, columns=['omega', 'shift_config', 'n_levels', 'inversions',
                                       'clean_ratio', 'passed'])


# =============================================================================
# OUTPUT
# =============================================================================

def build_figure_tables(trials: pd.DataFrame,
                        figures: Optional[List[str]] = None) -> Dict[str, pd.DataFrame]:
    figures = ALL_FIGURES if figures is None else figures
    return {name: figure_table(trials, name) for name in figures}


def save_tables(trials: pd.DataFrame, out_dir: Path,
                figures: Optional[List[str]] = None, verbose: bool = True) -> Dict[str, Path]:
    """Write cells.csv, one CSV per figure and the matching phase checks; returns name -> path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}

    cells = aggregate_cells(trials)
    path = out_dir / 'cells.csv'
    cells.to_csv(path, index=False, float_format=TABLE_FLOAT_FORMAT, lineterminator='\n')
    written['cells'] = path
    if verbose:
        print(f"  ✓ cells: {len(cells)} rows")

    for name, table in build_figure_tables(trials, figures).items():
        path = out_dir / f'{name}.csv'
        table.to_csv(path, index=False, float_format=TABLE_FLOAT_FORMAT, lineterminator='\n')
        written[name] = path
        if verbose:
            print(f"  ✓ {name}: {len(table)} x {max(len(table.columns) - 1, 0)}")

    if figures is None or 'fig10' in figures:
        trend = shift_conditioning(trials)
        path = out_dir / 'conditioning.csv'
        trend.to_csv(path, index=False, float_format=TABLE_FLOAT_FORMAT, lineterminator='\n')
        written['conditioning'] = path
        if verbose:
            flagged = int(trend['worsens_as_shift_shrinks'].sum())
            print(f"  ✓ conditioning: {flagged}/{len(trend)} bandwidths worsen as the shift shrinks")

    checks = {
        'transition': (('fig8',), bandwidth_transition),
        'shift_independence': (('fig9',), shift_independence),
        'noise_ordering': (('fig11a', 'fig11b'), noise_ordering),
    }
    for name, (owners, check) in checks.items():
        if figures is not None and not set(owners) & set(figures):
            continue
        table = check(trials)
        path = out_dir / f'{name}.csv'
        table.to_csv(path, index=False, float_format=TABLE_FLOAT_FORMAT, lineterminator='\n')
        written[name] = path
        if verbose:
            print(f"  ✓ {name}: {int(table['passed'].sum())}/{len(table)} passed")
    return written
