"""
Rendu texte et CSV des résultats d'évaluation
"""

import math
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from data_io import write_table
from evaluation import ConfusionSummary

logger = logging.getLogger(__name__)

# Comptages moyens par jour (a, b, c, d) reproduisant la comparaison publiée
BENCHMARK_COUNTS = ConfusionSummary(a=1222.0, b=721.0, c=664.0, d=279.0)
MODEL_COUNTS = ConfusionSummary(a=994.0, b=297.0, c=914.0, d=703.0)

RATE_COLUMNS = [
    ('far', 'False Alarm'),
    ('sensitivity', 'Sensitivity'),
    ('specificity', 'Specificity'),
    ('ppv', 'Positive Predictive Value'),
]


def _fmt(value: float) -> str:
    return 'n/a' if value is None or math.isnan(value) else f"{value:.1f}"


def render_confusion_table(rows: Sequence[Tuple[str, ConfusionSummary]]) -> str:
    """
    Table des taux (%) en colonnes fixes: une ligne par modèle

    Args:
        rows: [(libellé, ConfusionSummary), ...], typiquement référence puis modèle

    Returns:
        texte terminé par un saut de ligne
    """
    label_width = max([len(label) for label, _ in rows] + [len('Model')])
    widths = [len(title) for _, title in RATE_COLUMNS]
    sep = '+' + '-' * (label_width + 2) + '+' + '+'.join('-' * (w + 2) for w in widths) + '+'
    header = '| ' + ' ' * label_width + ' | ' + ' | '.join(title for _, title in RATE_COLUMNS) + ' |'
    lines = [sep, header, sep]
    for label, summary in rows:
        rates = summary.rates()
        cells = [_fmt(rates[key]).rjust(w) for (key, _), w in zip(RATE_COLUMNS, widths)]
        lines.append('| ' + label.ljust(label_width) + ' | ' + ' | '.join(cells) + ' |')
        lines.append(sep)
    return '\n'.join(lines) + '\n'


def confusion_frame(rows: Sequence[Tuple[str, ConfusionSummary]]) -> pd.DataFrame:
    records = []
    for label, s in rows:
        records.append({'model': label, 'a': s.a, 'b': s.b, 'c': s.c, 'd': s.d, **s.rates()})
    return pd.DataFrame(records)


def render_metric_summary(metrics: Dict[str, float]) -> str:
    lines = ['📊 Métriques spatiales']
    width = max(len(k) for k in metrics) if metrics else 0
    for name, value in metrics.items():
        lines.append(f"   {name.ljust(width)} : {_fmt(value) if isinstance(value, float) else value}")
    return '\n'.join(lines) + '\n'


def write_report(
    out_dir: Union[str, Path],
    rows: Sequence[Tuple[str, ConfusionSummary]],
    metrics: Optional[Dict[str, float]] = None,
    tables: Optional[Dict[str, pd.DataFrame]] = None,
    header: Optional[Dict] = None
) -> List[Path]:
    """
    Écrit report.txt (table de confusion + métriques) et un CSV par table

    Returns:
        chemins écrits
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    text = render_confusion_table(rows)
    if metrics:
        text += '\n' + render_metric_summary(metrics)
    report_path = out_dir / 'report.txt'
    with open(report_path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)
    written.append(report_path)

    all_tables = {'confusion': confusion_frame(rows)}
    if metrics:
        all_tables['metrics'] = pd.DataFrame({'metric': list(metrics), 'value': list(metrics.values())})
    all_tables.update(tables or {})
    for name, table in all_tables.items():
        path = out_dir / f"{name}.csv"
        write_table(table, path, header=header)
        written.append(path)
    logger.info(f"💾 Rapport écrit dans {out_dir} ({len(written)} fichier(s))")
    return written
