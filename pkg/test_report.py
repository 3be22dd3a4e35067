"""Tests du rendu de la table de confusion et du rapport"""
import logging
import tempfile
from pathlib import Path

import numpy as np

import report
from data_io import read_header
from evaluation import ConfusionSummary


def test_table_comparaison_publiee():
    text = report.render_confusion_table([('CLIMADA', report.BENCHMARK_COUNTS), ('Model', report.MODEL_COUNTS)])
    lines = text.splitlines()
    assert text.endswith('\n')
    assert 'False Alarm' in lines[1] and 'Positive Predictive Value' in lines[1]
    climada = [c.strip() for c in lines[3].strip('|').split('|')]
    model = [c.strip() for c in lines[5].strip('|').split('|')]
    assert climada == ['CLIMADA', '72.1', '64.8', '27.9', '62.9']
    assert model == ['Model', '29.7', '52.1', '70.3', '77.0']
    assert len({len(line) for line in lines}) == 1


def test_taux_non_definis():
    text = report.render_confusion_table([('Vide', ConfusionSummary(0.0, 0.0, 0.0, 3.0))])
    row = [c.strip() for c in text.splitlines()[3].strip('|').split('|')]
    assert row == ['Vide', '0.0', 'n/a', '100.0', 'n/a']


def test_ecriture_du_rapport():
    rows = [('CLIMADA', report.BENCHMARK_COUNTS), ('Model', report.MODEL_COUNTS)]
    with tempfile.TemporaryDirectory() as tmp:
        written = report.write_report(Path(tmp) / 'evaluation', rows, metrics={'skss_model': 1.25, 'n_days': 3},
                                      header={'seed': 7})
        names = sorted(p.name for p in written)
        assert names == ['confusion.csv', 'metrics.csv', 'report.txt']
        text = (Path(tmp) / 'evaluation' / 'report.txt').read_text(encoding='utf-8')
        assert 'skss_model' in text and '1.2' in text
        assert read_header(Path(tmp) / 'evaluation' / 'confusion.csv')['seed'] == '7'
    frame = report.confusion_frame(rows)
    np.testing.assert_allclose(frame['far'], [72.1, 29.7], atol=0.05)


if __name__ == "__main__":
    logging.basicConfig(level=logging.WARNING)
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith('test_') and callable(fn)]
    failed = 0
    for name, fn in tests:
        try:
            fn()
            print(f"✅ {name}")
        except Exception as e:
            failed += 1
            print(f"❌ {name}: {e!r}")
    print(f"\n📊 {len(tests) - failed}/{len(tests)} test(s) réussi(s)")
