import numpy as np
import pytest

from refuge_eval.masks import LabelMask

CODES = np.array([0, 128, 255], dtype=np.uint8)

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = []


def random_mask(rng, width, height, p=(0.2, 0.3, 0.5)):
    return LabelMask(rng.choice(CODES, size=(height, width), p=p))


@pytest.fixture
def rng():
    return np.random.default_rng(20181016)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# published segmentation leaderboard: team, score, cup DSC, disc DSC, vCDR MAE
TABLE5 = [
    ("CUHKMED", 1.75, 0.8826, 0.9602, 0.0450),
    ("Masker", 2.5, 0.8837, 0.9464, 0.0414),
    ("BUCT", 3.0, 0.8728, 0.9525, 0.0456),
    ("NKSG", 4.6, 0.8643, 0.9488, 0.0465),
    ("VRT", 5.4, 0.8600, 0.9532, 0.0525),
    ("AIML", 5.45, 0.8519, 0.9505, 0.0469),
    ("Mammoth", 7.1, 0.8667, 0.9361, 0.0526),
    ("SMILEDeepDR", 7.45, 0.8367, 0.9386, 0.0488),
    ("NightOwl", 8.6, 0.8257, 0.9487, 0.0563),
    ("SDSAIRC", 9.15, 0.8315, 0.9436, 0.0674),
    ("Cvblab", 11.0, 0.7728, 0.9077, 0.0798),
    ("WinterFell", 12.0, 0.6861, 0.8772, 0.1536),
]


def table5_rows():
    from refuge_eval.ranking import MetricRow

    return [MetricRow(team, od, oc, mae) for team, _, oc, od, mae in TABLE5]
