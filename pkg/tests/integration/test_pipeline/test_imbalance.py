"""Loss weighting under a heavy background share and a blurred output."""

import pytest

from heatreg.models.schemas.fit import Variant
from heatreg.services.ablation import imbalance_study

pytestmark = [pytest.mark.integration, pytest.mark.slow]

SEEDS = range(20)


class TestImbalance:
    """The weighted loss keeps peaks above the score floor where plain L2 does not."""

    def test_wahr_beats_base(self):
        study = imbalance_study(SEEDS, Variant.WAHR, Variant.BASE)
        assert study.runs == 20
        assert study.foreground_fraction < 0.01
        assert study.win_rate >= 0.7

    def test_swahr_beats_sahr(self):
        study = imbalance_study(SEEDS, Variant.SWAHR, Variant.SAHR)
        assert study.runs == 20
        assert study.win_rate >= 0.7
