import numpy as np
import pytest

from surveysynth.core import BiasModelSpec, ModelSpec, SurveyPanel

DEMO_Y = [
    [9, 18, 4, 14, 20, 3, 8, 3, 6, 12],
    [66, 48, 7, 19, 30, 2, 10, 2, 2, 6],
    [207, 293, 102, 208, 345, 117, 185, 145, 174, 441],
]
DEMO_N = [[100] * 10, [1000] * 10, [1000] * 10]


@pytest.fixture
def demo_panel() -> SurveyPanel:
    """Three-survey, ten-point demonstration panel with one unbiased survey."""
    return SurveyPanel(
        y=np.array(DEMO_Y, dtype=float),
        n=np.array(DEMO_N, dtype=float),
        population=10_000,
        labels=("survey1", "survey2", "survey3"),
    )


@pytest.fixture
def demo_spec() -> ModelSpec:
    return ModelSpec(
        bias=(
            BiasModelSpec.anchor(),
            BiasModelSpec(kind="linear"),
            BiasModelSpec(kind="linear"),
        )
    )
