import numpy as np
import pytest

from rpmixl.dataset import Dataset
from rpmixl.model_spec import parse_model_spec

# Layout of the published heterogeneity-in-means model (three outcomes,
# surgical as base, two random indicators with one mean shifter each).
TABLE3_MODEL = """
alternatives: [non_surgical, surgical, fatal]
base: surgical
label_column: outcome
utilities:
  - {alt: non_surgical, var: constant, kind: fixed}
  - {alt: fatal, var: constant, kind: fixed}
  - {alt: fatal, var: male, kind: random, het_mean: [motorcycle]}
  - {alt: fatal, var: rural_road, kind: random, het_mean: [nighttime]}
  - {alt: non_surgical, var: pedestrian, kind: fixed}
  - {alt: fatal, var: bus, kind: fixed}
  - {alt: fatal, var: truck, kind: fixed}
  - {alt: fatal, var: age_over_65, kind: fixed}
  - {alt: non_surgical, var: weekday, kind: fixed}
  - {alt: fatal, var: wet_pavement, kind: fixed}
  - {alt: non_surgical, var: low_visibility, kind: fixed}
  - {alt: fatal, var: speeding, kind: fixed}
  - {alt: fatal, var: overtaking, kind: fixed}
  - {alt: non_surgical, var: low_visibility*bus, kind: fixed}
  - {alt: fatal, var: overtaking*wet_pavement, kind: fixed}
"""

TWO_RANDOM_MODEL = """
alternatives: [a, b, c]
base: a
label_column: y
utilities:
  - {alt: b, var: constant, kind: fixed}
  - {alt: c, var: constant, kind: fixed}
  - {alt: b, var: x1, kind: random, het_mean: [z1], het_var: [w1]}
  - {alt: c, var: x2, kind: random, het_mean: [z1, w1]}
  - {alt: c, var: x3, kind: fixed}
"""


@pytest.fixture
def two_random_spec():
    return parse_model_spec(TWO_RANDOM_MODEL)


def random_dataset(columns, n, n_alt, seed, alternatives=None, label_column="y"):
    rng = np.random.default_rng(seed)
    values = rng.integers(0, 2, size=(n, len(columns))).astype(float)
    return Dataset(
        columns=tuple(columns),
        binary=(True,) * len(columns),
        values=values,
        chosen=rng.integers(0, n_alt, size=n),
        alternatives=tuple(alternatives or "abcdefgh"[:n_alt]),
        label_column=label_column,
    )


@pytest.fixture
def two_random_data():
    return random_dataset(["x1", "x2", "x3", "z1", "w1"], 60, 3, seed=11)
