import os

import pytest

from eblasso import priors as P

# The four signal mixtures used throughout the experiment suite, with the
# shared sigma = 1, epsilon = 0.1 setup.
ROW1 = P.PriorSpec(0.1, (P.gaussian(1.0, 3.5, 1.0),))
ROW2 = P.PriorSpec(0.1, (P.gaussian(0.2, -3.6, 1.0), P.gaussian(0.8, 4.0, 1.0)))
ROW3 = P.PriorSpec(0.1, (P.point(1.0, -4.3),))
ROW4 = P.PriorSpec(0.1, (P.point(0.2, -2.0), P.point(0.8, 3.0)))

PANEL_PRIORS = {"row1": ROW1, "row2": ROW2, "row3": ROW3, "row4": ROW4}

# Full-scale acceptance runs (full-scale problems) are opt-in:
#   EBLASSO_FULL=1 pytest tests/test_acceptance.py
FULL_SCALE = os.environ.get("EBLASSO_FULL", "") == "1"


@pytest.fixture
def row1():
    return ROW1


@pytest.fixture
def row2():
    return ROW2
