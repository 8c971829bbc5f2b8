import pytest

from csbp_genealogy.fixtures import atom2, feller, feller2
from csbp_genealogy.laplace import SolutionProvider


@pytest.fixture(scope="session")
def feller_mech():
    return feller(0.5)


@pytest.fixture(scope="session")
def feller_provider(feller_mech):
    return SolutionProvider(feller_mech, 4)


@pytest.fixture(scope="session")
def atom2_mech():
    return atom2()


@pytest.fixture(scope="session")
def feller2_mech():
    return feller2()
