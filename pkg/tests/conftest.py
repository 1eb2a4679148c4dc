import pytest

from helpers import make_dataset, make_image


@pytest.fixture
def image_factory():
    return make_image


@pytest.fixture
def dataset_factory():
    return make_dataset
