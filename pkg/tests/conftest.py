import numpy as np
import pytest

import ripplerec as rr
from ripplerec.synthetic import SyntheticSpec, generate, tiny_spec


@pytest.fixture(scope="session")
def tiny_files(tmp_path_factory):
    """Small synthetic dataset files: 50 users, 100 items, ~500 triples."""
    out = tmp_path_factory.mktemp("tiny")
    return generate(tiny_spec(seed=1), str(out))


@pytest.fixture(scope="session")
def tiny_data(tiny_files):
    kg = rr.load_kg(tiny_files.kg)
    item_map = rr.load_item_map(tiny_files.item_map, kg)
    dataset = rr.build_dataset(rr.binarize(tiny_files.ratings, 4.0, item_map), seed=3)
    return kg, dataset


@pytest.fixture(scope="session")
def mid_files(tmp_path_factory):
    """Mid-size fixture with a planted relation-cluster signal."""
    out = tmp_path_factory.mktemp("mid")
    return generate(SyntheticSpec(seed=7), str(out))


@pytest.fixture(scope="session")
def mid_data(mid_files):
    kg = rr.load_kg(mid_files.kg)
    item_map = rr.load_item_map(mid_files.item_map, kg)
    dataset = rr.build_dataset(rr.binarize(mid_files.ratings, 4.0, item_map), seed=11)
    return kg, dataset


def write_kg(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in rows:
            fh.write(f"{h}\t{r}\t{t}\n")
    return str(path)


@pytest.fixture
def chain_kg(tmp_path):
    """Two-triple chain a -r-> b -r-> c."""
    path = write_kg(tmp_path / "chain.tsv", [("a", "r", "b"), ("b", "r", "c")])
    return rr.load_kg(path)


def make_params(hp, num_entities, num_relations, **overrides):
    """Handcrafted parameter store for closed-form forward checks."""
    params = rr.init_params(num_entities, num_relations, hp, seed=0)
    for name, value in overrides.items():
        params.values[name][...] = np.asarray(value, dtype=params.dtype)
    return params
