import numpy as np
import pytest

from msdn.data_io import Dataset, SynthSpec, generate_synthetic

TINY_SPEC = SynthSpec(
    num_seen=3,
    num_unseen=2,
    num_attributes=4,
    num_regions=3,
    visual_dim=5,
    attr_dim=3,
    samples_per_class=6,
    noise_std=0.05,
    seed=11,
)


@pytest.fixture(scope="session")
def tiny_dataset() -> Dataset:
    return generate_synthetic(TINY_SPEC)


@pytest.fixture()
def fresh_tiny_dataset() -> Dataset:
    """A private copy for tests that mutate tensors."""
    ds = generate_synthetic(TINY_SPEC)
    return Dataset(
        features=ds.features.copy(),
        attributes=ds.attributes.copy(),
        class_semantics=ds.class_semantics.copy(),
        labels=ds.labels.copy(),
        seen_classes=ds.seen_classes.copy(),
        unseen_classes=ds.unseen_classes.copy(),
        train_idx=ds.train_idx.copy(),
        test_seen_idx=ds.test_seen_idx.copy(),
        test_unseen_idx=ds.test_unseen_idx.copy(),
        extras={k: v.copy() for k, v in ds.extras.items()},
    )


def random_instance(seed: int, k=3, r=2, d_v=4, d_a=3, c_seen=3, c_unseen=2, batch=2):
    """Random tiny problem instance shared by oracle-equivalence tests."""
    from msdn.model import ModelDims, init_params_from_rng
    from msdn.ndmath import Rng

    rng = Rng(seed)
    dims = ModelDims(visual_dim=d_v, attr_dim=d_a, num_attributes=k, num_regions=r)
    params = init_params_from_rng(dims, rng)
    regions = np.stack([rng.uniform(-1.0, 1.0, r, d_v) for _ in range(batch)])
    attrs = rng.uniform(-1.0, 1.0, k, d_a)
    semantics = rng.uniform(0.0, 1.0, c_seen + c_unseen, k)
    labels = np.asarray([rng.next_below(c_seen) for _ in range(batch)])
    seen = np.arange(c_seen)
    unseen = np.arange(c_seen, c_seen + c_unseen)
    return params, regions, attrs, semantics, labels, seen, unseen
